//! File formats: assignment CSV, long-format outcome CSV, histogram CSV, the
//! simulation configuration, and the analysis report.

use std::collections::HashMap;
use std::io::{Read, Write};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::{infer_factors, Assignment, Factors, PairType, SmrdConfig, TypeMatrix};
use crate::error::{MrdError, Result};
use crate::estimation::{estimand_value, type_mean_estimates, EstimandSpec};
use crate::harness::Bin;
use crate::inference::{clt_diagnostic, confidence_interval, CltDiagnostic, ConfidenceInterval, VarianceSource};
use crate::outcomes::OutcomeModelConfig;
use crate::variance::{conservative_variance, variance_estimate};

pub const SCHEMA_VERSION: &str = "1.0.0";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Formats a float with 17 significant digits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `buyer_id,s1,...,sJ` followed by one 0/1 row per buyer.
pub fn write_assignment_csv<W: Write>(writer: W, assignment: &Assignment) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["buyer_id".to_string()];
    header.extend((1..=assignment.cols()).map(|j| format!("s{j}")));
    w.write_record(&header)?;
    for (i, row) in assignment.matrix().rows().into_iter().enumerate() {
        let mut rec = vec![format!("b{}", i + 1)];
        rec.extend(row.iter().map(|&t| if t { "1" } else { "0" }.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses an assignment CSV; factors are attached when the matrix is a product.
pub fn read_assignment_csv<R: Read>(reader: R) -> Result<Assignment> {
    let mut r = csv::Reader::from_reader(reader);
    let cols = r.headers()?.len().saturating_sub(1);
    if cols == 0 {
        return Err(MrdError::Input("assignment CSV needs a buyer_id column and at least one seller column".into()));
    }
    let mut cells = Vec::new();
    let mut rows = 0;
    for (k, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        if rec.len() != cols + 1 {
            return Err(MrdError::Input(format!("line {line}: expected {} fields, found {}", cols + 1, rec.len())));
        }
        for f in rec.iter().skip(1) {
            cells.push(match f.trim() {
                "1" => true,
                "0" => false,
                other => return Err(MrdError::Input(format!("line {line}: assignment cell '{other}' is not 0 or 1"))),
            });
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(MrdError::Input("assignment CSV has no rows".into()));
    }
    let matrix = Array2::from_shape_vec((rows, cols), cells).expect("row lengths checked");
    Ok(match infer_factors(&matrix) {
        Ok(f) => Assignment::from_factors(f),
        Err(_) => Assignment::from_matrix(matrix),
    })
}

/// Observed outcomes of a conjunctive experiment, ingested from long format.
#[derive(Clone, Debug, PartialEq)]
pub struct ObservedData {
    /// External ids in first-appearance order; index = dense row index.
    pub buyer_ids: Vec<String>,
    pub seller_ids: Vec<String>,
    pub types: TypeMatrix,
    pub observed: Array2<f64>,
}

impl ObservedData {
    pub fn config(&self) -> SmrdConfig {
        let f = self.types.factors();
        SmrdConfig {
            rows: f.buyer.len(),
            cols: f.seller.len(),
            treated_rows: f.buyer.iter().filter(|&&b| b).count(),
            treated_cols: f.seller.iter().filter(|&&s| s).count(),
        }
    }
}

#[derive(Deserialize)]
struct LongRow {
    buyer_id: String,
    seller_id: String,
    w_buyer: String,
    w_seller: String,
    outcome: f64,
}

fn parse_flag(v: &str, column: &str, line: usize) -> Result<bool> {
    match v.trim() {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(MrdError::Input(format!("line {line}: {column} must be 0 or 1 (got '{other}')"))),
    }
}

fn intern(ids: &mut Vec<String>, index: &mut HashMap<String, usize>, id: String) -> usize {
    *index.entry(id.clone()).or_insert_with(|| {
        ids.push(id);
        ids.len() - 1
    })
}

/// Reads `buyer_id,seller_id,w_buyer,w_seller,outcome`, one row per pair.
///
/// Every buyer must carry one `w_buyer` value across its rows (likewise for
/// sellers), every buyer–seller pair must appear exactly once, and outcomes
/// must be finite.
pub fn read_outcomes_csv<R: Read>(reader: R) -> Result<ObservedData> {
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let expected = ["buyer_id", "seller_id", "w_buyer", "w_seller", "outcome"];
    let headers: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if headers != expected {
        return Err(MrdError::Input(format!("outcome CSV header must be {} (got {})", expected.join(","), headers.join(","))));
    }
    let mut buyer_ids = Vec::new();
    let mut seller_ids = Vec::new();
    let mut buyer_index = HashMap::new();
    let mut seller_index = HashMap::new();
    let mut buyer_flag: Vec<(bool, usize)> = Vec::new();
    let mut seller_flag: Vec<(bool, usize)> = Vec::new();
    let mut cells: HashMap<(usize, usize), (f64, usize)> = HashMap::new();
    for (k, rec) in r.deserialize::<LongRow>().enumerate() {
        let line = k + 2;
        let row = rec.map_err(|e| MrdError::Input(format!("line {line}: {e}")))?;
        let wb = parse_flag(&row.w_buyer, "w_buyer", line)?;
        let ws = parse_flag(&row.w_seller, "w_seller", line)?;
        if !row.outcome.is_finite() {
            return Err(MrdError::Input(format!("line {line}: outcome must be finite")));
        }
        let (bid, sid) = (row.buyer_id.clone(), row.seller_id.clone());
        let i = intern(&mut buyer_ids, &mut buyer_index, row.buyer_id);
        let j = intern(&mut seller_ids, &mut seller_index, row.seller_id);
        if i == buyer_flag.len() {
            buyer_flag.push((wb, line));
        } else if buyer_flag[i].0 != wb {
            return Err(MrdError::Input(format!(
                "inconsistent buyer factor for buyer '{bid}': w_buyer = {} on line {} but {} on line {line}",
                buyer_flag[i].0 as u8, buyer_flag[i].1, wb as u8
            )));
        }
        if j == seller_flag.len() {
            seller_flag.push((ws, line));
        } else if seller_flag[j].0 != ws {
            return Err(MrdError::Input(format!(
                "inconsistent seller factor for seller '{sid}': w_seller = {} on line {} but {} on line {line}",
                seller_flag[j].0 as u8, seller_flag[j].1, ws as u8
            )));
        }
        if let Some((_, first)) = cells.insert((i, j), (row.outcome, line)) {
            return Err(MrdError::Input(format!(
                "duplicate pair (buyer '{bid}', seller '{sid}') on lines {first} and {line}"
            )));
        }
    }
    let (rows, cols) = (buyer_ids.len(), seller_ids.len());
    if rows == 0 {
        return Err(MrdError::Input("outcome CSV has no data rows".into()));
    }
    let mut observed = Array2::zeros((rows, cols));
    let mut missing = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            match cells.get(&(i, j)) {
                Some(&(y, _)) => observed[[i, j]] = y,
                None => missing.push(format!("({}, {})", buyer_ids[i], seller_ids[j])),
            }
        }
    }
    if !missing.is_empty() {
        let shown: Vec<_> = missing.iter().take(5).cloned().collect();
        return Err(MrdError::Input(format!(
            "{} missing buyer-seller pairs, e.g. {}",
            missing.len(),
            shown.join(", ")
        )));
    }
    let factors = Factors {
        buyer: buyer_flag.into_iter().map(|(f, _)| f).collect(),
        seller: seller_flag.into_iter().map(|(f, _)| f).collect(),
    };
    Ok(ObservedData { buyer_ids, seller_ids, types: TypeMatrix::from_factors(factors), observed })
}

/// Writes observed outcomes in long format with ids `b1..bI`, `s1..sJ`.
pub fn write_outcomes_csv<W: Write>(writer: W, types: &TypeMatrix, observed: &Array2<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["buyer_id", "seller_id", "w_buyer", "w_seller", "outcome"])?;
    let f = types.factors();
    for ((i, j), y) in observed.indexed_iter() {
        w.write_record([
            format!("b{}", i + 1),
            format!("s{}", j + 1),
            (f.buyer[i] as u8).to_string(),
            (f.seller[j] as u8).to_string(),
            fmt_f64(*y),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_histogram_csv<W: Write>(writer: W, bins: &[Bin]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["bin_lo", "bin_hi", "count"])?;
    for b in bins {
        w.write_record([fmt_f64(b.lo), fmt_f64(b.hi), b.count.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Configuration of a re-randomization study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub design: SmrdConfig,
    pub outcomes: OutcomeModelConfig,
    /// Seed for the fixed potential-outcome tables.
    pub outcome_seed: u64,
    #[serde(default = "default_level")]
    pub level: f64,
    /// Estimand names or coefficient lists; defaults to the four presets.
    #[serde(default)]
    pub estimands: Vec<String>,
}

fn default_level() -> f64 {
    0.95
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: SimulationConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        self.outcomes.validate()?;
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(MrdError::Config(format!("level must lie in (0, 1) (got {})", self.level)));
        }
        self.estimand_specs().map(|_| ())
    }

    pub fn estimand_specs(&self) -> Result<Vec<EstimandSpec>> {
        if self.estimands.is_empty() {
            return Ok(EstimandSpec::presets().to_vec());
        }
        self.estimands.iter().map(|s| s.parse()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignEcho {
    pub rows: usize,
    pub cols: usize,
    pub treated_rows: usize,
    pub treated_cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeRecord {
    pub pair_type: PairType,
    pub mean: f64,
    pub rows: usize,
    pub cols: usize,
    pub variance_raw: f64,
    pub variance_clamped: f64,
    pub sigma_b: f64,
    pub sigma_s: f64,
    pub sigma_bs: f64,
    pub eta_b: f64,
    pub eta_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandRecord {
    pub name: String,
    pub beta: [f64; 4],
    pub estimate: f64,
    pub conservative_variance: f64,
    pub interval: ConfidenceInterval,
    pub diagnostic: CltDiagnostic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool_version: String,
    pub input_file: Option<String>,
    pub input_sha256: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisReport {
    pub schema_version: String,
    pub design: DesignEcho,
    pub buyer_ids: Vec<String>,
    pub seller_ids: Vec<String>,
    pub types: Vec<TypeRecord>,
    pub estimands: Vec<EstimandRecord>,
    pub provenance: Provenance,
}

/// Estimates, conservative variances, intervals and diagnostics for every
/// requested estimand.
///
/// The diagnostic uses the conservative variance and, since only realized
/// outcomes are known, the largest observed `|y|` as the outcome bound.
pub fn analyze(data: &ObservedData, specs: &[EstimandSpec], level: f64, provenance: Provenance) -> Result<AnalysisReport> {
    let config = data.config();
    for ty in PairType::ALL {
        let (n, m) = data.types.size(ty);
        if n < 2 || m < 2 {
            return Err(MrdError::Estimation(format!(
                "type {ty} spans {n} buyers and {m} sellers; analysis needs at least two of each"
            )));
        }
    }
    let means = type_mean_estimates(&data.observed, &data.types)?;
    let est = variance_estimate(&data.observed, &data.types)?;
    let c1 = config.balance_bound();
    let c2 = data.observed.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let types = PairType::ALL
        .iter()
        .map(|&ty| {
            let e = est.get(ty);
            let (rows, cols) = means.sizes[ty.index()];
            TypeRecord {
                pair_type: ty,
                mean: means.get(ty),
                rows,
                cols,
                variance_raw: e.raw,
                variance_clamped: e.clamped,
                sigma_b: e.sigma_b,
                sigma_s: e.sigma_s,
                sigma_bs: e.sigma_bs,
                eta_b: e.eta_b,
                eta_s: e.eta_s,
            }
        })
        .collect();
    let mut estimands = Vec::with_capacity(specs.len());
    for spec in specs {
        let norm = spec.l2_norm();
        if norm == 0.0 {
            return Err(MrdError::Config(format!("estimand {spec} has all-zero coefficients")));
        }
        let estimate = estimand_value(spec, &means);
        let variance = conservative_variance(&est, spec);
        estimands.push(EstimandRecord {
            name: spec.label(),
            beta: spec.beta,
            estimate,
            conservative_variance: variance,
            interval: confidence_interval(estimate, variance, level, VarianceSource::EstimatedConservative)?,
            diagnostic: clt_diagnostic(c1, c2.max(f64::MIN_POSITIVE), config.rows, config.cols, variance, norm)?,
        });
    }
    Ok(AnalysisReport {
        schema_version: SCHEMA_VERSION.to_string(),
        design: DesignEcho {
            rows: config.rows,
            cols: config.cols,
            treated_rows: config.treated_rows,
            treated_cols: config.treated_cols,
        },
        buyer_ids: data.buyer_ids.clone(),
        seller_ids: data.seller_ids.clone(),
        types,
        estimands,
        provenance,
    })
}
