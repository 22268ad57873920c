//! Verification engines: exhaustive enumeration of small SMRD supports and
//! re-randomization Monte Carlo studies.

use itertools::Itertools;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::{binomial, sample_assignment, classify_types, DesignSpec, Factors, PairType, SmrdConfig, TypeMatrix};
use crate::error::{MrdError, Result};
use crate::estimation::{estimand_value, population_type_means, type_mean_estimates, EstimandSpec};
use crate::inference::{confidence_interval, normal_cdf, VarianceSource};
use crate::outcomes::{realize_outcomes, PotentialOutcomeTable};
use crate::rng::derive_seed;
use crate::sum::{compensated_mean, compensated_variance, NeumaierSum};
use crate::variance::{
    conservative_variance, covariance_with, exact_estimand_variance, population_moments, variance_estimate,
    CovarianceCoefficients, CovarianceMatrix4,
};

pub const DEFAULT_ENUMERATION_LIMIT: u128 = 1_000_000;

/// Exact design moments of every estimator, averaged over the full support.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumerationReport {
    pub config: SmrdConfig,
    pub assignment_count: u64,
    /// `E[Ŷ_γ]`.
    pub mean: [f64; 4],
    /// `Cov(Ŷ_γ, Ŷ_γ')`, population (divide-by-N) over the support.
    pub covariance: CovarianceMatrix4,
    /// `E[Σ̂_γ]` of the raw estimator.
    pub mean_variance_estimate: [f64; 4],
    pub estimands: Vec<EnumeratedEstimand>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnumeratedEstimand {
    pub estimand: EstimandSpec,
    pub mean: f64,
    pub variance: f64,
    pub mean_conservative_variance: f64,
}

struct Outcome {
    means: [f64; 4],
    sigma: [f64; 4],
    conservative: Vec<f64>,
}

fn evaluate(potentials: &PotentialOutcomeTable, types: &TypeMatrix, specs: &[EstimandSpec]) -> Result<Outcome> {
    let observed = realize_outcomes(potentials, types)?;
    let means = type_mean_estimates(&observed, types)?;
    let est = variance_estimate(&observed, types)?;
    Ok(Outcome {
        means: means.values,
        sigma: est.raw(),
        conservative: specs.iter().map(|s| conservative_variance(&est, s)).collect(),
    })
}

fn mask(n: usize, chosen: &[usize]) -> Vec<bool> {
    let mut m = vec![false; n];
    for &i in chosen {
        m[i] = true;
    }
    m
}

/// Walks every (buyer subset, seller subset) pair of the SMRD support.
///
/// Subsets are visited in lexicographic order of their sorted index vectors,
/// buyers in the outer loop. Moments use two passes (means, then centered
/// cross products) with compensated sums.
pub fn enumerate_smrd(
    potentials: &PotentialOutcomeTable,
    config: &SmrdConfig,
    specs: &[EstimandSpec],
    limit: u128,
) -> Result<EnumerationReport> {
    config.validate()?;
    if potentials.dims() != (config.rows, config.cols) {
        return Err(MrdError::Dimension {
            expected: format!("{}x{}", config.rows, config.cols),
            found: format!("{}x{}", potentials.rows(), potentials.cols()),
        });
    }
    let count = config.assignment_count();
    if count > limit {
        return Err(MrdError::EnumerationLimit { count, limit });
    }
    let buyer_sets: Vec<Vec<bool>> =
        (0..config.rows).combinations(config.treated_rows).map(|c| mask(config.rows, &c)).collect();
    let seller_sets: Vec<Vec<bool>> =
        (0..config.cols).combinations(config.treated_cols).map(|c| mask(config.cols, &c)).collect();
    debug_assert_eq!(
        (buyer_sets.len() * seller_sets.len()) as u128,
        binomial(config.rows, config.treated_rows) * binomial(config.cols, config.treated_cols)
    );

    let mut mean_sums = [NeumaierSum::new(); 4];
    let mut sigma_sums = [NeumaierSum::new(); 4];
    let mut tau_sums = vec![NeumaierSum::new(); specs.len()];
    let mut cons_sums = vec![NeumaierSum::new(); specs.len()];
    let mut records: Vec<[f64; 4]> = Vec::with_capacity(count as usize);
    for b in &buyer_sets {
        for s in &seller_sets {
            let types = TypeMatrix::from_factors(Factors { buyer: b.clone(), seller: s.clone() });
            let out = evaluate(potentials, &types, specs)?;
            for g in 0..4 {
                mean_sums[g] += out.means[g];
                sigma_sums[g] += out.sigma[g];
            }
            for (k, spec) in specs.iter().enumerate() {
                tau_sums[k] += spec.beta.iter().zip(out.means).map(|(b, m)| b * m).sum::<f64>();
                cons_sums[k] += out.conservative[k];
            }
            records.push(out.means);
        }
    }
    let n = records.len() as f64;
    let mean = mean_sums.map(|s| s.value() / n);
    let mut cov_sums = [[NeumaierSum::new(); 4]; 4];
    let mut tau_sq = vec![NeumaierSum::new(); specs.len()];
    let tau_mean: Vec<f64> = tau_sums.iter().map(|s| s.value() / n).collect();
    for r in &records {
        let d = [0, 1, 2, 3].map(|g| r[g] - mean[g]);
        for a in 0..4 {
            for b in a..4 {
                cov_sums[a][b] += d[a] * d[b];
            }
        }
        for (k, spec) in specs.iter().enumerate() {
            let t = spec.beta.iter().zip(r).map(|(b, m)| b * m).sum::<f64>() - tau_mean[k];
            tau_sq[k] += t * t;
        }
    }
    let mut cov = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in a..4 {
            let v = cov_sums[a][b].value() / n;
            cov[a][b] = v;
            cov[b][a] = v;
        }
    }
    let estimands = specs
        .iter()
        .enumerate()
        .map(|(k, spec)| EnumeratedEstimand {
            estimand: spec.clone(),
            mean: tau_mean[k],
            variance: tau_sq[k].value() / n,
            mean_conservative_variance: cons_sums[k].value() / n,
        })
        .collect();
    Ok(EnumerationReport {
        config: *config,
        assignment_count: records.len() as u64,
        mean,
        covariance: CovarianceMatrix4(cov),
        mean_variance_estimate: sigma_sums.map(|s| s.value() / n),
        estimands,
    })
}

/// Closed-form targets for one table and design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedForms {
    pub population_means: [f64; 4],
    pub covariance: CovarianceMatrix4,
    /// Per-entry contributions `[c_B ζ^B, c_S ζ^S, c_BS ζ^BS]`.
    pub components: [[[f64; 3]; 4]; 4],
    pub estimand_values: Vec<f64>,
    pub estimand_variances: Vec<f64>,
}

pub fn closed_forms(
    potentials: &PotentialOutcomeTable,
    config: &SmrdConfig,
    coefficients: &CovarianceCoefficients,
    specs: &[EstimandSpec],
) -> Result<ClosedForms> {
    let moments = population_moments(potentials, config)?;
    let covariance = covariance_with(&moments, coefficients);
    let mut components = [[[0.0; 3]; 4]; 4];
    for a in PairType::ALL {
        for b in PairType::ALL {
            let [cb, cs, cbs] = coefficients.entries[a.index()][b.index()];
            components[a.index()][b.index()] =
                [cb * moments.zeta_b(a, b), cs * moments.zeta_s(a, b), cbs * moments.zeta_bs(a, b)];
        }
    }
    let means = population_type_means(potentials);
    Ok(ClosedForms {
        population_means: means.values,
        covariance,
        components,
        estimand_values: specs.iter().map(|s| estimand_value(s, &means)).collect(),
        estimand_variances: specs.iter().map(|s| exact_estimand_variance(&covariance, s)).collect(),
    })
}

/// Tolerances for [`oracle_compare`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative tolerance for means, measured against `max(|target|, C_2)`.
    pub relative: f64,
    /// Absolute tolerance for second moments.
    pub absolute: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { relative: 1e-12, absolute: 1e-10 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    /// `E[Ŷ_γ] = ȳ_γ`.
    TypeMean,
    /// `E[τ̂(β)] = τ(β)`.
    EstimandMean,
    /// Enumerated `Cov(Ŷ_γ, Ŷ_γ')` equals the closed form.
    Covariance,
    /// Enumerated `Var(τ̂(β))` equals `βᵀ Σ β`.
    EstimandVariance,
    /// `E[Σ̂_γ] = Var(Ŷ_γ)`.
    VarianceEstimator,
    /// `E[conservative variance] ≥ Var(τ̂(β))`.
    Conservative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub kind: CheckKind,
    pub types: Option<(PairType, PairType)>,
    pub estimand: Option<String>,
    pub closed_form: f64,
    pub enumerated: f64,
    /// `enumerated - closed_form`.
    pub discrepancy: f64,
    pub tolerance: f64,
    /// Closed-form split `[B, S, BS]` for covariance checks.
    pub components: Option<[f64; 3]>,
    pub pass: bool,
}

impl Check {
    pub fn label(&self) -> String {
        let kind = match self.kind {
            CheckKind::TypeMean => "mean",
            CheckKind::EstimandMean => "estimand_mean",
            CheckKind::Covariance => "cov",
            CheckKind::EstimandVariance => "estimand_var",
            CheckKind::VarianceEstimator => "var_estimator",
            CheckKind::Conservative => "conservative",
        };
        match (&self.types, &self.estimand) {
            (Some((a, b)), _) => format!("{kind}({a},{b})"),
            (None, Some(e)) => format!("{kind}({e})"),
            (None, None) => kind.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub assignment_count: u64,
    pub checks: Vec<Check>,
    pub pass: bool,
}

impl OracleReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }

    pub fn max_discrepancy(&self, kind: CheckKind) -> f64 {
        self.checks.iter().filter(|c| c.kind == kind).fold(0.0, |m, c| m.max(c.discrepancy.abs()))
    }
}

/// Enumerates the support and compares every exact moment with its closed form.
pub fn oracle_compare(
    potentials: &PotentialOutcomeTable,
    config: &SmrdConfig,
    tolerances: Tolerances,
) -> Result<OracleReport> {
    oracle_compare_with(potentials, config, &CovarianceCoefficients::closed_form(config), tolerances)
}

/// [`oracle_compare`] against an explicit covariance coefficient table.
pub fn oracle_compare_with(
    potentials: &PotentialOutcomeTable,
    config: &SmrdConfig,
    coefficients: &CovarianceCoefficients,
    tolerances: Tolerances,
) -> Result<OracleReport> {
    let specs = EstimandSpec::presets();
    let enumerated = enumerate_smrd(potentials, config, &specs, DEFAULT_ENUMERATION_LIMIT)?;
    let closed = closed_forms(potentials, config, coefficients, &specs)?;
    let scale = potentials.bound();
    let mut checks = Vec::new();
    let mut push = |kind, types, estimand: Option<String>, closed_form: f64, enumerated: f64, tolerance, components| {
        let discrepancy = enumerated - closed_form;
        let pass = match kind {
            CheckKind::Conservative => enumerated >= closed_form - tolerance,
            _ => discrepancy.abs() <= tolerance,
        };
        checks.push(Check { kind, types, estimand, closed_form, enumerated, discrepancy, tolerance, components, pass });
    };
    let rel = |target: f64| tolerances.relative * target.abs().max(scale);
    for ty in PairType::ALL {
        let g = ty.index();
        let target = closed.population_means[g];
        push(CheckKind::TypeMean, Some((ty, ty)), None, target, enumerated.mean[g], rel(target), None);
    }
    for (k, spec) in specs.iter().enumerate() {
        let target = closed.estimand_values[k];
        push(CheckKind::EstimandMean, None, Some(spec.label()), target, enumerated.estimands[k].mean, rel(target), None);
    }
    for a in PairType::ALL {
        for b in PairType::ALL {
            if b < a {
                continue;
            }
            push(
                CheckKind::Covariance,
                Some((a, b)),
                None,
                closed.covariance.get(a, b),
                enumerated.covariance.get(a, b),
                tolerances.absolute,
                Some(closed.components[a.index()][b.index()]),
            );
        }
    }
    for ty in PairType::ALL {
        push(
            CheckKind::VarianceEstimator,
            Some((ty, ty)),
            None,
            closed.covariance.variance(ty),
            enumerated.mean_variance_estimate[ty.index()],
            tolerances.absolute,
            None,
        );
    }
    for (k, spec) in specs.iter().enumerate() {
        let e = &enumerated.estimands[k];
        push(CheckKind::EstimandVariance, None, Some(spec.label()), closed.estimand_variances[k], e.variance, tolerances.absolute, None);
        push(
            CheckKind::Conservative,
            None,
            Some(spec.label()),
            closed.estimand_variances[k],
            e.mean_conservative_variance,
            tolerances.absolute,
            None,
        );
    }
    let pass = checks.iter().all(|c| c.pass);
    Ok(OracleReport { assignment_count: enumerated.assignment_count, checks, pass })
}

/// One histogram bin, `[lo, hi)` (the last bin also includes `hi`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
    pub count: u64,
}

pub const HISTOGRAM_BINS: usize = 50;

/// Equal-width histogram over `[min, max]`; a constant sample lands in one
/// zero-width bin followed by empty ones.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    if values.is_empty() || bins == 0 {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let k = if width > 0.0 { (((v - lo) / width) as usize).min(bins - 1) } else { 0 };
        counts[k] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(k, count)| Bin {
            lo: lo + width * k as f64,
            hi: if k + 1 == bins { hi } else { lo + width * (k + 1) as f64 },
            count,
        })
        .collect()
}

/// Kolmogorov–Smirnov distance between a sample and the standard normal.
pub fn ks_distance_normal(sample: &[f64]) -> f64 {
    let mut z = sample.to_vec();
    z.sort_by(f64::total_cmp);
    let n = z.len() as f64;
    z.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let f = normal_cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeSummary {
    pub pair_type: PairType,
    pub population_mean: f64,
    pub exact_variance: f64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    /// Monte Carlo standard error of `mean_estimate`.
    pub mc_standard_error: f64,
    pub mean_variance_estimate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSummary {
    pub estimand: EstimandSpec,
    pub true_value: f64,
    pub exact_variance: f64,
    pub mean_estimate: f64,
    pub empirical_variance: f64,
    pub mean_conservative_variance: f64,
    pub coverage: f64,
    /// KS distance of `(τ̂ - τ) / √Var` from N(0, 1); absent when `Var = 0`.
    pub ks_distance: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureHistogram {
    pub figure: u8,
    /// `"mean"` for the estimator, `"var"` for its variance estimate.
    pub panel: String,
    pub statistic: String,
    /// Population value marked on the figure.
    pub reference: f64,
    pub bins: Vec<Bin>,
}

impl FigureHistogram {
    pub fn file_name(&self) -> String {
        format!("fig{}_{}_{}.csv", self.figure, self.panel, self.statistic)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McReport {
    pub config: SmrdConfig,
    pub replications: usize,
    pub level: f64,
    pub master_seed: u64,
    pub types: Vec<TypeSummary>,
    pub estimands: Vec<EstimandSummary>,
    pub histograms: Vec<FigureHistogram>,
}

/// Figures and their statistic: types for the per-type panels, estimand
/// preset names for the rest.
pub const FIGURES: [(u8, &str); 8] = [
    (1, "cc"),
    (2, "spill_b"),
    (3, "ib"),
    (4, "is"),
    (5, "tr"),
    (6, "direct"),
    (7, "spill_s"),
    (8, "ate"),
];

struct Replicate {
    means: [f64; 4],
    sigma: [f64; 4],
    tau: Vec<f64>,
    conservative: Vec<f64>,
    covered: Vec<bool>,
}

/// Re-draws the SMRD assignment `reps` times over fixed potential outcomes.
///
/// Replication `r` uses seed `derive_seed(master_seed, r)`; replications run
/// on the current rayon pool and are aggregated in index order, so the report
/// does not depend on the thread count.
pub fn rerandomization_study(
    potentials: &PotentialOutcomeTable,
    config: &SmrdConfig,
    specs: &[EstimandSpec],
    reps: usize,
    level: f64,
    master_seed: u64,
) -> Result<McReport> {
    config.validate()?;
    if reps < 2 {
        return Err(MrdError::Config(format!("a re-randomization study needs at least 2 replications (got {reps})")));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(MrdError::Config(format!("confidence level must lie in (0, 1) (got {level})")));
    }
    let moments = population_moments(potentials, config)?;
    let cov = covariance_with(&moments, &CovarianceCoefficients::closed_form(config));
    let pop = population_type_means(potentials);
    let truth: Vec<f64> = specs.iter().map(|s| estimand_value(s, &pop)).collect();
    let spec_design = DesignSpec::from(*config);

    let run = |r: usize| -> Result<Replicate> {
        let assignment = sample_assignment(&spec_design, derive_seed(master_seed, r as u64))?;
        let types = classify_types(&assignment)?;
        let observed = realize_outcomes(potentials, &types)?;
        let means = type_mean_estimates(&observed, &types)?;
        let est = variance_estimate(&observed, &types)?;
        let mut tau = Vec::with_capacity(specs.len());
        let mut conservative = Vec::with_capacity(specs.len());
        let mut covered = Vec::with_capacity(specs.len());
        for (k, spec) in specs.iter().enumerate() {
            let t = estimand_value(spec, &means);
            let v = conservative_variance(&est, spec);
            let ci = confidence_interval(t, v, level, VarianceSource::EstimatedConservative)?;
            tau.push(t);
            conservative.push(v);
            covered.push(ci.contains(truth[k]));
        }
        Ok(Replicate { means: means.values, sigma: est.raw(), tau, conservative, covered })
    };
    let records: Vec<Replicate> = (0..reps)
        .into_par_iter()
        .map(|r| run(r).map_err(|e| MrdError::Replication { index: r, source: Box::new(e) }))
        .collect::<Result<_>>()?;

    let column = |f: &dyn Fn(&Replicate) -> f64| -> Vec<f64> { records.iter().map(f).collect() };
    let mut types = Vec::with_capacity(4);
    let mut type_columns = Vec::with_capacity(4);
    for ty in PairType::ALL {
        let g = ty.index();
        let means = column(&|r| r.means[g]);
        let sigma = column(&|r| r.sigma[g]);
        let var = compensated_variance(&means, 1);
        types.push(TypeSummary {
            pair_type: ty,
            population_mean: pop.values[g],
            exact_variance: cov.variance(ty),
            mean_estimate: compensated_mean(&means),
            empirical_variance: var,
            mc_standard_error: (var / reps as f64).sqrt(),
            mean_variance_estimate: compensated_mean(&sigma),
        });
        type_columns.push((means, sigma));
    }
    let mut estimands = Vec::with_capacity(specs.len());
    let mut estimand_columns = Vec::with_capacity(specs.len());
    for (k, spec) in specs.iter().enumerate() {
        let tau = column(&|r| r.tau[k]);
        let cons = column(&|r| r.conservative[k]);
        let hits = records.iter().filter(|r| r.covered[k]).count();
        let exact_variance = exact_estimand_variance(&cov, spec);
        let ks_distance = (exact_variance > 0.0).then(|| {
            let sd = exact_variance.sqrt();
            let z: Vec<f64> = tau.iter().map(|t| (t - truth[k]) / sd).collect();
            ks_distance_normal(&z)
        });
        estimands.push(EstimandSummary {
            estimand: spec.clone(),
            true_value: truth[k],
            exact_variance,
            mean_estimate: compensated_mean(&tau),
            empirical_variance: compensated_variance(&tau, 1),
            mean_conservative_variance: compensated_mean(&cons),
            coverage: hits as f64 / reps as f64,
            ks_distance,
        });
        estimand_columns.push((tau, cons));
    }

    let mut histograms = Vec::new();
    for (figure, name) in FIGURES {
        let found = PairType::ALL
            .iter()
            .find(|t| t.label() == name)
            .map(|t| {
                let g = t.index();
                (&type_columns[g], pop.values[g], cov.variance(*t))
            })
            .or_else(|| {
                specs.iter().position(|s| s.name.as_deref() == Some(name)).map(|k| {
                    (&estimand_columns[k], truth[k], estimands[k].exact_variance)
                })
            });
        if let Some(((values, variances), mean_ref, var_ref)) = found {
            histograms.push(FigureHistogram {
                figure,
                panel: "mean".into(),
                statistic: name.into(),
                reference: mean_ref,
                bins: histogram(values, HISTOGRAM_BINS),
            });
            histograms.push(FigureHistogram {
                figure,
                panel: "var".into(),
                statistic: name.into(),
                reference: var_ref,
                bins: histogram(variances, HISTOGRAM_BINS),
            });
        }
    }

    Ok(McReport { config: *config, replications: reps, level, master_seed, types, estimands, histograms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::outcomes::{generate_potential_outcomes, OutcomeModelConfig};
    use ndarray::Array2;

    fn table(rows: usize, cols: usize, seed: u64) -> PotentialOutcomeTable {
        generate_potential_outcomes(&OutcomeModelConfig::reference(), rows, cols, seed).unwrap()
    }

    #[test]
    fn enumeration_counts() {
        let c = SmrdConfig::new(4, 4, 2, 2).unwrap();
        let r = enumerate_smrd(&table(4, 4, 1), &c, &[], DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(r.assignment_count, 36);
        let c = SmrdConfig::new(5, 6, 2, 3).unwrap();
        let r = enumerate_smrd(&table(5, 6, 1), &c, &[], DEFAULT_ENUMERATION_LIMIT).unwrap();
        assert_eq!(r.assignment_count, 200);
    }

    #[test]
    fn enumeration_refuses_large_support() {
        let c = SmrdConfig::new(30, 30, 15, 15).unwrap();
        let t = PotentialOutcomeTable::constant(30, 30, [0.0; 4]).unwrap();
        match enumerate_smrd(&t, &c, &[], DEFAULT_ENUMERATION_LIMIT) {
            Err(MrdError::EnumerationLimit { count, .. }) => assert_eq!(count, 155_117_520u128 * 155_117_520),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn oracle_passes_on_random_table() {
        let c = SmrdConfig::new(4, 4, 2, 2).unwrap();
        let r = oracle_compare(&table(4, 4, 9), &c, Tolerances::default()).unwrap();
        assert!(r.pass, "{:?}", r.failures().collect::<Vec<_>>());
    }

    #[test]
    fn corrupted_coefficient_is_named() {
        let c = SmrdConfig::new(4, 4, 2, 2).unwrap();
        let mut coeffs = CovarianceCoefficients::closed_form(&c);
        coeffs.entries[PairType::Is.index()][PairType::Cc.index()][0] *= 2.0;
        coeffs.entries[PairType::Cc.index()][PairType::Is.index()][0] *= 2.0;
        let r = oracle_compare_with(&table(4, 4, 2), &c, &coeffs, Tolerances::default()).unwrap();
        assert!(!r.pass);
        let failed: Vec<String> =
            r.failures().filter(|f| f.kind == CheckKind::Covariance).map(|f| f.label()).collect();
        assert_eq!(failed, vec!["cov(cc,is)".to_string()]);
    }

    #[test]
    fn additive_table_has_zero_interaction_column() {
        let y = Array2::from_shape_fn((4, 4), |(i, j)| (2 * i) as f64 - j as f64);
        let t = PotentialOutcomeTable::new(y.clone(), y.clone() + 1.0, y.clone() * 3.0, y * -1.0).unwrap();
        let c = SmrdConfig::new(4, 4, 2, 2).unwrap();
        let r = oracle_compare(&t, &c, Tolerances::default()).unwrap();
        assert!(r.pass);
        for ch in r.checks.iter().filter(|c| c.kind == CheckKind::Covariance) {
            assert_eq!(ch.components.unwrap()[2], 0.0, "{}", ch.label());
        }
    }

    #[test]
    fn histogram_counts_sum() {
        let v: Vec<f64> = (0..1000).map(|k| (k as f64).sqrt()).collect();
        let h = histogram(&v, 50);
        assert_eq!(h.len(), 50);
        assert_eq!(h.iter().map(|b| b.count).sum::<u64>(), 1000);
        assert_eq!(h[0].lo, 0.0);
        assert_eq!(h[49].hi, v[999]);
        let flat = histogram(&[2.0; 7], 50);
        assert_eq!(flat[0].count, 7);
    }

    #[test]
    fn ks_distance_of_normal_quantiles_is_small() {
        let n = 2000;
        let z: Vec<f64> = (0..n).map(|k| crate::inference::normal_quantile((k as f64 + 0.5) / n as f64)).collect();
        assert!(ks_distance_normal(&z) <= 0.5 / n as f64 + 1e-12);
        let shifted: Vec<f64> = z.iter().map(|v| v + 1.0).collect();
        assert!(ks_distance_normal(&shifted) > 0.3);
    }

    #[test]
    fn constant_study_is_degenerate() {
        let c = SmrdConfig::new(6, 5, 2, 2).unwrap();
        let t = PotentialOutcomeTable::constant(6, 5, [3.0, 2.0, 1.0, 4.0]).unwrap();
        let r = rerandomization_study(&t, &c, &EstimandSpec::presets(), 20, 0.95, 1).unwrap();
        for s in &r.types {
            assert_eq!(s.empirical_variance, 0.0);
            assert_eq!(s.mean_variance_estimate, 0.0);
        }
        for e in &r.estimands {
            assert_eq!(e.coverage, 1.0);
            assert!(e.ks_distance.is_none());
        }
        assert_eq!(r.histograms.len(), 16);
        assert!(r.histograms.iter().all(|h| h.bins.iter().map(|b| b.count).sum::<u64>() == 20));
    }

    #[test]
    fn study_rejects_bad_arguments() {
        let c = SmrdConfig::new(6, 5, 2, 2).unwrap();
        let t = PotentialOutcomeTable::constant(6, 5, [0.0; 4]).unwrap();
        assert!(rerandomization_study(&t, &c, &[], 1, 0.95, 0).is_err());
        assert!(rerandomization_study(&t, &c, &[], 10, 1.5, 0).is_err());
    }
}
