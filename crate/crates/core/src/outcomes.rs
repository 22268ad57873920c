//! Type-indexed potential outcomes, the Gaussian generative model used by the
//! simulation study, and realization of observed outcomes.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design::{PairType, TypeMatrix};
use crate::error::{MrdError, Result};
use crate::rng::stream_rng;
use crate::sum::compensated_sum;

/// Four `I × J` outcome tables, one per pair type, in `PairType::ALL` order.
///
/// Storing only type-indexed outcomes is what enforces local interference:
/// a pair's outcome can depend on the assignment only through its type.
#[derive(Clone, Debug, PartialEq)]
pub struct PotentialOutcomeTable {
    tables: [Array2<f64>; 4],
}

impl PotentialOutcomeTable {
    pub fn new(cc: Array2<f64>, ib: Array2<f64>, is: Array2<f64>, tr: Array2<f64>) -> Result<Self> {
        let dim = cc.dim();
        if dim.0 == 0 || dim.1 == 0 {
            return Err(MrdError::Config(format!("outcome tables must be nonempty (got {}x{})", dim.0, dim.1)));
        }
        for (ty, t) in [(PairType::Ib, &ib), (PairType::Is, &is), (PairType::Tr, &tr)] {
            if t.dim() != dim {
                return Err(MrdError::Dimension {
                    expected: format!("{}x{}", dim.0, dim.1),
                    found: format!("{}x{} for y({ty})", t.dim().0, t.dim().1),
                });
            }
        }
        Ok(PotentialOutcomeTable { tables: [cc, ib, is, tr] })
    }

    /// Every cell of table `γ` equal to `values[γ]`.
    pub fn constant(rows: usize, cols: usize, values: [f64; 4]) -> Result<Self> {
        let [a, b, c, d] = values.map(|v| Array2::from_elem((rows, cols), v));
        Self::new(a, b, c, d)
    }

    pub fn get(&self, ty: PairType) -> &Array2<f64> {
        &self.tables[ty.index()]
    }

    pub fn rows(&self) -> usize {
        self.tables[0].nrows()
    }

    pub fn cols(&self) -> usize {
        self.tables[0].ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.tables[0].dim()
    }

    /// `C_2 = max |y_ij(γ)|` over all cells and types.
    pub fn bound(&self) -> f64 {
        self.tables.iter().flat_map(|t| t.iter()).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Full-table average `ȳ_γ`.
    pub fn mean(&self, ty: PairType) -> f64 {
        let t = self.get(ty);
        compensated_sum(t.iter().copied()) / t.len() as f64
    }

    /// Per-buyer averages `ȳ^B_i(γ)`.
    pub fn buyer_means(&self, ty: PairType) -> Vec<f64> {
        let t = self.get(ty);
        t.rows().into_iter().map(|r| compensated_sum(r.iter().copied()) / r.len() as f64).collect()
    }

    /// Per-seller averages `ȳ^S_j(γ)`.
    pub fn seller_means(&self, ty: PairType) -> Vec<f64> {
        let t = self.get(ty);
        t.columns().into_iter().map(|c| compensated_sum(c.iter().copied()) / c.len() as f64).collect()
    }

    /// Adds `c` to every cell of every table.
    pub fn shifted(&self, c: f64) -> Self {
        PotentialOutcomeTable { tables: self.tables.clone().map(|t| t + c) }
    }

    /// `y(ib) = y(cc)` everywhere: treating other pairs of a buyer does not
    /// move that buyer's control outcomes.
    pub fn no_buyer_spillover(&self) -> bool {
        self.get(PairType::Ib) == self.get(PairType::Cc)
    }

    /// `y(is) = y(cc)` everywhere.
    pub fn no_seller_spillover(&self) -> bool {
        self.get(PairType::Is) == self.get(PairType::Cc)
    }

    /// `y(cc) = y(ib) = y(is)`: control outcomes ignore all other assignments.
    pub fn strong_no_interference(&self) -> bool {
        self.no_buyer_spillover() && self.no_seller_spillover()
    }
}

/// Gaussian components `F_ℓ = N(p_ℓ μ_ℓ, σ_ℓ²)` for `ℓ ∈ {0, B, S, 1}`.
///
/// `p_0 = p_1 = 1`; `p_b` and `p_s` are the treated buyer and seller
/// fractions of the design.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModelConfig {
    pub mu_0: f64,
    pub mu_b: f64,
    pub mu_s: f64,
    pub mu_1: f64,
    pub sigma_0: f64,
    pub sigma_b: f64,
    pub sigma_s: f64,
    pub sigma_1: f64,
    pub p_b: f64,
    pub p_s: f64,
}

impl OutcomeModelConfig {
    /// The configuration of the reference simulation study.
    pub fn reference() -> Self {
        OutcomeModelConfig {
            mu_0: 3.0,
            mu_b: -1.0,
            mu_s: -1.0,
            mu_1: 6.0,
            sigma_0: 1.0,
            sigma_b: 1.0,
            sigma_s: 1.0,
            sigma_1: 1.0,
            p_b: 0.45,
            p_s: 0.55,
        }
    }

    /// The same means with every standard deviation set to `sigma`.
    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma_0 = sigma;
        self.sigma_b = sigma;
        self.sigma_s = sigma;
        self.sigma_1 = sigma;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let values = [
            self.mu_0, self.mu_b, self.mu_s, self.mu_1, self.sigma_0, self.sigma_b, self.sigma_s,
            self.sigma_1, self.p_b, self.p_s,
        ];
        if values.iter().any(|v| !v.is_finite()) {
            return Err(MrdError::Config("outcome model parameters must be finite".into()));
        }
        for (name, s) in [
            ("sigma_0", self.sigma_0),
            ("sigma_b", self.sigma_b),
            ("sigma_s", self.sigma_s),
            ("sigma_1", self.sigma_1),
        ] {
            if s < 0.0 {
                return Err(MrdError::Config(format!("{name} must be nonnegative (got {s})")));
            }
        }
        Ok(())
    }

    /// Mean of each table's cell distribution, in `PairType::ALL` order.
    pub fn type_means(&self) -> [f64; 4] {
        let f0 = self.mu_0;
        let fb = self.p_b * self.mu_b;
        let fs = self.p_s * self.mu_s;
        let f1 = self.mu_1;
        [f0, f0 + fb, f0 + fs, f1 + fb + fs]
    }

    /// Standard deviation of each table's cell distribution.
    pub fn type_sds(&self) -> [f64; 4] {
        let v0 = self.sigma_0 * self.sigma_0;
        let vb = self.sigma_b * self.sigma_b;
        let vs = self.sigma_s * self.sigma_s;
        let v1 = self.sigma_1 * self.sigma_1;
        [v0, v0 + vb, v0 + vs, v1 + vb + vs].map(f64::sqrt)
    }
}

/// Draws the four tables cell by cell, each component an independent normal:
/// `y(cc) = F_0`, `y(ib) = F_0 + F_B`, `y(is) = F_0 + F_S`,
/// `y(tr) = F_1 + F_B + F_S`.
///
/// Table `γ` uses random stream `γ.index()` derived from `seed`; draws are in
/// row-major order, components in the order written above. Normals come from
/// the ziggurat sampler of `rand_distr::StandardNormal`.
pub fn generate_potential_outcomes(
    config: &OutcomeModelConfig,
    rows: usize,
    cols: usize,
    seed: u64,
) -> Result<PotentialOutcomeTable> {
    config.validate()?;
    if rows == 0 || cols == 0 {
        return Err(MrdError::Config(format!("dimensions must be positive (got {rows} x {cols})")));
    }
    let f0 = (config.mu_0, config.sigma_0);
    let fb = (config.p_b * config.mu_b, config.sigma_b);
    let fs = (config.p_s * config.mu_s, config.sigma_s);
    let f1 = (config.mu_1, config.sigma_1);
    let components: [&[(f64, f64)]; 4] = [&[f0], &[f0, fb], &[f0, fs], &[f1, fb, fs]];
    let tables = PairType::ALL.map(|ty| {
        let mut rng = stream_rng(seed, ty.index() as u64);
        let parts = components[ty.index()];
        let mut t = Array2::zeros((rows, cols));
        for v in t.iter_mut() {
            let mut acc = 0.0;
            for &(mean, sd) in parts {
                let z: f64 = StandardNormal.sample(&mut rng);
                acc += mean + sd * z;
            }
            *v = acc;
        }
        t
    });
    let [cc, ib, is, tr] = tables;
    PotentialOutcomeTable::new(cc, ib, is, tr)
}

/// Four tables of independent uniform draws on `[-bound, bound]`, table `γ`
/// from stream `γ.index()` of `seed`. Used for oracle checks on arbitrary
/// bounded outcomes.
pub fn uniform_potential_outcomes(rows: usize, cols: usize, bound: f64, seed: u64) -> Result<PotentialOutcomeTable> {
    if !(bound.is_finite() && bound > 0.0) {
        return Err(MrdError::Config(format!("bound must be positive and finite (got {bound})")));
    }
    if rows == 0 || cols == 0 {
        return Err(MrdError::Config(format!("dimensions must be positive (got {rows} x {cols})")));
    }
    let [cc, ib, is, tr] = PairType::ALL.map(|ty| {
        let mut rng = stream_rng(seed, ty.index() as u64);
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-bound..=bound))
    });
    PotentialOutcomeTable::new(cc, ib, is, tr)
}

/// Observed outcomes: `observed[i][j] = y_ij(types[i][j])`.
pub fn realize_outcomes(potentials: &PotentialOutcomeTable, types: &TypeMatrix) -> Result<Array2<f64>> {
    if potentials.dims() != (types.rows(), types.cols()) {
        return Err(MrdError::Dimension {
            expected: format!("{}x{}", potentials.rows(), potentials.cols()),
            found: format!("{}x{}", types.rows(), types.cols()),
        });
    }
    Ok(Array2::from_shape_fn(potentials.dims(), |(i, j)| {
        potentials.get(types.labels()[[i, j]])[[i, j]]
    }))
}
