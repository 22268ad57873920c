//! Exact design variances of the type means, their unbiased estimators, and
//! conservative bounds for linear estimands.
//!
//! Every quantity here is a two-way finite-population calculation. A type's
//! block is a simple random sample of `I_γ` of the `I` buyers crossed with an
//! independent sample of `J_γ` of the `J` sellers, and two types either share
//! a buyer sample or use complementary ones (likewise for sellers).

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::design::{PairType, SmrdConfig, TypeMatrix};
use crate::error::{MrdError, Result};
use crate::estimation::EstimandSpec;
use crate::outcomes::PotentialOutcomeTable;
use crate::sum::NeumaierSum;

/// Row, column and interaction decomposition of the four outcome tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationMoments {
    pub rows: usize,
    pub cols: usize,
    /// `δ^B_i(γ)`: buyer mean minus grand mean.
    pub delta_b: [Vec<f64>; 4],
    /// `δ^S_j(γ)`: seller mean minus grand mean.
    pub delta_s: [Vec<f64>; 4],
    /// `δ^BS_ij(γ)`: doubly centered residual.
    pub delta_bs: [Array2<f64>; 4],
    pub sigma_b: [f64; 4],
    pub sigma_s: [f64; 4],
    pub sigma_bs: [f64; 4],
    pub xi_b: [[f64; 4]; 4],
    pub xi_s: [[f64; 4]; 4],
    pub xi_bs: [[f64; 4]; 4],
    /// `α^B_γ = (I - I_γ) / (2 I I_γ)`.
    pub alpha_b: [f64; 4],
    /// `α^S_γ = (J - J_γ) / (2 J J_γ)`.
    pub alpha_s: [f64; 4],
}

fn sum_sq<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut s = NeumaierSum::new();
    for v in values {
        s += v * v;
    }
    s.value()
}

impl PopulationMoments {
    /// `ζ^B_{γγ'} = σ^B_γ + σ^B_γ' - ξ^B_{γγ'}`, twice the covariance of the buyer deviations.
    pub fn zeta_b(&self, a: PairType, b: PairType) -> f64 {
        self.sigma_b[a.index()] + self.sigma_b[b.index()] - self.xi_b[a.index()][b.index()]
    }

    pub fn zeta_s(&self, a: PairType, b: PairType) -> f64 {
        self.sigma_s[a.index()] + self.sigma_s[b.index()] - self.xi_s[a.index()][b.index()]
    }

    pub fn zeta_bs(&self, a: PairType, b: PairType) -> f64 {
        self.sigma_bs[a.index()] + self.sigma_bs[b.index()] - self.xi_bs[a.index()][b.index()]
    }
}

pub fn population_moments(potentials: &PotentialOutcomeTable, config: &SmrdConfig) -> Result<PopulationMoments> {
    let (rows, cols) = potentials.dims();
    if (rows, cols) != (config.rows, config.cols) {
        return Err(MrdError::Dimension {
            expected: format!("{}x{}", config.rows, config.cols),
            found: format!("{rows}x{cols}"),
        });
    }
    if rows < 2 || cols < 2 {
        return Err(MrdError::Config(format!("moments need I >= 2 and J >= 2 (got {rows} x {cols})")));
    }
    let mut delta_b: [Vec<f64>; 4] = Default::default();
    let mut delta_s: [Vec<f64>; 4] = Default::default();
    let mut delta_bs: [Array2<f64>; 4] = Default::default();
    for ty in PairType::ALL {
        let g = ty.index();
        let grand = potentials.mean(ty);
        let rm = potentials.buyer_means(ty);
        let cm = potentials.seller_means(ty);
        let y = potentials.get(ty);
        delta_bs[g] = Array2::from_shape_fn((rows, cols), |(i, j)| y[[i, j]] - rm[i] - cm[j] + grand);
        delta_b[g] = rm.into_iter().map(|m| m - grand).collect();
        delta_s[g] = cm.into_iter().map(|m| m - grand).collect();
    }
    let di = (rows - 1) as f64;
    let dj = (cols - 1) as f64;
    let sigma_b = PairType::ALL.map(|t| sum_sq(delta_b[t.index()].iter().copied()) / di);
    let sigma_s = PairType::ALL.map(|t| sum_sq(delta_s[t.index()].iter().copied()) / dj);
    let sigma_bs = PairType::ALL.map(|t| sum_sq(delta_bs[t.index()].iter().copied()) / (di * dj));
    let mut xi_b = [[0.0; 4]; 4];
    let mut xi_s = [[0.0; 4]; 4];
    let mut xi_bs = [[0.0; 4]; 4];
    for a in 0..4 {
        for b in (a + 1)..4 {
            let xb = sum_sq(delta_b[a].iter().zip(&delta_b[b]).map(|(x, y)| x - y)) / di;
            let xs = sum_sq(delta_s[a].iter().zip(&delta_s[b]).map(|(x, y)| x - y)) / dj;
            let xbs = sum_sq(delta_bs[a].iter().zip(delta_bs[b].iter()).map(|(x, y)| x - y)) / (di * dj);
            (xi_b[a][b], xi_b[b][a]) = (xb, xb);
            (xi_s[a][b], xi_s[b][a]) = (xs, xs);
            (xi_bs[a][b], xi_bs[b][a]) = (xbs, xbs);
        }
    }
    let (i, j) = (rows as f64, cols as f64);
    let alpha_b = PairType::ALL.map(|t| {
        let n = config.type_rows(t) as f64;
        0.5 * (i - n) / (i * n)
    });
    let alpha_s = PairType::ALL.map(|t| {
        let m = config.type_cols(t) as f64;
        0.5 * (j - m) / (j * m)
    });
    Ok(PopulationMoments {
        rows,
        cols,
        delta_b,
        delta_s,
        delta_bs,
        sigma_b,
        sigma_s,
        sigma_bs,
        xi_b,
        xi_s,
        xi_bs,
        alpha_b,
        alpha_s,
    })
}

/// Coefficients of `Cov(Ŷ_γ, Ŷ_γ') = c_B ζ^B + c_S ζ^S + c_BS ζ^BS`.
///
/// With `ψ^B = α^B_γ` when the two types share their buyer sample and
/// `ψ^B = -1/(2I)` otherwise (sellers alike), `c_B = ψ^B`, `c_S = ψ^S` and
/// `c_BS = 2 ψ^B ψ^S`. On the diagonal `ζ = 2σ`, which recovers
/// `Var(Ŷ_γ) = 2α^B σ^B + 2α^S σ^S + 4α^B α^S σ^BS`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceCoefficients {
    /// `entries[γ][γ'] = [c_B, c_S, c_BS]`.
    pub entries: [[[f64; 3]; 4]; 4],
}

impl CovarianceCoefficients {
    pub fn closed_form(config: &SmrdConfig) -> Self {
        let (i, j) = (config.rows as f64, config.cols as f64);
        let mut entries = [[[0.0; 3]; 4]; 4];
        for a in PairType::ALL {
            for b in PairType::ALL {
                let psi_b = if a.buyer_selected() == b.buyer_selected() {
                    let n = config.type_rows(a) as f64;
                    0.5 * (i - n) / (i * n)
                } else {
                    -0.5 / i
                };
                let psi_s = if a.seller_selected() == b.seller_selected() {
                    let m = config.type_cols(a) as f64;
                    0.5 * (j - m) / (j * m)
                } else {
                    -0.5 / j
                };
                entries[a.index()][b.index()] = [psi_b, psi_s, 2.0 * psi_b * psi_s];
            }
        }
        CovarianceCoefficients { entries }
    }
}

/// Symmetric 4×4 matrix over `(cc, ib, is, tr)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CovarianceMatrix4(pub [[f64; 4]; 4]);

impl CovarianceMatrix4 {
    pub fn get(&self, a: PairType, b: PairType) -> f64 {
        self.0[a.index()][b.index()]
    }

    pub fn variance(&self, ty: PairType) -> f64 {
        self.get(ty, ty)
    }

    /// `βᵀ Σ β`.
    pub fn quadratic_form(&self, beta: &[f64; 4]) -> f64 {
        let mut s = NeumaierSum::new();
        for a in 0..4 {
            for b in 0..4 {
                s += beta[a] * self.0[a][b] * beta[b];
            }
        }
        s.value()
    }

    pub fn max_abs_diff(&self, other: &CovarianceMatrix4) -> f64 {
        let mut m = 0.0_f64;
        for a in 0..4 {
            for b in 0..4 {
                m = m.max((self.0[a][b] - other.0[a][b]).abs());
            }
        }
        m
    }
}

/// Exact design covariance of the four type means.
pub fn exact_covariance(moments: &PopulationMoments, config: &SmrdConfig) -> CovarianceMatrix4 {
    covariance_with(moments, &CovarianceCoefficients::closed_form(config))
}

/// Covariance assembled from an explicit coefficient table.
pub fn covariance_with(moments: &PopulationMoments, coefficients: &CovarianceCoefficients) -> CovarianceMatrix4 {
    let mut m = [[0.0; 4]; 4];
    for a in PairType::ALL {
        for b in PairType::ALL {
            let [cb, cs, cbs] = coefficients.entries[a.index()][b.index()];
            m[a.index()][b.index()] =
                cb * moments.zeta_b(a, b) + cs * moments.zeta_s(a, b) + cbs * moments.zeta_bs(a, b);
        }
    }
    CovarianceMatrix4(m)
}

/// `Var(τ̂(β)) = βᵀ Σ β`.
pub fn exact_estimand_variance(cov: &CovarianceMatrix4, spec: &EstimandSpec) -> f64 {
    cov.quadratic_form(&spec.beta)
}

/// Variance estimate for one type's mean, computed from its observed block.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeVarianceEstimate {
    /// `Σ̂^B`: spread of the block's buyer means, normalized by `1/I_γ`.
    pub sigma_b: f64,
    /// `Σ̂^S`: spread of the block's seller means, normalized by `1/J_γ`.
    pub sigma_s: f64,
    /// `Σ̂^BS`: interaction spread, normalized by `1/(I_γ J_γ)`.
    pub sigma_bs: f64,
    /// Interaction noise carried by the buyer-mean spread.
    pub eta_b: f64,
    /// Interaction noise carried by the seller-mean spread.
    pub eta_s: f64,
    /// `Σ̂_γ`, unbiased for `Var(Ŷ_γ)`; may be negative.
    pub raw: f64,
    /// `Σ̂_γ⁺ = max(Σ̂_γ, 0)`.
    pub clamped: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceEstimate {
    pub types: [TypeVarianceEstimate; 4],
}

impl VarianceEstimate {
    pub fn get(&self, ty: PairType) -> &TypeVarianceEstimate {
        &self.types[ty.index()]
    }

    pub fn raw(&self) -> [f64; 4] {
        self.types.map(|t| t.raw)
    }

    pub fn clamped(&self) -> [f64; 4] {
        self.types.map(|t| t.clamped)
    }
}

/// Unbiased estimate of `Var(Ŷ_γ)` for every type.
///
/// For a block of `n = I_γ` buyers and `m = J_γ` sellers with buyer-mean
/// variance `s_r²`, seller-mean variance `s_c²` and residual mean square
/// `s_e²`, and finite-population factors `f_r = (I - n)/(I n)`,
/// `f_c = (J - m)/(J m)`:
///
/// ```text
/// Σ̂_γ = f_r (s_r² - η̂^B) + f_c (s_c² - η̂^S) + f_r f_c s_e²,
/// η̂^B = f_c s_e²,  η̂^S = f_r s_e².
/// ```
///
/// `s_r²` overstates the buyer variance by `f_c σ^BS` in expectation (and
/// `s_c²` by `f_r σ^BS`); the η̂ terms remove that.
pub fn variance_estimate(observed: &Array2<f64>, types: &TypeMatrix) -> Result<VarianceEstimate> {
    if observed.dim() != (types.rows(), types.cols()) {
        return Err(MrdError::Dimension {
            expected: format!("{}x{}", types.rows(), types.cols()),
            found: format!("{}x{}", observed.nrows(), observed.ncols()),
        });
    }
    let (big_i, big_j) = (types.rows() as f64, types.cols() as f64);
    let mut out = [TypeVarianceEstimate {
        sigma_b: 0.0,
        sigma_s: 0.0,
        sigma_bs: 0.0,
        eta_b: 0.0,
        eta_s: 0.0,
        raw: 0.0,
        clamped: 0.0,
    }; 4];
    for ty in PairType::ALL {
        let rows = types.rows_of(ty);
        let cols = types.cols_of(ty);
        if rows.len() < 2 || cols.len() < 2 {
            return Err(MrdError::Estimation(format!(
                "type {ty} spans {} buyers and {} sellers; variance estimation needs at least two of each",
                rows.len(),
                cols.len()
            )));
        }
        let (n, m) = (rows.len() as f64, cols.len() as f64);
        let block = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| observed[[rows[a], cols[b]]]);
        let row_means: Vec<f64> = block
            .rows()
            .into_iter()
            .map(|r| r.iter().copied().sum::<NeumaierSum>().value() / m)
            .collect();
        let col_means: Vec<f64> = block
            .columns()
            .into_iter()
            .map(|c| c.iter().copied().sum::<NeumaierSum>().value() / n)
            .collect();
        let grand = block.iter().copied().sum::<NeumaierSum>().value() / (n * m);
        let ss_r = sum_sq(row_means.iter().map(|v| v - grand));
        let ss_c = sum_sq(col_means.iter().map(|v| v - grand));
        let ss_e = sum_sq(block.indexed_iter().map(|((a, b), &y)| y - row_means[a] - col_means[b] + grand));
        let s_r2 = ss_r / (n - 1.0);
        let s_c2 = ss_c / (m - 1.0);
        let s_e2 = ss_e / ((n - 1.0) * (m - 1.0));
        let f_r = (big_i - n) / (big_i * n);
        let f_c = (big_j - m) / (big_j * m);
        let eta_b = f_c * s_e2;
        let eta_s = f_r * s_e2;
        let raw = f_r * (s_r2 - eta_b) + f_c * (s_c2 - eta_s) + f_r * f_c * s_e2;
        out[ty.index()] = TypeVarianceEstimate {
            sigma_b: ss_r / n,
            sigma_s: ss_c / m,
            sigma_bs: ss_e / (n * m),
            eta_b,
            eta_s,
            raw,
            clamped: raw.max(0.0),
        };
    }
    Ok(VarianceEstimate { types: out })
}

/// Upper bound on `Var(τ̂(β))` from the clamped per-type estimates:
/// `Σ_γ β_γ² Σ̂_γ⁺ + Σ_{γ<γ'} 2 |β_γ β_γ'| √(Σ̂_γ⁺ Σ̂_γ'⁺)`.
///
/// By Cauchy–Schwarz each covariance is at most the geometric mean of the two
/// variances, so this dominates the true variance for any sign pattern of β.
pub fn conservative_variance(estimates: &VarianceEstimate, spec: &EstimandSpec) -> f64 {
    let v = estimates.clamped();
    let mut s = NeumaierSum::new();
    for a in 0..4 {
        s += spec.beta[a] * spec.beta[a] * v[a];
        for b in (a + 1)..4 {
            s += 2.0 * (spec.beta[a] * spec.beta[b]).abs() * (v[a] * v[b]).sqrt();
        }
    }
    s.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::Factors;
    use crate::outcomes::{generate_potential_outcomes, OutcomeModelConfig};

    fn cfg44() -> SmrdConfig {
        SmrdConfig::new(4, 4, 2, 2).unwrap()
    }

    fn random_table(rows: usize, cols: usize, seed: u64) -> PotentialOutcomeTable {
        generate_potential_outcomes(&OutcomeModelConfig::reference(), rows, cols, seed).unwrap()
    }

    #[test]
    fn constant_tables_have_zero_moments() {
        let t = PotentialOutcomeTable::constant(4, 4, [1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = population_moments(&t, &cfg44()).unwrap();
        assert!(m.sigma_b.iter().chain(&m.sigma_s).chain(&m.sigma_bs).all(|&v| v == 0.0));
        assert_eq!(m.alpha_b, [0.125; 4]);
        let cov = exact_covariance(&m, &cfg44());
        assert!(cov.0.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn alpha_weights() {
        let c = SmrdConfig::new(200, 150, 90, 83).unwrap();
        let t = PotentialOutcomeTable::constant(200, 150, [0.0; 4]).unwrap();
        let m = population_moments(&t, &c).unwrap();
        assert!((m.alpha_b[0] - 0.5 * 90.0 / (200.0 * 110.0)).abs() < 1e-18);
        assert!((m.alpha_b[3] - 0.5 * 110.0 / (200.0 * 90.0)).abs() < 1e-18);
        assert!((m.alpha_s[2] - 0.5 * 67.0 / (150.0 * 83.0)).abs() < 1e-18);
    }

    #[test]
    fn additive_table_has_no_interaction() {
        let y = Array2::from_shape_fn((5, 6), |(i, j)| (i as f64) * 0.7 - (j as f64) * 1.3);
        let t = PotentialOutcomeTable::new(y.clone(), y.clone() * 2.0, y.clone() + 1.0, -y).unwrap();
        let m = population_moments(&t, &SmrdConfig::new(5, 6, 2, 3).unwrap()).unwrap();
        for v in m.sigma_bs {
            assert!(v.abs() < 1e-24, "{v}");
        }
    }

    #[test]
    fn buyer_only_table_variance() {
        let y = Array2::from_shape_fn((6, 5), |(i, _)| (i * i) as f64);
        let t = PotentialOutcomeTable::new(y.clone(), y.clone(), y.clone(), y).unwrap();
        let c = SmrdConfig::new(6, 5, 2, 2).unwrap();
        let m = population_moments(&t, &c).unwrap();
        let cov = exact_covariance(&m, &c);
        let (ic, it, i) = (4.0, 2.0, 6.0);
        let expect = ic / (it * i) * m.sigma_b[3];
        assert!((cov.variance(PairType::Tr) - expect).abs() < 1e-12);
        assert!(m.sigma_s.iter().chain(&m.sigma_bs).all(|v| v.abs() < 1e-24));
    }

    #[test]
    fn moments_match_direct_double_loop() {
        let t = random_table(4, 4, 17);
        let m = population_moments(&t, &cfg44()).unwrap();
        for ty in PairType::ALL {
            let y = t.get(ty);
            let mut grand = 0.0;
            for v in y {
                grand += v;
            }
            grand /= 16.0;
            let mut sb = 0.0;
            for i in 0..4 {
                let mut r = 0.0;
                for j in 0..4 {
                    r += y[[i, j]];
                }
                sb += (r / 4.0 - grand).powi(2);
            }
            let mut sbs = 0.0;
            for i in 0..4 {
                for j in 0..4 {
                    let r: f64 = (0..4).map(|k| y[[i, k]]).sum::<f64>() / 4.0;
                    let c: f64 = (0..4).map(|k| y[[k, j]]).sum::<f64>() / 4.0;
                    sbs += (y[[i, j]] - r - c + grand).powi(2);
                }
            }
            assert!((m.sigma_b[ty.index()] - sb / 3.0).abs() < 1e-12);
            assert!((m.sigma_bs[ty.index()] - sbs / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn deviation_sums_and_anova() {
        let t = random_table(5, 7, 3);
        let m = population_moments(&t, &SmrdConfig::new(5, 7, 2, 3).unwrap()).unwrap();
        for ty in PairType::ALL {
            let g = ty.index();
            assert!(m.delta_b[g].iter().sum::<f64>().abs() < 1e-12);
            assert!(m.delta_s[g].iter().sum::<f64>().abs() < 1e-12);
            for r in m.delta_bs[g].rows() {
                assert!(r.sum().abs() < 1e-12);
            }
            for c in m.delta_bs[g].columns() {
                assert!(c.sum().abs() < 1e-12);
            }
            let mean = t.mean(ty);
            let total = t.get(ty).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 35.0;
            let parts = 4.0 / 5.0 * m.sigma_b[g] + 6.0 / 7.0 * m.sigma_s[g] + 24.0 / 35.0 * m.sigma_bs[g];
            assert!((total - parts).abs() <= 1e-12 * total.abs());
            assert_eq!(m.xi_b[g][g], 0.0);
        }
    }

    #[test]
    fn covariance_is_symmetric_psd_and_shift_invariant() {
        let c = SmrdConfig::new(5, 6, 2, 3).unwrap();
        let t = random_table(5, 6, 8);
        let m = population_moments(&t, &c).unwrap();
        let cov = exact_covariance(&m, &c);
        for a in 0..4 {
            for b in 0..4 {
                assert!((cov.0[a][b] - cov.0[b][a]).abs() < 1e-15);
            }
        }
        for beta in [[1.0, 0.0, 0.0, 0.0], [1.0, -2.0, 0.5, 3.0], [-1.0, 1.0, 1.0, -1.0]] {
            assert!(cov.quadratic_form(&beta) >= -1e-12);
        }
        let shifted = exact_covariance(&population_moments(&t.shifted(12.5), &c).unwrap(), &c);
        assert!(cov.max_abs_diff(&shifted) < 1e-12);
    }

    #[test]
    fn ate_variance_expansion() {
        let c = cfg44();
        let t = random_table(4, 4, 1);
        let cov = exact_covariance(&population_moments(&t, &c).unwrap(), &c);
        let v = exact_estimand_variance(&cov, &EstimandSpec::ate());
        let expect = cov.variance(PairType::Tr) + cov.variance(PairType::Cc) - 2.0 * cov.get(PairType::Tr, PairType::Cc);
        assert!((v - expect).abs() < 1e-14);
        let e_tr = EstimandSpec::custom([0.0, 0.0, 0.0, 1.0]);
        assert_eq!(exact_estimand_variance(&cov, &e_tr), cov.variance(PairType::Tr));
    }

    fn types44() -> TypeMatrix {
        TypeMatrix::from_factors(Factors { buyer: vec![true, false, false, true], seller: vec![false, true, true, false] })
    }

    #[test]
    fn constant_observed_gives_zero_estimates() {
        let est = variance_estimate(&Array2::from_elem((4, 4), 2.5), &types44()).unwrap();
        for t in est.types {
            assert_eq!(t.raw, 0.0);
            assert_eq!(t.clamped, 0.0);
        }
    }

    #[test]
    fn estimate_components_are_consistent() {
        let y = Array2::from_shape_fn((6, 7), |(i, j)| ((i * 7 + j) as f64).sin() * 3.0);
        let f = Factors {
            buyer: vec![true, false, true, false, false, true],
            seller: vec![false, true, true, false, true, false, true],
        };
        let types = TypeMatrix::from_factors(f);
        let est = variance_estimate(&y, &types).unwrap();
        for ty in PairType::ALL {
            let e = est.get(ty);
            let (n, m) = types.size(ty);
            let (n, m) = (n as f64, m as f64);
            let f_r = (6.0 - n) / (6.0 * n);
            let f_c = (7.0 - m) / (7.0 * m);
            let s_r2 = e.sigma_b * n / (n - 1.0);
            let s_c2 = e.sigma_s * m / (m - 1.0);
            let s_e2 = e.sigma_bs * n * m / ((n - 1.0) * (m - 1.0));
            let direct = f_r * s_r2 + f_c * s_c2 - f_r * f_c * s_e2;
            assert!((e.raw - direct).abs() < 1e-14);
            assert!(e.sigma_b >= 0.0 && e.sigma_s >= 0.0 && e.sigma_bs >= 0.0);
            assert_eq!(e.clamped, e.raw.max(0.0));
        }
    }

    #[test]
    fn estimate_requires_two_by_two_blocks() {
        let f = Factors { buyer: vec![true, false, false, false], seller: vec![true, true, false, false] };
        let err = variance_estimate(&Array2::zeros((4, 4)), &TypeMatrix::from_factors(f)).unwrap_err();
        assert!(matches!(err, MrdError::Estimation(_)));
    }

    fn est_with(values: [f64; 4]) -> VarianceEstimate {
        let t = |v: f64| TypeVarianceEstimate {
            sigma_b: 0.0,
            sigma_s: 0.0,
            sigma_bs: 0.0,
            eta_b: 0.0,
            eta_s: 0.0,
            raw: v,
            clamped: v.max(0.0),
        };
        VarianceEstimate { types: values.map(t) }
    }

    #[test]
    fn conservative_spillover_examples() {
        let v = 0.37;
        let c = conservative_variance(&est_with([v, v, 1.0, 1.0]), &EstimandSpec::spill_b());
        assert!((c - 4.0 * v).abs() < 1e-15);
        let c = conservative_variance(&est_with([0.4, -0.1, 0.0, 0.0]), &EstimandSpec::spill_b());
        assert!((c - 0.4).abs() < 1e-15);
        let (a, b) = (0.3, 0.8);
        let c = conservative_variance(&est_with([a, b, 5.0, 5.0]), &EstimandSpec::spill_b());
        assert!((c - (a + b + 2.0 * (a * b).sqrt())).abs() < 1e-15);
    }

    #[test]
    fn conservative_is_square_of_weighted_root_sum() {
        let v: [f64; 4] = [0.2, 0.5, 0.1, 0.9];
        let spec = EstimandSpec::direct();
        let root: f64 = (0..4).map(|k| spec.beta[k].abs() * v[k].sqrt()).sum();
        assert!((conservative_variance(&est_with(v), &spec) - root * root).abs() < 1e-14);
    }
}
