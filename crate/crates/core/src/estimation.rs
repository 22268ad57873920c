//! Type means and linear estimands.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::design::{PairType, TypeMatrix};
use crate::error::{MrdError, Result};
use crate::outcomes::PotentialOutcomeTable;
use crate::sum::NeumaierSum;

/// A linear combination `τ(β) = Σ_γ β_γ ȳ_γ` of the four type means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimandSpec {
    pub name: Option<String>,
    /// Coefficients in `(cc, ib, is, tr)` order.
    pub beta: [f64; 4],
}

impl EstimandSpec {
    pub const PRESETS: [&'static str; 4] = ["ate", "spill_b", "spill_s", "direct"];

    pub fn custom(beta: [f64; 4]) -> Self {
        EstimandSpec { name: None, beta }
    }

    /// Total effect of treating a pair versus leaving buyer and seller untouched.
    pub fn ate() -> Self {
        Self::named("ate", [-1.0, 0.0, 0.0, 1.0])
    }

    /// Buyer spillover: `ib` versus `cc`.
    pub fn spill_b() -> Self {
        Self::named("spill_b", [-1.0, 1.0, 0.0, 0.0])
    }

    /// Seller spillover: `is` versus `cc`.
    pub fn spill_s() -> Self {
        Self::named("spill_s", [-1.0, 0.0, 1.0, 0.0])
    }

    /// Treatment effect net of both spillovers.
    pub fn direct() -> Self {
        Self::named("direct", [1.0, -1.0, -1.0, 1.0])
    }

    pub fn presets() -> [EstimandSpec; 4] {
        [Self::ate(), Self::spill_b(), Self::spill_s(), Self::direct()]
    }

    fn named(name: &str, beta: [f64; 4]) -> Self {
        EstimandSpec { name: Some(name.to_string()), beta }
    }

    pub fn label(&self) -> String {
        match &self.name {
            Some(n) => n.clone(),
            None => format!("beta[{},{},{},{}]", self.beta[0], self.beta[1], self.beta[2], self.beta[3]),
        }
    }

    pub fn coefficient(&self, ty: PairType) -> f64 {
        self.beta[ty.index()]
    }

    pub fn l2_norm(&self) -> f64 {
        self.beta.iter().map(|b| b * b).sum::<f64>().sqrt()
    }
}

impl fmt::Display for EstimandSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

impl FromStr for EstimandSpec {
    type Err = MrdError;

    /// Accepts a preset name (`ate`, `spill_b`, `spill_s`, `direct`, case
    /// insensitive) or four comma-separated coefficients.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        match key.as_str() {
            "ate" => return Ok(Self::ate()),
            "spill_b" | "spillb" | "spill-b" => return Ok(Self::spill_b()),
            "spill_s" | "spills" | "spill-s" => return Ok(Self::spill_s()),
            "direct" => return Ok(Self::direct()),
            _ => {}
        }
        let parts: Vec<&str> = key.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(MrdError::Config(format!(
                "unknown estimand '{s}': expected one of {:?} or four comma-separated coefficients",
                Self::PRESETS
            )));
        }
        let mut beta = [0.0; 4];
        for (b, p) in beta.iter_mut().zip(&parts) {
            *b = p
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| MrdError::Config(format!("invalid coefficient '{p}' in estimand '{s}'")))?;
        }
        Ok(Self::custom(beta))
    }
}

/// Four type means in `(cc, ib, is, tr)` order with the block sizes behind them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TypeMeans {
    pub values: [f64; 4],
    /// `(I_γ, J_γ)`; for population means, the full `(I, J)`.
    pub sizes: [(usize, usize); 4],
}

impl TypeMeans {
    pub fn get(&self, ty: PairType) -> f64 {
        self.values[ty.index()]
    }
}

/// `ȳ_γ`: the average of `y(γ)` over all `I·J` pairs.
pub fn population_type_means(potentials: &PotentialOutcomeTable) -> TypeMeans {
    TypeMeans {
        values: PairType::ALL.map(|ty| potentials.mean(ty)),
        sizes: [potentials.dims(); 4],
    }
}

/// `Ŷ_γ`: the average of observed outcomes over the `I_γ × J_γ` block of pairs of type `γ`.
pub fn type_mean_estimates(observed: &Array2<f64>, types: &TypeMatrix) -> Result<TypeMeans> {
    if observed.dim() != (types.rows(), types.cols()) {
        return Err(MrdError::Dimension {
            expected: format!("{}x{}", types.rows(), types.cols()),
            found: format!("{}x{}", observed.nrows(), observed.ncols()),
        });
    }
    let mut values = [0.0; 4];
    let mut sizes = [(0, 0); 4];
    for ty in PairType::ALL {
        let rows = types.rows_of(ty);
        let cols = types.cols_of(ty);
        if rows.is_empty() || cols.is_empty() {
            return Err(MrdError::Estimation(format!("no pairs of type {ty} in the assignment")));
        }
        let mut s = NeumaierSum::new();
        for &i in rows {
            for &j in cols {
                s += observed[[i, j]];
            }
        }
        values[ty.index()] = s.value() / (rows.len() * cols.len()) as f64;
        sizes[ty.index()] = (rows.len(), cols.len());
    }
    Ok(TypeMeans { values, sizes })
}

/// `β · means`, for either population or estimated means.
pub fn estimand_value(spec: &EstimandSpec, means: &TypeMeans) -> f64 {
    spec.beta.iter().zip(means.values).map(|(b, m)| b * m).sum()
}
