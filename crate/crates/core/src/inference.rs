//! Normal-approximation confidence intervals and the Berry–Esseen style
//! diagnostic for linear estimands.

use serde::{Deserialize, Serialize};

use crate::error::{MrdError, Result};

/// Standard normal CDF, `Φ(x) = erfc(-x/√2) / 2`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Inverse standard normal CDF (Wichura's AS 241, PPND16; relative error
/// about 1e-16 over the open unit interval).
///
/// Returns `-∞` at 0, `+∞` at 1 and NaN outside `[0, 1]`.
pub fn normal_quantile(p: f64) -> f64 {
    if p.is_nan() || !(0.0..=1.0).contains(&p) {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_5,
        133.141_667_891_784_38,
        1_971.590_950_306_551_4,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_546,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_5,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_08,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_9,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_7e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let x = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}

/// Where an interval's variance came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceSource {
    Exact,
    EstimatedConservative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfidenceInterval {
    pub center: f64,
    pub half_width: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
    pub source: VarianceSource,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }
}

/// `estimate ± z_{(1+level)/2} √variance`.
pub fn confidence_interval(
    estimate: f64,
    variance: f64,
    level: f64,
    source: VarianceSource,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(MrdError::Config(format!("confidence level must lie in (0, 1) (got {level})")));
    }
    if !(variance >= 0.0) || !variance.is_finite() {
        return Err(MrdError::Estimation(format!("interval variance must be finite and nonnegative (got {variance})")));
    }
    let z = normal_quantile(0.5 * (1.0 + level));
    let half_width = z * variance.sqrt();
    Ok(ConfidenceInterval {
        center: estimate,
        half_width,
        lower: estimate - half_width,
        upper: estimate + half_width,
        level,
        source,
    })
}

/// Inputs and value of `Δ = C_1 C_2 (1/I + 1/J) / (√Var / ‖β‖₂)`.
///
/// The normal-approximation error of the standardized estimator is bounded by
/// `C Δ log(C/Δ)` for an unspecified universal constant `C`, so `Δ` is only
/// meaningful for comparing designs and sample sizes, not as an absolute bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CltDiagnostic {
    /// Balance bound: `max_γ max(I/I_γ, J/J_γ)`.
    pub c1: f64,
    /// Outcome bound: `max |y_ij(γ)|`.
    pub c2: f64,
    pub rows: usize,
    pub cols: usize,
    pub variance: f64,
    pub beta_norm: f64,
    /// `+∞` when the variance is zero; serialized as `null`.
    #[serde(with = "infinite_as_null")]
    pub delta: f64,
    /// Set when the variance is zero and `Δ` is unbounded.
    pub degenerate: bool,
}

pub fn clt_diagnostic(c1: f64, c2: f64, rows: usize, cols: usize, variance: f64, beta_norm: f64) -> Result<CltDiagnostic> {
    if !(c1 > 0.0 && c2 >= 0.0 && beta_norm > 0.0 && rows > 0 && cols > 0) {
        return Err(MrdError::Config(format!(
            "diagnostic inputs must be positive (C1 = {c1}, C2 = {c2}, I = {rows}, J = {cols}, |beta| = {beta_norm})"
        )));
    }
    if !(variance >= 0.0) {
        return Err(MrdError::Config(format!("diagnostic variance must be nonnegative (got {variance})")));
    }
    let degenerate = variance == 0.0;
    let delta = if degenerate {
        f64::INFINITY
    } else {
        c1 * c2 * (1.0 / rows as f64 + 1.0 / cols as f64) / (variance.sqrt() / beta_norm)
    };
    Ok(CltDiagnostic { c1, c2, rows, cols, variance, beta_norm, delta, degenerate })
}

pub(crate) mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}
