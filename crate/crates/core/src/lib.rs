//! Multiple randomization designs for two-sided (buyer × seller) experiments.
//!
//! The crate samples assignment matrices, computes unbiased type-mean and
//! estimand estimators with exact and estimated variances, and checks every
//! closed form against exhaustive enumeration and re-randomization.

pub mod design;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod inference;
pub mod io;
pub mod outcomes;
pub mod rng;
pub mod sum;
pub mod variance;

pub use error::{MrdError, Result};
