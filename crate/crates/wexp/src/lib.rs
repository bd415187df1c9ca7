//! Asymptotic expansions for functionals of Wiener variations with random
//! weights.

pub mod chaos;
pub mod error;
pub mod estimators;
pub mod expansion;
pub mod exponent;
pub mod harness;
pub mod parallel;
pub mod paths;
pub mod quad;
pub mod rates;
pub mod rng;
pub mod stats;
pub mod symbols;
pub mod volatility;
pub mod weights;

pub use error::{Error, Result};
