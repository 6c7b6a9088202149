//! Unbiased low-rank projected Muon optimizers.
//!
//! The crate provides the dense kernels ([`linalg`]), the optimizer family
//! ([`optim`]: Muon, GaLore-Muon, the generic unbiased projected paradigm and
//! GUM), synthetic test problems with analytic oracles ([`problems`]) and the
//! diagnostics recorded along a run ([`metrics`]).

pub mod error;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod problems;

pub use error::{Error, Result};
pub use linalg::Matrix;
