//! Dense small-matrix kernels: thin SVD, matrix sign, norms.

mod matrix;
mod norms;
mod sign;
mod svd;

pub use matrix::Matrix;
pub use norms::{frobenius_norm, spectral_norm, stable_rank, trace_norm};
pub use sign::{msign_exact, newton_schulz, NewtonSchulzCoeffs, RANK_TOL};
pub use svd::{svd_thin, Svd, JACOBI_MAX_DIM};
