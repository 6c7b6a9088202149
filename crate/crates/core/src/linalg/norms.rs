//! Unitarily invariant norms and the stable rank.

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::linalg::svd::svd_thin;

pub fn frobenius_norm(m: &Matrix) -> f64 {
    m.frobenius_norm()
}

/// Largest singular value (operator 2-norm).
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(svd_thin(m)?.s[0])
}

/// Sum of singular values (nuclear norm), the dual of the spectral norm.
pub fn trace_norm(m: &Matrix) -> Result<f64> {
    Ok(svd_thin(m)?.s.iter().sum())
}

/// `‖M‖_F² / ‖M‖_op²`, a value in `[1, min(rows, cols)]`.
pub fn stable_rank(m: &Matrix) -> Result<f64> {
    let s = svd_thin(m)?.s;
    if s[0] == 0.0 {
        return Err(Error::input("stable rank of the zero matrix"));
    }
    // From the spectrum so the bounds hold up to rounding in the sum.
    let fro_sq: f64 = s.iter().map(|x| (x / s[0]).powi(2)).sum();
    Ok(fro_sq)
}
