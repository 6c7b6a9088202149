//! Matrix sign (orthogonal polar factor) via SVD or Newton–Schulz iteration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::matrix::Matrix;
use crate::linalg::svd::svd_thin;

/// Singular values at or below `RANK_TOL · σ_max` are treated as zero by [`msign_exact`].
pub const RANK_TOL: f64 = 1e-12;

/// Coefficients of the odd polynomial `X ← aX + b·XXᵀX + c·XXᵀXXᵀX`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewtonSchulzCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub iterations: usize,
}

impl NewtonSchulzCoeffs {
    /// Classical cubic iteration `X ← 1.5X − 0.5XXᵀX`.
    ///
    /// Converges to the polar factor for every nonzero singular value; 20
    /// steps reach full precision once the smallest Frobenius-scaled singular
    /// value is above roughly `3e-4`.
    pub const CUBIC: Self = Self {
        a: 1.5,
        b: -0.5,
        c: 0.0,
        iterations: 20,
    };

    /// Quintic coefficients of the reference Muon implementation.
    ///
    /// Five steps push singular values into a band around one (about
    /// `[0.7, 1.2]`) rather than converging, so the result only approximates
    /// the sign.
    pub const MUON_QUINTIC: Self = Self {
        a: 3.4445,
        b: -4.7750,
        c: 2.0315,
        iterations: 5,
    };

    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::input("Newton-Schulz needs at least one iteration"));
        }
        if ![self.a, self.b, self.c].iter().all(|v| v.is_finite()) {
            return Err(Error::input("Newton-Schulz coefficients must be finite"));
        }
        Ok(())
    }
}

impl Default for NewtonSchulzCoeffs {
    fn default() -> Self {
        Self::CUBIC
    }
}

/// `msign(M) = U_r V_rᵀ` over singular triplets above the rank tolerance.
///
/// The zero matrix maps to zero.
pub fn msign_exact(m: &Matrix) -> Result<Matrix> {
    let svd = svd_thin(m)?;
    let (rows, cols) = m.shape();
    let smax = svd.s.first().copied().unwrap_or(0.0);
    let keep = svd.s.iter().take_while(|&&s| s > RANK_TOL * smax && s > 0.0).count();
    if keep == 0 {
        return Ok(Matrix::zeros(rows, cols));
    }
    Ok(svd.u.leading_columns(keep).matmul_t(&svd.v.leading_columns(keep)))
}

/// Newton–Schulz approximation of `msign(M)` after scaling `M` to unit Frobenius norm.
///
/// Tall inputs are iterated on their transpose so the Gram matrix stays on the short side.
pub fn newton_schulz(m: &Matrix, coeffs: &NewtonSchulzCoeffs) -> Result<Matrix> {
    coeffs.validate()?;
    if !m.is_finite() {
        return Err(Error::input("Newton-Schulz of non-finite matrix"));
    }
    let norm = m.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::input("Newton-Schulz of the zero matrix"));
    }
    let tall = m.rows() > m.cols();
    let mut x = if tall { m.transpose() } else { m.clone() };
    x.scale_in_place(1.0 / norm);
    for _ in 0..coeffs.iterations {
        let gram = x.gram();
        let poly = if coeffs.c == 0.0 {
            gram.scale(coeffs.b)
        } else {
            let mut p = gram.matmul(&gram).scale(coeffs.c);
            p.axpy(coeffs.b, &gram);
            p
        };
        let mut next = poly.matmul(&x);
        next.axpy(coeffs.a, &x);
        x = next;
    }
    Ok(if tall { x.transpose() } else { x })
}
