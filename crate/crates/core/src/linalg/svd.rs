//! Thin singular value decomposition.
//!
//! Two deterministic back ends share one output convention:
//!
//! * one-sided (Hestenes) Jacobi when the larger dimension is at most
//!   [`JACOBI_MAX_DIM`], which is accurate to working precision for small matrices;
//! * Householder bidiagonalization followed by implicit-shift QR
//!   (Golub–Kahan–Reinsch) otherwise.
//!
//! After either back end, singular values are sorted nonincreasing with a
//! stable sort (equal values keep their original column order), and every
//! column of `U` is flipped so that its entry of largest magnitude (first such
//! index on ties) is nonnegative, with the matching `V` column flipped too.
//! Left singular vectors for zero singular values are completed with a
//! deterministic Gram–Schmidt pass over the standard basis.

use crate::error::{Error, Result};
use crate::linalg::matrix::{dot, Matrix};

/// Matrices whose larger side is at most this use the Jacobi back end.
pub const JACOBI_MAX_DIM: usize = 64;

const MAX_JACOBI_SWEEPS: usize = 80;

#[derive(Debug, Clone)]
pub struct Svd {
    /// `m × k`, orthonormal columns.
    pub u: Matrix,
    /// `k` values, nonincreasing and nonnegative.
    pub s: Vec<f64>,
    /// `n × k`, orthonormal columns.
    pub v: Matrix,
}

impl Svd {
    /// `U · diag(S) · Vᵀ`.
    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for j in 0..us.cols() {
            for i in 0..us.rows() {
                us[(i, j)] *= self.s[j];
            }
        }
        us.matmul_t(&self.v)
    }

    pub fn rank(&self) -> usize {
        self.s.len()
    }
}

/// Thin SVD `m = U diag(S) Vᵀ` with `k = min(rows, cols)` singular triplets.
pub fn svd_thin(m: &Matrix) -> Result<Svd> {
    if !m.is_finite() {
        return Err(Error::input("svd of non-finite matrix"));
    }
    let (rows, cols) = m.shape();
    let raw = if rows.max(cols) <= JACOBI_MAX_DIM {
        if rows >= cols {
            jacobi_tall(m)
        } else {
            transpose_result(jacobi_tall(&m.transpose()))
        }
    } else if rows >= cols {
        golub_kahan_tall(m)?
    } else {
        transpose_result(golub_kahan_tall(&m.transpose())?)
    };
    Ok(canonicalize(raw))
}

fn transpose_result(svd: Svd) -> Svd {
    Svd {
        u: svd.v,
        s: svd.s,
        v: svd.u,
    }
}

/// Sort, then fix column signs.
fn canonicalize(raw: Svd) -> Svd {
    let k = raw.s.len();
    let mut order: Vec<usize> = (0..k).collect();
    // Stable: ties keep original column order.
    order.sort_by(|&a, &b| raw.s[b].partial_cmp(&raw.s[a]).expect("finite singular values"));

    let mut u = Matrix::zeros(raw.u.rows(), k);
    let mut v = Matrix::zeros(raw.v.rows(), k);
    let mut s = Vec::with_capacity(k);
    for (dst, &src) in order.iter().enumerate() {
        let mut ucol = raw.u.column(src);
        let mut vcol = raw.v.column(src);
        let pivot = ucol
            .iter()
            .enumerate()
            .fold((0usize, -1.0f64), |(bi, bv), (i, x)| {
                if x.abs() > bv {
                    (i, x.abs())
                } else {
                    (bi, bv)
                }
            })
            .0;
        if ucol[pivot] < 0.0 {
            ucol.iter_mut().for_each(|x| *x = -*x);
            vcol.iter_mut().for_each(|x| *x = -*x);
        }
        u.set_column(dst, &ucol);
        v.set_column(dst, &vcol);
        s.push(raw.s[src]);
    }
    Svd { u, s, v }
}

/// One-sided Jacobi on a matrix with `rows >= cols`.
fn jacobi_tall(a: &Matrix) -> Svd {
    let (m, n) = a.shape();
    debug_assert!(m >= n);
    // Column-major working copies: cols[j] is column j.
    let mut work: Vec<Vec<f64>> = (0..n).map(|j| a.column(j)).collect();
    let mut vcols: Vec<Vec<f64>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    let tol = f64::EPSILON * (m as f64).sqrt();
    for _ in 0..MAX_JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(&work[p], &work[p]);
                let beta = dot(&work[q], &work[q]);
                let gamma = dot(&work[p], &work[q]);
                if gamma == 0.0 || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_pair(&mut work, p, q, c, s);
                rotate_pair(&mut vcols, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = work.iter().map(|c| dot(c, c).sqrt()).collect();
    let smax = norms.iter().cloned().fold(0.0, f64::max);
    let floor = smax * (m as f64) * f64::EPSILON;
    let mut s = Vec::with_capacity(n);
    let mut ucols: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for (col, &norm) in work.iter().zip(&norms) {
        if norm > floor && norm > 0.0 {
            s.push(norm);
            ucols.push(Some(col.iter().map(|x| x / norm).collect()));
        } else {
            s.push(0.0);
            ucols.push(None);
        }
    }
    let ucols = complete_orthonormal(m, ucols);

    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    for j in 0..n {
        u.set_column(j, &ucols[j]);
        v.set_column(j, &vcols[j]);
    }
    Svd { u, s, v }
}

fn rotate_pair(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (head, tail) = cols.split_at_mut(q);
    let cp = &mut head[p];
    let cq = &mut tail[0];
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, yq) = (*x, *y);
        *x = c * xp - s * yq;
        *y = s * xp + c * yq;
    }
}

/// Fills `None` slots with unit vectors orthogonal to every other slot.
///
/// Each filler is the standard basis vector with the largest residual after
/// two rounds of Gram–Schmidt, lowest index on ties.
fn complete_orthonormal(m: usize, cols: Vec<Option<Vec<f64>>>) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = cols.iter().flatten().cloned().collect();
    let mut out = Vec::with_capacity(cols.len());
    for slot in cols {
        match slot {
            Some(c) => out.push(c),
            None => {
                let mut best: Option<(f64, Vec<f64>)> = None;
                for e in 0..m {
                    let mut cand = vec![0.0; m];
                    cand[e] = 1.0;
                    for _ in 0..2 {
                        for b in &basis {
                            let proj = dot(b, &cand);
                            cand.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
                        }
                    }
                    let norm = dot(&cand, &cand).sqrt();
                    if best.as_ref().is_none_or(|(bn, _)| norm > *bn) {
                        best = Some((norm, cand));
                    }
                }
                let (norm, cand) = best.expect("at least one basis vector");
                let unit: Vec<f64> = cand.iter().map(|x| x / norm).collect();
                basis.push(unit.clone());
                out.push(unit);
            }
        }
    }
    out
}

/// Golub–Kahan–Reinsch SVD on a matrix with `rows >= cols`.
fn golub_kahan_tall(input: &Matrix) -> Result<Svd> {
    let (m, n) = input.shape();
    debug_assert!(m >= n);
    let mut a = input.clone();
    let mut s: Vec<f64> = vec![0.0; n.min(m + 1)];
    let mut u = Matrix::zeros(m, n);
    let mut v = Matrix::zeros(n, n);
    let mut e: Vec<f64> = vec![0.0; n];
    let mut work = vec![0.0; m];

    let nct = (m - 1).min(n);
    let nrt = n.saturating_sub(2).min(m);

    // Householder reduction to bidiagonal form.
    for k in 0..nct.max(nrt) {
        if k < nct {
            s[k] = 0.0;
            for i in k..m {
                s[k] = s[k].hypot(a[(i, k)]);
            }
            if s[k] != 0.0 {
                if a[(k, k)] < 0.0 {
                    s[k] = -s[k];
                }
                for i in k..m {
                    a[(i, k)] /= s[k];
                }
                a[(k, k)] += 1.0;
            }
            s[k] = -s[k];
        }
        for j in (k + 1)..n {
            if k < nct && s[k] != 0.0 {
                let mut t = 0.0;
                for i in k..m {
                    t += a[(i, k)] * a[(i, j)];
                }
                t = -t / a[(k, k)];
                for i in k..m {
                    let aik = a[(i, k)];
                    a[(i, j)] += t * aik;
                }
            }
            e[j] = a[(k, j)];
        }
        if k < nct {
            for i in k..m {
                u[(i, k)] = a[(i, k)];
            }
        }
        if k < nrt {
            e[k] = 0.0;
            for i in (k + 1)..n {
                e[k] = e[k].hypot(e[i]);
            }
            if e[k] != 0.0 {
                if e[k + 1] < 0.0 {
                    e[k] = -e[k];
                }
                let ek = e[k];
                for x in e.iter_mut().take(n).skip(k + 1) {
                    *x /= ek;
                }
                e[k + 1] += 1.0;
            }
            e[k] = -e[k];
            if k + 1 < m && e[k] != 0.0 {
                for w in work.iter_mut().skip(k + 1) {
                    *w = 0.0;
                }
                for j in (k + 1)..n {
                    for i in (k + 1)..m {
                        work[i] += e[j] * a[(i, j)];
                    }
                }
                for j in (k + 1)..n {
                    let t = -e[j] / e[k + 1];
                    for i in (k + 1)..m {
                        a[(i, j)] += t * work[i];
                    }
                }
            }
            for i in (k + 1)..n {
                v[(i, k)] = e[i];
            }
        }
    }

    let mut p = n.min(m + 1);
    if nct < n {
        s[nct] = a[(nct, nct)];
    }
    if m < p {
        s[p - 1] = 0.0;
    }
    if nrt + 1 < p {
        e[nrt] = a[(nrt, p - 1)];
    }
    e[p - 1] = 0.0;

    // Accumulate U.
    for j in nct..n {
        for i in 0..m {
            u[(i, j)] = 0.0;
        }
        u[(j, j)] = 1.0;
    }
    for k in (0..nct).rev() {
        if s[k] != 0.0 {
            for j in (k + 1)..n {
                let mut t = 0.0;
                for i in k..m {
                    t += u[(i, k)] * u[(i, j)];
                }
                t = -t / u[(k, k)];
                for i in k..m {
                    let uik = u[(i, k)];
                    u[(i, j)] += t * uik;
                }
            }
            for i in k..m {
                u[(i, k)] = -u[(i, k)];
            }
            u[(k, k)] += 1.0;
            for i in 0..k.saturating_sub(1) {
                u[(i, k)] = 0.0;
            }
        } else {
            for i in 0..m {
                u[(i, k)] = 0.0;
            }
            u[(k, k)] = 1.0;
        }
    }

    // Accumulate V.
    for k in (0..n).rev() {
        if k < nrt && e[k] != 0.0 {
            for j in (k + 1)..n {
                let mut t = 0.0;
                for i in (k + 1)..n {
                    t += v[(i, k)] * v[(i, j)];
                }
                t = -t / v[(k + 1, k)];
                for i in (k + 1)..n {
                    let vik = v[(i, k)];
                    v[(i, j)] += t * vik;
                }
            }
        }
        for i in 0..n {
            v[(i, k)] = 0.0;
        }
        v[(k, k)] = 1.0;
    }

    // Implicit-shift QR on the bidiagonal.
    let pp = p - 1;
    let eps = f64::EPSILON;
    let tiny = 2f64.powi(-966);
    let mut iterations = 0usize;
    let max_iterations = 75 * n.max(1) * 4;
    while p > 0 {
        if iterations > max_iterations {
            return Err(Error::input("bidiagonal QR failed to converge"));
        }
        // Find the largest k < p-1 with a negligible superdiagonal, or -1.
        let mut k: isize = p as isize - 2;
        while k >= 0 {
            let ku = k as usize;
            if e[ku].abs() <= tiny + eps * (s[ku].abs() + s[ku + 1].abs()) {
                e[ku] = 0.0;
                break;
            }
            k -= 1;
        }
        let kase;
        if k == p as isize - 2 {
            kase = 4;
        } else {
            let mut ks: isize = p as isize - 1;
            while ks > k {
                let ksu = ks as usize;
                let t = (if ksu != p { e[ksu].abs() } else { 0.0 })
                    + (if ks != k + 1 { e[ksu - 1].abs() } else { 0.0 });
                if s[ksu].abs() <= tiny + eps * t {
                    s[ksu] = 0.0;
                    break;
                }
                ks -= 1;
            }
            if ks == k {
                kase = 3;
            } else if ks == p as isize - 1 {
                kase = 1;
            } else {
                kase = 2;
                k = ks;
            }
        }
        let k = (k + 1) as usize;

        match kase {
            // Deflate negligible s[p-1].
            1 => {
                let mut f = e[p - 2];
                e[p - 2] = 0.0;
                for j in (k..=(p - 2)).rev() {
                    let t = s[j].hypot(f);
                    let cs = s[j] / t;
                    let sn = f / t;
                    s[j] = t;
                    if j != k {
                        f = -sn * e[j - 1];
                        e[j - 1] *= cs;
                    }
                    givens_cols(&mut v, j, p - 1, cs, sn);
                }
            }
            // Split at negligible s[k-1].
            2 => {
                let mut f = e[k - 1];
                e[k - 1] = 0.0;
                for j in k..p {
                    let t = s[j].hypot(f);
                    let cs = s[j] / t;
                    let sn = f / t;
                    s[j] = t;
                    f = -sn * e[j];
                    e[j] *= cs;
                    givens_cols(&mut u, j, k - 1, cs, sn);
                }
            }
            // One QR step with Wilkinson-style shift.
            3 => {
                let scale = s[p - 1]
                    .abs()
                    .max(s[p - 2].abs())
                    .max(e[p - 2].abs())
                    .max(s[k].abs())
                    .max(e[k].abs());
                let sp = s[p - 1] / scale;
                let spm1 = s[p - 2] / scale;
                let epm1 = e[p - 2] / scale;
                let sk = s[k] / scale;
                let ek = e[k] / scale;
                let b = ((spm1 + sp) * (spm1 - sp) + epm1 * epm1) / 2.0;
                let c = (sp * epm1) * (sp * epm1);
                let mut shift = 0.0;
                if b != 0.0 || c != 0.0 {
                    shift = (b * b + c).sqrt();
                    if b < 0.0 {
                        shift = -shift;
                    }
                    shift = c / (b + shift);
                }
                let mut f = (sk + sp) * (sk - sp) + shift;
                let mut g = sk * ek;
                for j in k..(p - 1) {
                    let mut t = f.hypot(g);
                    let mut cs = f / t;
                    let mut sn = g / t;
                    if j != k {
                        e[j - 1] = t;
                    }
                    f = cs * s[j] + sn * e[j];
                    e[j] = cs * e[j] - sn * s[j];
                    g = sn * s[j + 1];
                    s[j + 1] *= cs;
                    givens_cols(&mut v, j, j + 1, cs, sn);
                    t = f.hypot(g);
                    cs = f / t;
                    sn = g / t;
                    s[j] = t;
                    f = cs * e[j] + sn * s[j + 1];
                    s[j + 1] = -sn * e[j] + cs * s[j + 1];
                    g = sn * e[j + 1];
                    e[j + 1] *= cs;
                    if j < m - 1 {
                        givens_cols(&mut u, j, j + 1, cs, sn);
                    }
                }
                e[p - 2] = f;
                iterations += 1;
            }
            // Converged: make s[k] nonnegative, then bubble it into place.
            _ => {
                let mut k = k;
                if s[k] <= 0.0 {
                    s[k] = if s[k] < 0.0 { -s[k] } else { 0.0 };
                    for i in 0..=pp {
                        v[(i, k)] = -v[(i, k)];
                    }
                }
                while k < pp && s[k] < s[k + 1] {
                    s.swap(k, k + 1);
                    swap_cols(&mut v, k, k + 1);
                    swap_cols(&mut u, k, k + 1);
                    k += 1;
                }
                iterations = 0;
                p -= 1;
            }
        }
    }

    s.truncate(n);
    Ok(Svd { u, s, v })
}

/// Columns `(a, b) ← (c·a + s·b, −s·a + c·b)`, matching the rotation convention above.
fn givens_cols(m: &mut Matrix, a: usize, b: usize, cs: f64, sn: f64) {
    for i in 0..m.rows() {
        let t = cs * m[(i, a)] + sn * m[(i, b)];
        m[(i, b)] = -sn * m[(i, a)] + cs * m[(i, b)];
        m[(i, a)] = t;
    }
}

fn swap_cols(m: &mut Matrix, a: usize, b: usize) {
    for i in 0..m.rows() {
        let t = m[(i, a)];
        m[(i, a)] = m[(i, b)];
        m[(i, b)] = t;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn check_invariants(input: &Matrix, svd: &Svd) {
        let k = input.min_dim();
        assert_eq!(svd.s.len(), k);
        assert_eq!(svd.u.shape(), (input.rows(), k));
        assert_eq!(svd.v.shape(), (input.cols(), k));
        assert!(svd.u.orthonormality_defect() <= 1e-10 * k as f64);
        assert!(svd.v.orthonormality_defect() <= 1e-10 * k as f64);
        assert!(svd.s.windows(2).all(|w| w[0] >= w[1]));
        assert!(svd.s.iter().all(|&x| x >= 0.0));
        let err = svd.reconstruct().sub(input).frobenius_norm();
        assert!(
            err <= 1e-8 * input.frobenius_norm().max(1.0),
            "reconstruction error {err:e}"
        );
    }

    #[test]
    fn identity_is_its_own_decomposition() {
        let svd = svd_thin(&Matrix::identity(3)).unwrap();
        assert_eq!(svd.s, vec![1.0, 1.0, 1.0]);
        assert_eq!(svd.u, Matrix::identity(3));
        assert_eq!(svd.v, Matrix::identity(3));
    }

    #[test]
    fn diagonal_values_come_back_sorted() {
        let svd = svd_thin(&Matrix::from_diag(&[1.0, 3.0, 2.0])).unwrap();
        assert_eq!(svd.s, vec![3.0, 2.0, 1.0]);
        // Column 0 of U is e_1 with a nonnegative pivot.
        assert_eq!(svd.u.column(0), vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn negative_diagonal_flips_v_not_u() {
        let svd = svd_thin(&Matrix::from_diag(&[-2.0, 1.0])).unwrap();
        assert_eq!(svd.s, vec![2.0, 1.0]);
        assert_eq!(svd.u.column(0), vec![1.0, 0.0]);
        assert_eq!(svd.v.column(0), vec![-1.0, 0.0]);
    }

    #[test]
    fn seeded_random_5x4_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Matrix::random_normal(5, 4, &mut rng);
        let svd = svd_thin(&m).unwrap();
        check_invariants(&m, &svd);
    }

    #[test]
    fn wide_and_rank_deficient_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = Matrix::random_normal(3, 2, &mut rng);
        let b = Matrix::random_normal(2, 7, &mut rng);
        let low_rank = a.matmul(&b); // 3x7, rank 2
        let svd = svd_thin(&low_rank).unwrap();
        check_invariants(&low_rank, &svd);
        assert!(svd.s[2] <= 1e-12 * svd.s[0]);

        let zero = Matrix::zeros(4, 3);
        let svd = svd_thin(&zero).unwrap();
        check_invariants(&zero, &svd);
        assert!(svd.s.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn golub_kahan_back_end_matches_jacobi() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(m, n) in &[(6, 6), (9, 4), (12, 1), (2, 2)] {
            let a = Matrix::random_normal(m, n, &mut rng);
            let gk = canonicalize(golub_kahan_tall(&a).unwrap());
            check_invariants(&a, &gk);
            let jac = canonicalize(jacobi_tall(&a));
            for (x, y) in gk.s.iter().zip(&jac.s) {
                assert!((x - y).abs() <= 1e-12 * jac.s[0]);
            }
            // Distinct singular values ⇒ canonical vectors agree too.
            assert!(gk.u.sub(&jac.u).max_abs() < 1e-9);
        }
    }

    #[test]
    fn large_inputs_use_golub_kahan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Matrix::random_normal(90, 70, &mut rng);
        check_invariants(&a, &svd_thin(&a).unwrap());
        let wide = Matrix::random_normal(40, 100, &mut rng);
        check_invariants(&wide, &svd_thin(&wide).unwrap());
        let low = Matrix::random_normal(80, 3, &mut rng).matmul(&Matrix::random_normal(3, 66, &mut rng));
        check_invariants(&low, &svd_thin(&low).unwrap());
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = Matrix::identity(2);
        m.as_mut_slice()[1] = f64::NAN;
        assert!(matches!(svd_thin(&m), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let a = Matrix::random_normal(7, 5, &mut rng);
        let x = svd_thin(&a).unwrap();
        let y = svd_thin(&a).unwrap();
        assert_eq!(x.u, y.u);
        assert_eq!(x.s, y.s);
        assert_eq!(x.v, y.v);
    }
}
