use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{svd_thin, Matrix};

/// Largest `‖PᵀP − I‖_F` accepted from a caller-supplied projector.
pub const PROJECTOR_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Assignment {
    LowRank,
    FullRank,
}

impl Assignment {
    pub fn bit(self) -> char {
        match self {
            Assignment::LowRank => '0',
            Assignment::FullRank => '1',
        }
    }
}

/// `m × r` matrix with orthonormal columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Projector {
    p: Matrix,
}

impl Projector {
    pub fn new(p: Matrix) -> Result<Self> {
        let proj = Self::new_unchecked(p);
        proj.check(PROJECTOR_TOL)?;
        Ok(proj)
    }

    /// Skips the orthonormality check; consumers that need it re-check.
    pub fn new_unchecked(p: Matrix) -> Self {
        Self { p }
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        if self.p.rows() < self.p.cols() {
            return Err(Error::InvalidProjector(f64::INFINITY));
        }
        let defect = self.p.orthonormality_defect();
        if defect > tol {
            return Err(Error::InvalidProjector(defect));
        }
        Ok(())
    }

    pub fn matrix(&self) -> &Matrix {
        &self.p
    }

    pub fn dim(&self) -> usize {
        self.p.rows()
    }

    pub fn rank(&self) -> usize {
        self.p.cols()
    }

    /// `Pᵀ G`.
    pub fn project(&self, g: &Matrix) -> Matrix {
        self.p.t_matmul(g)
    }

    /// `P X`.
    pub fn lift(&self, x: &Matrix) -> Matrix {
        self.p.matmul(x)
    }

    /// `P Pᵀ G`.
    pub fn project_lift(&self, g: &Matrix) -> Matrix {
        self.lift(&self.project(g))
    }
}

/// GaLore projector: the leading `r` left singular vectors of `grad`.
pub fn galore_projector(grad: &Matrix, r: usize) -> Result<Projector> {
    if r == 0 || r > grad.min_dim() {
        return Err(Error::input(format!(
            "rank {r} outside 1..={} for a {}x{} gradient",
            grad.min_dim(),
            grad.rows(),
            grad.cols()
        )));
    }
    let svd = svd_thin(grad)?;
    Ok(Projector::new_unchecked(svd.u.leading_columns(r)))
}

/// Per-block optimizer state.
///
/// Weights are held in an orientation with `rows ≤ cols` so the projector
/// always lives on the short side; [`BlockState::weights`] undoes that.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    weights: Matrix,
    transposed: bool,
    /// `r × n` when low-rank, `m × n` when full-rank (oriented frame).
    pub momentum: Matrix,
    pub projector: Option<Projector>,
    pub assignment: Assignment,
    /// Full-rank probability `q_ℓ` for the current period.
    pub q: f64,
    pub period_index: usize,
}

impl BlockState {
    /// Full-rank state with zero momentum.
    pub fn new(weights: Matrix) -> Self {
        let transposed = weights.rows() > weights.cols();
        let weights = if transposed { weights.transpose() } else { weights };
        let momentum = Matrix::zeros(weights.rows(), weights.cols());
        Self {
            weights,
            transposed,
            momentum,
            projector: None,
            assignment: Assignment::FullRank,
            q: 1.0,
            period_index: 0,
        }
    }

    pub(crate) fn from_parts(
        oriented_weights: Matrix,
        transposed: bool,
        momentum: Matrix,
        projector: Option<Projector>,
        assignment: Assignment,
        q: f64,
        period_index: usize,
    ) -> Self {
        Self {
            weights: oriented_weights,
            transposed,
            momentum,
            projector,
            assignment,
            q,
            period_index,
        }
    }

    /// Weights in the caller's orientation.
    pub fn weights(&self) -> Matrix {
        if self.transposed {
            self.weights.transpose()
        } else {
            self.weights.clone()
        }
    }

    pub fn oriented_weights(&self) -> &Matrix {
        &self.weights
    }

    pub(crate) fn oriented_weights_mut(&mut self) -> &mut Matrix {
        &mut self.weights
    }

    pub fn is_transposed(&self) -> bool {
        self.transposed
    }

    /// Shape in the caller's orientation.
    pub fn shape(&self) -> (usize, usize) {
        let (m, n) = self.weights.shape();
        if self.transposed {
            (n, m)
        } else {
            (m, n)
        }
    }

    /// Brings a caller-orientation gradient into the block's frame.
    pub fn orient(&self, grad: &Matrix) -> Result<Matrix> {
        if grad.shape() != self.shape() {
            return Err(Error::input(format!(
                "gradient shape {:?} does not match block shape {:?}",
                grad.shape(),
                self.shape()
            )));
        }
        Ok(if self.transposed { grad.transpose() } else { grad.clone() })
    }

    /// Optimizer-state scalars currently held (momentum plus projector).
    pub fn state_scalars(&self) -> usize {
        self.momentum.as_slice().len()
            + self
                .projector
                .as_ref()
                .map_or(0, |p| p.matrix().as_slice().len())
    }

    /// Starts a period: installs the projector and assignment and zeroes momentum.
    pub fn restart(&mut self, assignment: Assignment, projector: Option<Projector>, q: f64) -> Result<()> {
        let (m, n) = self.weights.shape();
        let rows = match (assignment, &projector) {
            (Assignment::FullRank, _) => m,
            (Assignment::LowRank, Some(p)) => {
                if p.dim() != m {
                    return Err(Error::state(format!(
                        "projector has {} rows, block has {m}",
                        p.dim()
                    )));
                }
                p.rank()
            }
            (Assignment::LowRank, None) => {
                return Err(Error::state("low-rank assignment without a projector"))
            }
        };
        self.momentum = Matrix::zeros(rows, n);
        self.projector = projector;
        self.assignment = assignment;
        self.q = q;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn galore_projector_on_diagonal() {
        let p = galore_projector(&Matrix::from_diag(&[3.0, 2.0, 1.0]), 2).unwrap();
        let expected = Matrix::identity(3).leading_columns(2);
        assert_eq!(p.matrix(), &expected);
    }

    #[test]
    fn galore_projector_rank_one() {
        let u = [1.0, -2.0, 2.0];
        let g = Matrix::outer(&u, &[0.5, 1.0, 0.0, 2.0]);
        let p = galore_projector(&g, 1).unwrap();
        let col = p.matrix().column(0);
        let dot: f64 = col.iter().zip(&u).map(|(a, b)| a * b / 3.0).sum();
        assert!((dot.abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn galore_projector_rejects_excess_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let g = Matrix::random_normal(3, 5, &mut rng);
        assert!(matches!(galore_projector(&g, 4), Err(Error::InvalidInput(_))));
        assert!(galore_projector(&g, 0).is_err());
    }

    #[test]
    fn projector_rejects_non_orthonormal() {
        let p = Matrix::from_rows(&[&[1.0, 1.0], &[0.0, 1.0], &[0.0, 0.0]]).unwrap();
        assert!(matches!(Projector::new(p), Err(Error::InvalidProjector(_))));
    }

    #[test]
    fn tall_blocks_are_oriented() {
        let w = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f64);
        let state = BlockState::new(w.clone());
        assert!(state.is_transposed());
        assert_eq!(state.oriented_weights().shape(), (3, 5));
        assert_eq!(state.weights(), w);
        assert_eq!(state.shape(), (5, 3));
        assert!(state.orient(&Matrix::zeros(3, 5)).is_err());
        assert_eq!(state.orient(&w).unwrap(), w.transpose());
    }

    #[test]
    fn restart_sizes_momentum_by_assignment() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = BlockState::new(Matrix::random_normal(4, 6, &mut rng));
        let p = galore_projector(&Matrix::random_normal(4, 6, &mut rng), 2).unwrap();
        s.restart(Assignment::LowRank, Some(p.clone()), 0.5).unwrap();
        assert_eq!(s.momentum.shape(), (2, 6));
        assert_eq!(s.state_scalars(), 12 + 8);
        s.restart(Assignment::FullRank, Some(p), 0.5).unwrap();
        assert_eq!(s.momentum.shape(), (4, 6));
        assert!(s.momentum.is_zero());
        assert!(s.restart(Assignment::LowRank, None, 0.5).is_err());
    }
}
