//! Synthetic problems with closed-form oracles.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::optim::GradientOracle;

pub const DEFAULT_SEED: u64 = 20;

/// Law of the scalar `ξ` multiplying the noise direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoiseLaw {
    /// `ξ ∈ {0, 1}` equiprobable; the noise has mean `σC/2`.
    ZeroOne,
    /// `ξ ∈ {−1, +1}` equiprobable; zero-mean noise.
    #[default]
    Symmetric,
}

impl NoiseLaw {
    pub fn draw<R: Rng + ?Sized>(self, rng: &mut R) -> f64 {
        let heads = rng.random_bool(0.5);
        match (self, heads) {
            (NoiseLaw::ZeroOne, true) | (NoiseLaw::Symmetric, true) => 1.0,
            (NoiseLaw::ZeroOne, false) => 0.0,
            (NoiseLaw::Symmetric, false) => -1.0,
        }
    }

    pub fn mean(self) -> f64 {
        match self {
            NoiseLaw::ZeroOne => 0.5,
            NoiseLaw::Symmetric => 0.0,
        }
    }
}

/// `f(X) = ½‖AX‖²_F + ⟨B, X⟩` on `n × n` matrices with `A = [I_{n−r} 0]`,
/// `B` holding `D` in its top-left corner and stochastic gradient
/// `∇f(X) + ξσC`, `C` the identity on the bottom-right `r × r` corner.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyLinearRegression {
    n: usize,
    r_noise: usize,
    sigma: f64,
    seed: u64,
    noise_law: NoiseLaw,
    d: Matrix,
}

impl NoisyLinearRegression {
    pub fn new(n: usize, r_noise: usize, sigma: f64, seed: u64, noise_law: NoiseLaw) -> Result<Self> {
        if r_noise == 0 || r_noise >= n {
            return Err(Error::input(format!("noise rank {r_noise} must lie in 1..{n}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::input(format!("sigma {sigma} must be finite and nonnegative")));
        }
        let k = n - r_noise;
        let d = Matrix::random_normal(k, k, &mut ChaCha8Rng::seed_from_u64(seed));
        Ok(Self {
            n,
            r_noise,
            sigma,
            seed,
            noise_law,
            d,
        })
    }

    /// Replaces `D`; used by tests with hand-picked minimizers.
    pub fn with_d(mut self, d: Matrix) -> Result<Self> {
        let k = self.n - self.r_noise;
        if d.shape() != (k, k) {
            return Err(Error::input(format!("D must be {k}x{k}")));
        }
        self.d = d;
        Ok(self)
    }

    /// `n = 20`, `r = 12`, `σ = 100`, zero-mean noise.
    pub fn counterexample() -> Self {
        Self::counterexample_with(NoiseLaw::Symmetric)
    }

    pub fn counterexample_with(noise_law: NoiseLaw) -> Self {
        Self::new(20, 12, 100.0, DEFAULT_SEED, noise_law).expect("fixed parameters are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn r_noise(&self) -> usize {
        self.r_noise
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn noise_law(&self) -> NoiseLaw {
        self.noise_law
    }

    pub fn d(&self) -> &Matrix {
        &self.d
    }

    fn top(&self) -> usize {
        self.n - self.r_noise
    }

    /// `A = [I 0]`, `(n − r) × n`.
    pub fn a_matrix(&self) -> Matrix {
        Matrix::from_fn(self.top(), self.n, |i, j| if i == j { 1.0 } else { 0.0 })
    }

    pub fn b_matrix(&self) -> Matrix {
        let k = self.top();
        Matrix::from_fn(self.n, self.n, |i, j| if i < k && j < k { self.d[(i, j)] } else { 0.0 })
    }

    pub fn c_matrix(&self) -> Matrix {
        let k = self.top();
        Matrix::from_fn(self.n, self.n, |i, j| if i == j && i >= k { 1.0 } else { 0.0 })
    }

    fn check(&self, x: &Matrix) -> Result<()> {
        if x.shape() != (self.n, self.n) {
            return Err(Error::input(format!("X must be {0}x{0}, got {1:?}", self.n, x.shape())));
        }
        Ok(())
    }

    pub fn loss(&self, x: &Matrix) -> Result<f64> {
        self.check(x)?;
        let k = self.top();
        let mut quad = 0.0;
        let mut lin = 0.0;
        for i in 0..k {
            let row = x.row(i);
            quad += row.iter().map(|v| v * v).sum::<f64>();
            lin += row[..k].iter().zip(self.d.row(i)).map(|(a, b)| a * b).sum::<f64>();
        }
        Ok(0.5 * quad + lin)
    }

    /// A priori bound on the rounding error of `loss(x) − optimal_value()`:
    /// `γ_N` times the sum of absolute terms, `N` the number of terms.
    pub fn shifted_loss_error_bound(&self, x: &Matrix) -> Result<f64> {
        self.check(x)?;
        let k = self.top();
        let mut abs_sum = 0.0;
        for i in 0..k {
            let row = x.row(i);
            abs_sum += 0.5 * row.iter().map(|v| v * v).sum::<f64>();
            abs_sum += row[..k].iter().zip(self.d.row(i)).map(|(a, b)| (a * b).abs()).sum::<f64>();
        }
        abs_sum += 2.0 * self.optimal_value().abs();
        let terms = (k * self.n + k * k + 2) as f64;
        let u = f64::EPSILON / 2.0;
        Ok(terms * u / (1.0 - terms * u) * abs_sum)
    }

    /// `AᵀAX + B`.
    pub fn true_grad(&self, x: &Matrix) -> Result<Matrix> {
        self.check(x)?;
        let k = self.top();
        Ok(Matrix::from_fn(self.n, self.n, |i, j| {
            if i >= k {
                0.0
            } else if j < k {
                x[(i, j)] + self.d[(i, j)]
            } else {
                x[(i, j)]
            }
        }))
    }

    /// Gradient at a fixed noise draw `ξ`.
    pub fn grad_with_xi(&self, x: &Matrix, xi: f64) -> Result<Matrix> {
        let mut g = self.true_grad(x)?;
        let k = self.top();
        let data = g.as_mut_slice();
        for i in k..self.n {
            data[i * self.n + i] += xi * self.sigma;
        }
        Ok(g)
    }

    pub fn grad<R: Rng + ?Sized>(&self, x: &Matrix, rng: &mut R) -> Result<Matrix> {
        let xi = self.noise_law.draw(rng);
        self.grad_with_xi(x, xi)
    }

    /// `−½‖D‖²_F`.
    pub fn optimal_value(&self) -> f64 {
        -0.5 * self.d.frobenius_norm_sq()
    }

    /// A minimizer: `−D` in the top-left corner, zero elsewhere.
    pub fn minimizer(&self) -> Matrix {
        let k = self.top();
        Matrix::from_fn(self.n, self.n, |i, j| if i < k && j < k { -self.d[(i, j)] } else { 0.0 })
    }
}

impl GradientOracle for NoisyLinearRegression {
    fn shapes(&self) -> Vec<(usize, usize)> {
        vec![(self.n, self.n)]
    }

    fn loss(&self, weights: &[Matrix]) -> Result<f64> {
        NoisyLinearRegression::loss(self, single(weights)?)
    }

    fn true_gradient(&self, weights: &[Matrix]) -> Result<Vec<Matrix>> {
        Ok(vec![self.true_grad(single(weights)?)?])
    }

    fn stochastic_gradient(&self, weights: &[Matrix], rng: &mut ChaCha8Rng) -> Result<Vec<Matrix>> {
        Ok(vec![self.grad(single(weights)?, rng)?])
    }

    fn optimal_value(&self) -> Option<f64> {
        Some(NoisyLinearRegression::optimal_value(self))
    }
}

fn single(weights: &[Matrix]) -> Result<&Matrix> {
    match weights {
        [x] => Ok(x),
        _ => Err(Error::input(format!("expected one block, got {}", weights.len()))),
    }
}

/// `Σ_ℓ ½‖A_ℓ W_ℓ − Y_ℓ‖²_F` with additive Gaussian gradient noise.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiBlockQuadratic {
    blocks: Vec<(Matrix, Matrix)>,
    noise_sigma: f64,
    seed: u64,
    optimum: Option<f64>,
}

impl MultiBlockQuadratic {
    pub fn new(blocks: Vec<(Matrix, Matrix)>, noise_sigma: f64, seed: u64) -> Result<Self> {
        if blocks.is_empty() {
            return Err(Error::input("need at least one block"));
        }
        for (i, (a, y)) in blocks.iter().enumerate() {
            if a.rows() != y.rows() {
                return Err(Error::input(format!(
                    "block {i}: A has {} rows, Y has {}",
                    a.rows(),
                    y.rows()
                )));
            }
        }
        if !(noise_sigma.is_finite() && noise_sigma >= 0.0) {
            return Err(Error::input(format!("noise sigma {noise_sigma} must be finite and nonnegative")));
        }
        Ok(Self {
            blocks,
            noise_sigma,
            seed,
            optimum: None,
        })
    }

    /// Planted instance: `A_ℓ` is `(m+4) × m` Gaussian scaled by `1/√(m+4)`,
    /// `Y_ℓ = A_ℓ W*_ℓ` for a Gaussian `W*_ℓ`, so the minimum is 0.
    pub fn random(shapes: &[(usize, usize)], noise_sigma: f64, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks = Vec::with_capacity(shapes.len());
        for &(m, n) in shapes {
            if m == 0 || n == 0 {
                return Err(Error::input("block dimensions must be positive"));
            }
            let p = m + 4;
            let a = Matrix::random_normal(p, m, &mut rng).scale(1.0 / (p as f64).sqrt());
            let w_star = Matrix::random_normal(m, n, &mut rng);
            let y = a.matmul(&w_star);
            blocks.push((a, y));
        }
        let mut q = Self::new(blocks, noise_sigma, seed)?;
        q.optimum = Some(0.0);
        Ok(q)
    }

    pub fn blocks(&self) -> &[(Matrix, Matrix)] {
        &self.blocks
    }

    pub fn noise_sigma(&self) -> f64 {
        self.noise_sigma
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    fn check(&self, weights: &[Matrix]) -> Result<()> {
        if weights.len() != self.blocks.len() {
            return Err(Error::input(format!(
                "expected {} blocks, got {}",
                self.blocks.len(),
                weights.len()
            )));
        }
        for (i, (w, (a, y))) in weights.iter().zip(&self.blocks).enumerate() {
            if w.shape() != (a.cols(), y.cols()) {
                return Err(Error::input(format!(
                    "block {i}: weights {:?}, expected {:?}",
                    w.shape(),
                    (a.cols(), y.cols())
                )));
            }
        }
        Ok(())
    }

    pub fn mbq_loss(&self, weights: &[Matrix]) -> Result<f64> {
        self.check(weights)?;
        Ok(weights
            .iter()
            .zip(&self.blocks)
            .map(|(w, (a, y))| 0.5 * a.matmul(w).sub(y).frobenius_norm_sq())
            .sum())
    }

    pub fn mbq_true_grad(&self, weights: &[Matrix]) -> Result<Vec<Matrix>> {
        self.check(weights)?;
        Ok(weights
            .iter()
            .zip(&self.blocks)
            .map(|(w, (a, y))| a.t_matmul(&a.matmul(w).sub(y)))
            .collect())
    }

    pub fn mbq_grad<R: Rng + ?Sized>(&self, weights: &[Matrix], rng: &mut R) -> Result<Vec<Matrix>> {
        let mut g = self.mbq_true_grad(weights)?;
        if self.noise_sigma > 0.0 {
            for gi in &mut g {
                let noise = Matrix::random_normal(gi.rows(), gi.cols(), rng);
                gi.axpy(self.noise_sigma, &noise);
            }
        }
        Ok(g)
    }
}

impl GradientOracle for MultiBlockQuadratic {
    fn shapes(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|(a, y)| (a.cols(), y.cols())).collect()
    }

    fn loss(&self, weights: &[Matrix]) -> Result<f64> {
        self.mbq_loss(weights)
    }

    fn true_gradient(&self, weights: &[Matrix]) -> Result<Vec<Matrix>> {
        self.mbq_true_grad(weights)
    }

    fn stochastic_gradient(&self, weights: &[Matrix], rng: &mut ChaCha8Rng) -> Result<Vec<Matrix>> {
        self.mbq_grad(weights, rng)
    }

    fn optimal_value(&self) -> Option<f64> {
        self.optimum
    }
}

/// Serializable problem description for harness configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// The 20×20 counterexample.
    Counterexample {
        #[serde(default)]
        noise_law: NoiseLaw,
    },
    NoisyLinearRegression {
        n: usize,
        r_noise: usize,
        sigma: f64,
        #[serde(default = "default_seed")]
        seed: u64,
        #[serde(default)]
        noise_law: NoiseLaw,
    },
    MultiBlockQuadratic {
        shapes: Vec<(usize, usize)>,
        noise_sigma: f64,
        #[serde(default = "default_seed")]
        seed: u64,
    },
}

fn default_seed() -> u64 {
    DEFAULT_SEED
}

/// A built problem behind the oracle interface.
pub type DynOracle = Box<dyn GradientOracle + Send + Sync>;

impl ProblemSpec {
    pub fn build(&self) -> Result<DynOracle> {
        Ok(match self {
            ProblemSpec::Counterexample { noise_law } => {
                Box::new(NoisyLinearRegression::counterexample_with(*noise_law))
            }
            ProblemSpec::NoisyLinearRegression {
                n,
                r_noise,
                sigma,
                seed,
                noise_law,
            } => Box::new(NoisyLinearRegression::new(*n, *r_noise, *sigma, *seed, *noise_law)?),
            ProblemSpec::MultiBlockQuadratic {
                shapes,
                noise_sigma,
                seed,
            } => Box::new(MultiBlockQuadratic::random(shapes, *noise_sigma, *seed)?),
        })
    }
}

/// Central differences with `h = 1e-6 · (1 + |x|)`.
pub fn finite_difference_gradient(f: impl Fn(&Matrix) -> Result<f64>, x: &Matrix) -> Result<Matrix> {
    let mut g = Matrix::zeros(x.rows(), x.cols());
    let mut probe = x.clone();
    for idx in 0..x.as_slice().len() {
        let x0 = x.as_slice()[idx];
        let h = 1e-6 * (1.0 + x0.abs());
        probe.as_mut_slice()[idx] = x0 + h;
        let up = f(&probe)?;
        probe.as_mut_slice()[idx] = x0 - h;
        let down = f(&probe)?;
        probe.as_mut_slice()[idx] = x0;
        g.as_mut_slice()[idx] = (up - down) / (2.0 * h);
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::svd_thin;
    use crate::optim::galore_projector;

    fn random_x(n: usize, seed: u64) -> Matrix {
        Matrix::random_normal(n, n, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn loss_at_zero_and_minimum() {
        let p = NoisyLinearRegression::counterexample();
        assert_eq!(p.loss(&Matrix::zeros(20, 20)).unwrap(), 0.0);
        let at_min = p.loss(&p.minimizer()).unwrap();
        assert!((at_min - p.optimal_value()).abs() < 1e-12);
        assert!(p.true_grad(&p.minimizer()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn error_bound_covers_rounding_near_minimum() {
        let p = NoisyLinearRegression::counterexample();
        let x = p.minimizer();
        let shifted = p.loss(&x).unwrap() - p.optimal_value();
        let bound = p.shifted_loss_error_bound(&x).unwrap();
        assert!(shifted.abs() <= bound);
        assert!(bound < 1e-10 && bound > 0.0);
    }

    #[test]
    fn loss_matches_dense_assembly() {
        let p = NoisyLinearRegression::counterexample();
        let (a, b) = (p.a_matrix(), p.b_matrix());
        for seed in 0..5 {
            let x = random_x(20, seed);
            let dense = 0.5 * a.matmul(&x).frobenius_norm_sq() + b.frob_dot(&x);
            assert!((p.loss(&x).unwrap() - dense).abs() <= 1e-10 * (1.0 + dense.abs()));
            let g_dense = a.t_matmul(&a.matmul(&x)).add(&b);
            assert!(p.true_grad(&x).unwrap().sub(&g_dense).max_abs() < 1e-12);
        }
    }

    #[test]
    fn counterexample_dimensions() {
        let p = NoisyLinearRegression::counterexample();
        assert_eq!(p.a_matrix().shape(), (8, 20));
        assert_eq!(p.d().shape(), (8, 8));
        let c = p.c_matrix();
        assert_eq!(c.submatrix(8, 20, 8, 20), Matrix::identity(12));
        assert_eq!(c.frobenius_norm_sq(), 12.0);
        assert_eq!(p.sigma(), 100.0);
    }

    #[test]
    fn shape_errors() {
        let p = NoisyLinearRegression::counterexample();
        assert!(p.loss(&Matrix::zeros(20, 19)).is_err());
        assert!(NoisyLinearRegression::new(5, 5, 1.0, 0, NoiseLaw::ZeroOne).is_err());
        assert!(NoisyLinearRegression::new(5, 2, -1.0, 0, NoiseLaw::ZeroOne).is_err());
    }

    #[test]
    fn sigma_zero_gradient_at_origin_is_b() {
        let p = NoisyLinearRegression::new(20, 12, 0.0, 3, NoiseLaw::ZeroOne).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(p.grad(&Matrix::zeros(20, 20), &mut rng).unwrap(), p.b_matrix());
    }

    #[test]
    fn xi_one_adds_sigma_c_on_disjoint_support() {
        let p = NoisyLinearRegression::counterexample();
        let g = p.grad_with_xi(&Matrix::zeros(20, 20), 1.0).unwrap();
        assert_eq!(g, p.b_matrix().add(&p.c_matrix().scale(100.0)));
        let x = random_x(20, 9);
        let diff = p.grad_with_xi(&x, 1.0).unwrap().sub(&p.grad_with_xi(&x, 0.0).unwrap());
        for i in 0..20 {
            for j in 0..20 {
                if i < 8 || j < 8 {
                    assert_eq!(diff[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn noise_means() {
        for (law, mean) in [(NoiseLaw::ZeroOne, 0.5), (NoiseLaw::Symmetric, 0.0)] {
            let p = NoisyLinearRegression::counterexample_with(law);
            let x = random_x(20, 2);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let trials = 10_000;
            let mut acc = Matrix::zeros(20, 20);
            for _ in 0..trials {
                acc.axpy(1.0 / trials as f64, &p.grad(&x, &mut rng).unwrap());
            }
            let expected = p.true_grad(&x).unwrap().add(&p.c_matrix().scale(mean * 100.0));
            // ξ has standard deviation at most 1, so σ·1/√N per diagonal entry.
            let se = 100.0 / (trials as f64).sqrt();
            assert!(acc.sub(&expected).max_abs() < 4.0 * se, "{law:?}");
            assert_eq!(law.mean(), mean);
        }
    }

    #[test]
    fn optimal_value_closed_forms() {
        let p = NoisyLinearRegression::new(4, 2, 1.0, 0, NoiseLaw::ZeroOne).unwrap();
        let zero = p.clone().with_d(Matrix::zeros(2, 2)).unwrap();
        assert_eq!(zero.optimal_value(), 0.0);
        let eye = p.with_d(Matrix::identity(2)).unwrap();
        assert_eq!(eye.optimal_value(), -1.0);
    }

    #[test]
    fn finite_differences_agree() {
        let p = NoisyLinearRegression::counterexample();
        for seed in 0..3 {
            let x = random_x(20, seed);
            let g = p.true_grad(&x).unwrap();
            let fd = finite_difference_gradient(|x| p.loss(x), &x).unwrap();
            assert!(g.sub(&fd).frobenius_norm() <= 1e-4 * (1.0 + g.frobenius_norm()));
        }
    }

    #[test]
    fn loss_is_convex_along_segments() {
        let p = NoisyLinearRegression::counterexample();
        for seed in 0..10 {
            let (x1, x2) = (random_x(20, seed), random_x(20, seed + 100));
            for lam in [0.0, 0.25, 0.5, 0.9, 1.0] {
                let mid = x1.scale(lam).add(&x2.scale(1.0 - lam));
                let lhs = p.loss(&mid).unwrap();
                let rhs = lam * p.loss(&x1).unwrap() + (1.0 - lam) * p.loss(&x2).unwrap();
                assert!(lhs <= rhs + 1e-10);
            }
        }
    }

    #[test]
    fn galore_projector_annihilates_true_gradient() {
        let p = NoisyLinearRegression::counterexample();
        let x0 = Matrix::zeros(20, 20);
        let g = p.grad_with_xi(&x0, 1.0).unwrap();
        let proj = galore_projector(&g, 12).unwrap();
        let truth = p.true_grad(&x0).unwrap();
        assert!(proj.project_lift(&truth).frobenius_norm() <= 1e-8 * truth.frobenius_norm());
        // The projector spans the bottom 12 coordinates: its top 8 rows vanish.
        assert!(proj.matrix().submatrix(0, 8, 0, 12).max_abs() < 1e-12);
        let s = svd_thin(&g).unwrap().s;
        assert!(s[11] > s[12]);
    }

    #[test]
    fn mbq_planted_solution_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::random_normal(6, 4, &mut rng);
        let w = Matrix::random_normal(4, 5, &mut rng);
        let q = MultiBlockQuadratic::new(vec![(a.clone(), a.matmul(&w))], 0.0, 0).unwrap();
        let ws = [w];
        assert!(q.mbq_loss(&ws).unwrap() < 1e-24);
        assert!(q.mbq_grad(&ws, &mut rng).unwrap()[0].max_abs() < 1e-12);
    }

    #[test]
    fn mbq_identity_block_gradient() {
        let y = Matrix::from_fn(3, 4, |i, j| (i + 2 * j) as f64);
        let q = MultiBlockQuadratic::new(vec![(Matrix::identity(3), y.clone())], 0.0, 0).unwrap();
        let w = Matrix::from_fn(3, 4, |i, j| (i * j) as f64 * 0.5);
        let g = q.mbq_true_grad(&[w.clone()]).unwrap();
        assert!(g[0].sub(&w.sub(&y)).max_abs() < 1e-15);
    }

    #[test]
    fn mbq_finite_differences() {
        let q = MultiBlockQuadratic::random(&[(4, 6), (5, 3), (3, 3)], 0.0, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ws: Vec<Matrix> = q
            .shapes()
            .iter()
            .map(|&(m, n)| Matrix::random_normal(m, n, &mut rng))
            .collect();
        let g = q.mbq_true_grad(&ws).unwrap();
        for l in 0..ws.len() {
            let fd = finite_difference_gradient(
                |x| {
                    let mut w = ws.clone();
                    w[l] = x.clone();
                    q.mbq_loss(&w)
                },
                &ws[l],
            )
            .unwrap();
            assert!(g[l].sub(&fd).frobenius_norm() <= 1e-5 * g[l].frobenius_norm().max(1.0));
        }
        assert!(q.mbq_loss(&ws[..2]).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let specs = [
            ProblemSpec::Counterexample { noise_law: NoiseLaw::ZeroOne },
            ProblemSpec::MultiBlockQuadratic {
                shapes: vec![(8, 12), (12, 8)],
                noise_sigma: 0.5,
                seed: 3,
            },
        ];
        for s in specs {
            let text = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<ProblemSpec>(&text).unwrap(), s);
            assert!(s.build().is_ok());
        }
        let parsed: ProblemSpec = serde_json::from_str(r#"{"name":"counterexample"}"#).unwrap();
        assert_eq!(parsed, ProblemSpec::Counterexample { noise_law: NoiseLaw::Symmetric });
    }
}
