//! Objective-function abstraction and the built-in benchmark families.
//!
//! A [`Problem`] bundles value/gradient/Hessian-vector-product oracles with
//! the smoothness metadata the optimizer's schedule needs: a gradient-
//! Lipschitz constant `ℓ`, a Hessian-Lipschitz constant `ρ`, and an initial
//! suboptimality bound `Δf`. The built-in families ship constants computed
//! analytically on the box `‖x‖∞ ≤ 1.5`, which encloses the standard
//! initializations and the sublevel sets they reach; all three fields are
//! overridable for nonstandard uses.
//!
//! [`NoisyGradModel`] wraps a problem with an isotropic-Gaussian gradient
//! noise model for the stochastic variant: a single sample satisfies
//! `E[g̃] = ∇f(x)` and `E‖g̃ − ∇f(x)‖² = σ²`, and a batch of size `B` has
//! noise variance `σ²/B`.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::ParamError;
use crate::vecmath::norm;

/// Dense symmetric quadratic data for the random-quadratic family.
#[derive(Clone, Debug, PartialEq)]
struct QuadraticData {
    /// Row-major `d×d` symmetric matrix `A`.
    matrix: Vec<f64>,
    /// Linear term `b` in `f(x) = ½xᵀAx − bᵀx`.
    linear: Vec<f64>,
    /// Spectrum of `A`, ascending, as supplied at construction.
    eigenvalues: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
enum Family {
    SeparableQuartic,
    CoupledQuartic { coupling: f64 },
    Rosenbrock,
    Quadratic(Box<QuadraticData>),
}

/// A smooth objective with explicit oracles and smoothness metadata.
///
/// Construction goes through the family constructors
/// ([`Problem::separable_quartic`], [`Problem::coupled_quartic`],
/// [`Problem::rosenbrock`], [`Problem::random_quadratic`]); evaluation is
/// pure and safe for concurrent read-only use.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    name: &'static str,
    dim: usize,
    family: Family,
    grad_lipschitz: f64,
    hess_lipschitz: f64,
    suboptimality: f64,
}

impl Problem {
    /// `f(x) = Σᵢ (xᵢ⁴ − xᵢ²)`: an independent double well per coordinate,
    /// with a strict saddle at the origin (curvature −2 in every direction)
    /// and minima at every `(±1/√2, …, ±1/√2)` sign pattern, `f_min = −d/4`.
    ///
    /// Box constants: `ℓ = 12·1.5² − 2 = 25`, `ρ = 24·1.5 = 36`.
    pub fn separable_quartic(dim: usize) -> Result<Problem, ParamError> {
        if dim == 0 {
            return Err(ParamError::invalid("dim", "must be ≥ 1"));
        }
        Ok(Problem {
            name: "separable_quartic",
            dim,
            family: Family::SeparableQuartic,
            grad_lipschitz: 25.0,
            hess_lipschitz: 36.0,
            // Standard start is near the origin (f ≈ 0), so the gap to
            // f_min = −d/4 bounds the initial suboptimality.
            suboptimality: dim as f64 / 4.0,
        })
    }

    /// `f(x) = Σᵢ (xᵢ⁴ − xᵢ²) + c·Σ_{i<j} xᵢxⱼ`: the separable quartic plus a
    /// uniform pairwise coupling that tilts the saddle structure without
    /// destroying it. Gradient and HVP cost `O(d)` via the row-sum identity
    /// `Σ_{j≠i} xⱼ = S − xᵢ`.
    ///
    /// Box constants: `ℓ = 25 + c(d−1)` (coupling Hessian `c(J − I)` has
    /// spectral norm `c(d−1)`), `ρ = 36` (the coupling is quadratic, so the
    /// Hessian-Lipschitz constant is unchanged).
    pub fn coupled_quartic(dim: usize, coupling: f64) -> Result<Problem, ParamError> {
        if dim < 2 {
            return Err(ParamError::invalid("dim", "must be ≥ 2"));
        }
        if !coupling.is_finite() || coupling < 0.0 {
            return Err(ParamError::invalid("coupling", "must be finite and ≥ 0"));
        }
        Ok(Problem {
            name: "coupled_quartic",
            dim,
            family: Family::CoupledQuartic { coupling },
            grad_lipschitz: 25.0 + coupling * (dim as f64 - 1.0),
            hess_lipschitz: 36.0,
            // On the box, c·Σ_{i<j} xᵢxⱼ ≥ −(c/2)·Σxᵢ² ≥ −(c/2)·2.25·d, so
            // f ≥ −d/4 − 1.125·c·d and a near-origin start has at most this
            // much room to fall.
            suboptimality: dim as f64 / 4.0 + 1.125 * coupling * dim as f64,
        })
    }

    /// Chained Rosenbrock: `f(x) = Σ_{i<d} [100(x_{i+1} − xᵢ²)² + (1 − xᵢ)²]`,
    /// global minimum 0 at the all-ones point.
    ///
    /// Box constants via Gershgorin row sums at `‖x‖∞ ≤ 1.5`:
    /// `ℓ = 1200·1.5² + 1200·1.5 + 202 = 4702`; third-derivative row sums
    /// give `ρ = 2400·1.5 + 1200 = 4800`.
    pub fn rosenbrock(dim: usize) -> Result<Problem, ParamError> {
        if dim < 2 {
            return Err(ParamError::invalid("dim", "must be ≥ 2"));
        }
        Ok(Problem {
            name: "rosenbrock",
            dim,
            family: Family::Rosenbrock,
            grad_lipschitz: 4702.0,
            hess_lipschitz: 4800.0,
            // f at the classic (−1.2, 1, …, 1) start; f_min = 0.
            suboptimality: 24.2,
        })
    }

    /// `f(x) = ½xᵀAx − bᵀx` with `A = QᵀΛQ` for a seeded random orthogonal
    /// `Q` and the given ascending spectrum `Λ`; here `b = 0`. The Hessian is
    /// constant (`ρ = 0`), `ℓ = max|λᵢ|`, and the exact smallest eigenvalue
    /// is available via [`Problem::exact_min_eigenvalue`].
    pub fn random_quadratic(
        dim: usize,
        eigenvalues: &[f64],
        seed: u64,
    ) -> Result<Problem, ParamError> {
        Self::random_quadratic_with_linear(dim, eigenvalues, seed, 0.0)
    }

    /// Like [`Problem::random_quadratic`] but with `b` drawn as a seeded
    /// Gaussian vector scaled by `linear_scale` (the same seed fixes both the
    /// basis and `b`; scale 0 gives exactly `b = 0`).
    pub fn random_quadratic_with_linear(
        dim: usize,
        eigenvalues: &[f64],
        seed: u64,
        linear_scale: f64,
    ) -> Result<Problem, ParamError> {
        if dim == 0 {
            return Err(ParamError::invalid("dim", "must be ≥ 1"));
        }
        if eigenvalues.len() != dim {
            return Err(ParamError::DimensionMismatch {
                what: "eigenvalues",
                expected: dim,
                actual: eigenvalues.len(),
            });
        }
        if eigenvalues.iter().any(|l| !l.is_finite()) {
            return Err(ParamError::invalid("eigenvalues", "must be finite"));
        }
        if eigenvalues.windows(2).any(|w| w[0] > w[1]) {
            return Err(ParamError::invalid("eigenvalues", "must be sorted ascending"));
        }
        if !linear_scale.is_finite() || linear_scale < 0.0 {
            return Err(ParamError::invalid("linear_scale", "must be finite and ≥ 0"));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = random_orthogonal_rows(dim, &mut rng);
        let linear: Vec<f64> = if linear_scale == 0.0 {
            vec![0.0; dim]
        } else {
            (0..dim)
                .map(|_| linear_scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        };

        // A = Σ_k λ_k q_k q_kᵀ, filled for i ≤ j and mirrored so the stored
        // matrix is exactly symmetric.
        let mut matrix = vec![0.0; dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let mut a_ij = 0.0;
                for (lambda, q) in eigenvalues.iter().zip(&basis) {
                    a_ij += lambda * q[i] * q[j];
                }
                matrix[i * dim + j] = a_ij;
                matrix[j * dim + i] = a_ij;
            }
        }

        let ell = eigenvalues
            .iter()
            .fold(0.0_f64, |acc, l| acc.max(l.abs()))
            .max(f64::MIN_POSITIVE); // ℓ must stay > 0 even for Λ = 0
        let b_norm = norm(&linear);
        Ok(Problem {
            name: "random_quadratic",
            dim,
            family: Family::Quadratic(Box::new(QuadraticData {
                matrix,
                linear,
                eigenvalues: eigenvalues.to_vec(),
            })),
            grad_lipschitz: ell,
            hess_lipschitz: 0.0,
            // From a unit-sphere start, f(x₀) ≤ ℓ/2 + ‖b‖; a crude but safe
            // initial gap for the convex case (overridable like the rest).
            suboptimality: ell / 2.0 + b_norm,
            })
    }

    /// Family name (`separable_quartic`, `coupled_quartic`, `rosenbrock`,
    /// `random_quadratic`), matching the CLI config vocabulary.
    pub fn name(&self) -> &'static str {
        self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Gradient-Lipschitz constant `ℓ` on the documented box.
    pub fn grad_lipschitz(&self) -> f64 {
        self.grad_lipschitz
    }

    /// Hessian-Lipschitz constant `ρ` on the documented box (0 for the
    /// quadratic family).
    pub fn hess_lipschitz(&self) -> f64 {
        self.hess_lipschitz
    }

    /// Initial suboptimality bound `Δf` for the standard initialization
    /// (an estimate; override with [`Problem::with_suboptimality`]).
    pub fn suboptimality(&self) -> f64 {
        self.suboptimality
    }

    /// Override the gradient-Lipschitz constant.
    pub fn with_grad_lipschitz(mut self, ell: f64) -> Result<Problem, ParamError> {
        if !ell.is_finite() || ell <= 0.0 {
            return Err(ParamError::invalid("grad_lipschitz", "must be finite and > 0"));
        }
        self.grad_lipschitz = ell;
        Ok(self)
    }

    /// Override the Hessian-Lipschitz constant.
    pub fn with_hess_lipschitz(mut self, rho: f64) -> Result<Problem, ParamError> {
        if !rho.is_finite() || rho < 0.0 {
            return Err(ParamError::invalid("hess_lipschitz", "must be finite and ≥ 0"));
        }
        self.hess_lipschitz = rho;
        Ok(self)
    }

    /// Override the initial suboptimality bound.
    pub fn with_suboptimality(mut self, delta_f: f64) -> Result<Problem, ParamError> {
        if !delta_f.is_finite() || delta_f < 0.0 {
            return Err(ParamError::invalid("suboptimality", "must be finite and ≥ 0"));
        }
        self.suboptimality = delta_f;
        Ok(self)
    }

    /// Exact global minimum value where one is known in closed form
    /// (separable quartic: `−d/4`; Rosenbrock: `0`).
    pub fn known_min_value(&self) -> Option<f64> {
        match &self.family {
            Family::SeparableQuartic => Some(-(self.dim as f64) / 4.0),
            Family::Rosenbrock => Some(0.0),
            Family::CoupledQuartic { .. } => None,
            Family::Quadratic(q) => {
                // Only the clean convex homogeneous case is worth reporting.
                if q.linear.iter().all(|&b| b == 0.0) && q.eigenvalues[0] >= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// A finite lower bound on `f` over the documented box, where available.
    pub fn min_value_lower_bound(&self) -> Option<f64> {
        let d = self.dim as f64;
        match &self.family {
            Family::SeparableQuartic => Some(-d / 4.0),
            Family::CoupledQuartic { coupling } => Some(-d / 4.0 - 1.125 * coupling * d),
            Family::Rosenbrock => Some(0.0),
            Family::Quadratic(q) => {
                if q.linear.iter().all(|&b| b == 0.0) && q.eigenvalues[0] >= 0.0 {
                    Some(0.0)
                } else {
                    None
                }
            }
        }
    }

    /// Exact smallest Hessian eigenvalue, available only for the
    /// constant-Hessian quadratic family (for estimator comparisons).
    pub fn exact_min_eigenvalue(&self) -> Option<f64> {
        match &self.family {
            Family::Quadratic(q) => Some(q.eigenvalues[0]),
            _ => None,
        }
    }

    /// Objective value `f(x)`.
    pub fn value(&self, x: &[f64]) -> f64 {
        self.check_dim(x, "x");
        match &self.family {
            Family::SeparableQuartic => x.iter().map(|&v| v * v * (v * v - 1.0)).sum(),
            Family::CoupledQuartic { coupling } => {
                let quartic: f64 = x.iter().map(|&v| v * v * (v * v - 1.0)).sum();
                let s: f64 = x.iter().sum();
                let sq: f64 = x.iter().map(|&v| v * v).sum();
                quartic + coupling * 0.5 * (s * s - sq)
            }
            Family::Rosenbrock => x
                .windows(2)
                .map(|w| {
                    let gap = w[1] - w[0] * w[0];
                    100.0 * gap * gap + (1.0 - w[0]) * (1.0 - w[0])
                })
                .sum(),
            Family::Quadratic(q) => {
                let d = self.dim;
                let mut acc = 0.0;
                for i in 0..d {
                    let row = &q.matrix[i * d..(i + 1) * d];
                    let ax_i: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                    acc += 0.5 * x[i] * ax_i - q.linear[i] * x[i];
                }
                acc
            }
        }
    }

    /// Gradient `∇f(x)` written into `out`.
    pub fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        self.check_dim(x, "x");
        self.check_dim(out, "out");
        match &self.family {
            Family::SeparableQuartic => {
                for (g, &v) in out.iter_mut().zip(x) {
                    *g = 4.0 * v * v * v - 2.0 * v;
                }
            }
            Family::CoupledQuartic { coupling } => {
                let s: f64 = x.iter().sum();
                for (g, &v) in out.iter_mut().zip(x) {
                    *g = 4.0 * v * v * v - 2.0 * v + coupling * (s - v);
                }
            }
            Family::Rosenbrock => {
                out.fill(0.0);
                for i in 0..self.dim - 1 {
                    let gap = x[i + 1] - x[i] * x[i];
                    out[i] += -400.0 * x[i] * gap - 2.0 * (1.0 - x[i]);
                    out[i + 1] += 200.0 * gap;
                }
            }
            Family::Quadratic(q) => {
                let d = self.dim;
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &q.matrix[i * d..(i + 1) * d];
                    let ax_i: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
                    *o = ax_i - q.linear[i];
                }
            }
        }
    }

    /// Gradient `∇f(x)` as a fresh vector.
    pub fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.grad_into(x, &mut out);
        out
    }

    /// Analytic Hessian-vector product `∇²f(x)·v` written into `out`.
    pub fn hvp_into(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        self.check_dim(x, "x");
        self.check_dim(v, "v");
        self.check_dim(out, "out");
        match &self.family {
            Family::SeparableQuartic => {
                for ((o, &xi), &vi) in out.iter_mut().zip(x).zip(v) {
                    *o = (12.0 * xi * xi - 2.0) * vi;
                }
            }
            Family::CoupledQuartic { coupling } => {
                let vs: f64 = v.iter().sum();
                for ((o, &xi), &vi) in out.iter_mut().zip(x).zip(v) {
                    *o = (12.0 * xi * xi - 2.0) * vi + coupling * (vs - vi);
                }
            }
            Family::Rosenbrock => {
                out.fill(0.0);
                for i in 0..self.dim - 1 {
                    // Terms of the i-th pair: 100(x_{i+1} − xᵢ²)² + (1 − xᵢ)².
                    let h_ii = 1200.0 * x[i] * x[i] - 400.0 * x[i + 1] + 2.0;
                    let h_ic = -400.0 * x[i]; // ∂²/∂xᵢ∂x_{i+1}
                    out[i] += h_ii * v[i] + h_ic * v[i + 1];
                    out[i + 1] += h_ic * v[i] + 200.0 * v[i + 1];
                }
            }
            Family::Quadratic(q) => {
                let d = self.dim;
                for (i, o) in out.iter_mut().enumerate() {
                    let row = &q.matrix[i * d..(i + 1) * d];
                    *o = row.iter().zip(v).map(|(a, w)| a * w).sum();
                }
            }
        }
    }

    /// Analytic Hessian-vector product as a fresh vector.
    pub fn hvp(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.hvp_into(x, v, &mut out);
        out
    }

    fn check_dim(&self, v: &[f64], what: &str) {
        assert_eq!(
            v.len(),
            self.dim,
            "{}: expected a vector of dim {}, got {}",
            what,
            self.dim,
            v.len()
        );
    }
}

/// Rows of a random orthogonal matrix: seeded Gaussian rows orthonormalized
/// by modified Gram–Schmidt (with a re-draw guard for the measure-zero
/// degenerate case).
fn random_orthogonal_rows(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut q: Vec<f64> = (0..dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        for prev in &rows {
            let proj = crate::vecmath::dot(&q, prev);
            crate::vecmath::axpy(-proj, prev, &mut q);
        }
        let n = norm(&q);
        if n < 1e-12 {
            continue; // linearly dependent draw; essentially impossible
        }
        crate::vecmath::scale(&mut q, 1.0 / n);
        rows.push(q);
    }
    rows
}

/// Default finite-difference step for Hessian-vector products:
/// `h = 1e-5 · (1 + ‖x‖)`, balancing truncation against 64-bit rounding.
pub fn fd_step(x: &[f64]) -> f64 {
    1e-5 * (1.0 + norm(x))
}

/// Central-difference Hessian-vector product fallback:
/// `(∇f(x + h·v̂) − ∇f(x − h·v̂)) · ‖v‖ / (2h)` with `v̂ = v/‖v‖`, whose error
/// is `O(ρ·h·‖v‖)`. `v = 0` returns the exact answer `H·0 = 0`.
pub fn hvp_finite_difference(p: &Problem, x: &[f64], v: &[f64], h: f64) -> Vec<f64> {
    assert!(h > 0.0, "finite-difference step h must be > 0, got {h}");
    let d = p.dim();
    let vnorm = norm(v);
    if vnorm == 0.0 {
        return vec![0.0; d];
    }
    let mut shifted = vec![0.0; d];
    let mut g_plus = vec![0.0; d];
    let mut g_minus = vec![0.0; d];
    crate::vecmath::add_scaled_into(x, h / vnorm, v, &mut shifted);
    p.grad_into(&shifted, &mut g_plus);
    crate::vecmath::add_scaled_into(x, -h / vnorm, v, &mut shifted);
    p.grad_into(&shifted, &mut g_minus);
    g_plus
        .iter()
        .zip(&g_minus)
        .map(|(gp, gm)| (gp - gm) * vnorm / (2.0 * h))
        .collect()
}

/// A problem plus an isotropic-Gaussian gradient-noise model with per-sample
/// variance proxy `σ²` (total expected squared noise norm of one sample).
///
/// The model owns a seeded RNG stream, so stochastic gradients are
/// deterministic given `(seed, call order)`. One model instance belongs to
/// one run; parallel runs clone the problem into fresh models with distinct
/// seeds.
#[derive(Clone, Debug)]
pub struct NoisyGradModel {
    problem: Problem,
    sigma2: f64,
    rng: ChaCha8Rng,
}

impl NoisyGradModel {
    pub fn new(problem: Problem, sigma2: f64, seed: u64) -> Result<Self, ParamError> {
        if !sigma2.is_finite() || sigma2 < 0.0 {
            return Err(ParamError::invalid("sigma2", "must be finite and ≥ 0"));
        }
        Ok(NoisyGradModel {
            problem,
            sigma2,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn problem(&self) -> &Problem {
        &self.problem
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Mini-batch stochastic gradient: `∇f(x)` plus the mean of `batch`
    /// independent isotropic Gaussian noise draws, i.e. Gaussian noise with
    /// total variance `σ²/batch` split evenly across coordinates. The batch
    /// mean is sampled directly from that law (one `d`-dimensional draw), so
    /// the cost is `O(d)` regardless of batch size. With `σ² = 0` the RNG is
    /// untouched and the result is exactly `∇f(x)`.
    pub fn stochastic_grad_into(&mut self, x: &[f64], batch: u64, out: &mut [f64]) {
        assert!(batch >= 1, "batch size must be ≥ 1, got {batch}");
        self.problem.grad_into(x, out);
        if self.sigma2 == 0.0 {
            return;
        }
        let d = self.problem.dim() as f64;
        let per_coord_sd = (self.sigma2 / (batch as f64 * d)).sqrt();
        for o in out.iter_mut() {
            *o += per_coord_sd * self.rng.sample::<f64, _>(StandardNormal);
        }
    }

    /// Mini-batch stochastic gradient as a fresh vector.
    pub fn stochastic_grad(&mut self, x: &[f64], batch: u64) -> Vec<f64> {
        let mut out = vec![0.0; self.problem.dim()];
        self.stochastic_grad_into(x, batch, &mut out);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::dot;

    const SQRT_HALF: f64 = std::f64::consts::FRAC_1_SQRT_2;

    fn assert_close(a: f64, b: f64, tol: f64, what: &str) {
        assert!(
            (a - b).abs() <= tol,
            "{what}: {a} vs {b} differ by {} (tol {tol})",
            (a - b).abs()
        );
    }

    #[test]
    fn separable_quartic_pointwise_values() {
        let p1 = Problem::separable_quartic(1).unwrap();
        assert_eq!(p1.value(&[0.0]), 0.0);
        assert_eq!(p1.grad(&[0.0]), vec![0.0]);
        // Curvature at the origin saddle is −2 in every direction.
        assert_eq!(p1.hvp(&[0.0], &[1.0]), vec![-2.0]);

        let p10 = Problem::separable_quartic(10).unwrap();
        let minimizer = vec![SQRT_HALF; 10];
        assert_close(p10.value(&minimizer), -2.5, 1e-12, "f at minimizer");
        assert!(norm(&p10.grad(&minimizer)) < 1e-12, "minimizer gradient");
        // Hessian at the minimizer is 4·I: check one coordinate direction.
        let mut e0 = vec![0.0; 10];
        e0[0] = 1.0;
        let h = p10.hvp(&minimizer, &e0);
        assert_close(h[0], 4.0, 1e-12, "curvature at minimizer");

        let p3 = Problem::separable_quartic(3).unwrap();
        assert_eq!(p3.value(&[1.0, 0.0, 0.0]), 0.0);
        assert_eq!(p3.grad(&[1.0, 0.0, 0.0]), vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn coupled_quartic_matches_hand_values() {
        let p = Problem::coupled_quartic(2, 0.1).unwrap();
        assert_eq!(p.value(&[0.0, 0.0]), 0.0);
        assert_eq!(p.grad(&[0.0, 0.0]), vec![0.0, 0.0]);
        assert_close(p.value(&[1.0, 1.0]), 0.1, 1e-15, "coupled f(1,1)");
        let g = p.grad(&[1.0, 1.0]);
        assert_close(g[0], 2.1, 1e-15, "coupled grad");
        assert_close(g[1], 2.1, 1e-15, "coupled grad");
        assert_close(p.grad_lipschitz(), 25.1, 1e-12, "coupled ell");
    }

    #[test]
    fn coupled_with_zero_coupling_is_bitwise_separable() {
        let coupled = Problem::coupled_quartic(3, 0.0).unwrap();
        let plain = Problem::separable_quartic(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.5..1.5)).collect();
            assert_eq!(coupled.value(&x), plain.value(&x), "value mismatch at {x:?}");
            assert_eq!(coupled.grad(&x), plain.grad(&x), "grad mismatch at {x:?}");
        }
    }

    #[test]
    fn rosenbrock_known_points() {
        let p2 = Problem::rosenbrock(2).unwrap();
        assert_eq!(p2.value(&[1.0, 1.0]), 0.0);
        assert_eq!(p2.grad(&[1.0, 1.0]), vec![0.0, 0.0]);
        assert_eq!(p2.value(&[0.0, 0.0]), 1.0);
        assert_eq!(p2.grad(&[0.0, 0.0]), vec![-2.0, 0.0]);

        let p5 = Problem::rosenbrock(5).unwrap();
        assert_eq!(p5.value(&[1.0; 5]), 0.0);
    }

    #[test]
    fn random_quadratic_identity_spectrum_is_half_norm_squared() {
        // With Λ = I, A = QᵀQ = I for any orthogonal Q, up to rounding.
        let p = Problem::random_quadratic(2, &[1.0, 1.0], 42).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert_close(
                p.value(&x),
                0.5 * (x[0] * x[0] + x[1] * x[1]),
                1e-12,
                "identity quadratic value",
            );
        }
        assert_eq!(p.exact_min_eigenvalue(), Some(1.0));
    }

    #[test]
    fn random_quadratic_constant_hessian_and_validation() {
        let p = Problem::random_quadratic(3, &[-2.0, 1.0, 3.0], 5).unwrap();
        let v = vec![0.3, -0.7, 0.2];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h0 = p.hvp(&[0.0; 3], &v);
        for _ in 0..5 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = p.hvp(&x, &v);
            for (a, b) in h.iter().zip(&h0) {
                assert_close(*a, *b, 1e-12, "Hessian must not depend on x");
            }
        }
        assert_eq!(p.exact_min_eigenvalue(), Some(-2.0));
        assert_eq!(p.grad_lipschitz(), 3.0);
        assert_eq!(p.hess_lipschitz(), 0.0);

        assert!(matches!(
            Problem::random_quadratic(3, &[1.0, 2.0], 0),
            Err(ParamError::DimensionMismatch { .. })
        ));
        assert!(Problem::random_quadratic(2, &[2.0, 1.0], 0).is_err(), "unsorted spectrum");
    }

    #[test]
    fn constructors_reject_degenerate_dims() {
        assert!(Problem::separable_quartic(0).is_err());
        assert!(Problem::coupled_quartic(1, 0.1).is_err());
        assert!(Problem::rosenbrock(1).is_err());
    }

    #[test]
    fn gradients_match_value_finite_differences() {
        let problems = vec![
            Problem::separable_quartic(5).unwrap(),
            Problem::coupled_quartic(5, 0.1).unwrap(),
            Problem::rosenbrock(5).unwrap(),
            Problem::random_quadratic(5, &[-1.0, 0.5, 1.0, 2.0, 4.0], 9).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for p in &problems {
            for _ in 0..20 {
                let x: Vec<f64> = (0..5).map(|_| rng.random_range(-1.2..1.2)).collect();
                let h = 1e-6 * (norm(&x) + 1.0);
                let g = p.grad(&x);
                for i in 0..5 {
                    let mut xp = x.clone();
                    let mut xm = x.clone();
                    xp[i] += h;
                    xm[i] -= h;
                    let fd = (p.value(&xp) - p.value(&xm)) / (2.0 * h);
                    let scale = g[i].abs().max(1.0);
                    assert!(
                        (fd - g[i]).abs() / scale <= 1e-5,
                        "{}: coordinate {i} FD {fd} vs analytic {} at {x:?}",
                        p.name(),
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn hvp_is_symmetric_bilinear_form() {
        let problems = vec![
            Problem::separable_quartic(6).unwrap(),
            Problem::coupled_quartic(6, 0.1).unwrap(),
            Problem::rosenbrock(6).unwrap(),
            Problem::random_quadratic(6, &[-1.0, 0.0, 1.0, 2.0, 3.0, 4.0], 2).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for p in &problems {
            for _ in 0..20 {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.2..1.2)).collect();
                let u: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let v: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
                let uhv = dot(&u, &p.hvp(&x, &v));
                let vhu = dot(&v, &p.hvp(&x, &u));
                let scale = uhv.abs().max(vhu.abs()).max(1e-30);
                assert!(
                    (uhv - vhu).abs() / scale <= 1e-8,
                    "{}: ⟨u,Hv⟩={uhv} vs ⟨v,Hu⟩={vhu}",
                    p.name()
                );
            }
        }
    }

    #[test]
    fn hvp_matches_central_difference_fallback() {
        // Constant Hessian: the symmetric difference is exact.
        let q = Problem::random_quadratic(4, &[-2.0, 1.0, 2.0, 5.0], 17).unwrap();
        let x = vec![0.4, -0.2, 0.9, 0.1];
        let v = vec![1.0, 2.0, -1.0, 0.5];
        let exact = q.hvp(&x, &v);
        let fd = hvp_finite_difference(&q, &x, &v, 0.37);
        for (a, b) in exact.iter().zip(&fd) {
            assert_close(*a, *b, 1e-8, "quadratic FD HVP");
        }

        // Quartic at the origin: curvature −2, accuracy O(ρh).
        let p = Problem::separable_quartic(1).unwrap();
        let fd = hvp_finite_difference(&p, &[0.0], &[1.0], 1e-4);
        assert_close(fd[0], -2.0, 1e-6, "quartic FD HVP at origin");

        // Zero direction: H·0 = 0 exactly.
        let z = hvp_finite_difference(&p, &[0.3], &[0.0], 1e-4);
        assert_eq!(z, vec![0.0]);
    }

    #[test]
    fn lipschitz_constant_bounds_hessian_on_sublevel_set() {
        // ℓ must upper-bound ‖∇²f(x)‖ wherever the standard near-origin /
        // classic starts can reach (f(x) ≤ f(x₀)). Sample box points in the
        // sublevel set and compare against the largest |eigenvalue| of the
        // dense Hessian.
        let cases: Vec<(Problem, f64)> = vec![
            (Problem::separable_quartic(6).unwrap(), 1e-3),
            (Problem::coupled_quartic(6, 0.1).unwrap(), 1e-3),
            (Problem::rosenbrock(6).unwrap(), 24.2),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for (p, f_start) in &cases {
            let mut checked = 0;
            while checked < 25 {
                let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..1.5)).collect();
                if p.value(&x) > *f_start {
                    continue;
                }
                checked += 1;
                let hess = crate::diagnostics::dense_hessian(p, &x);
                let eigs = crate::diagnostics::jacobi_eigenvalues(&hess, 6);
                let spectral = eigs.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
                assert!(
                    spectral <= p.grad_lipschitz() + 1e-9,
                    "{}: ‖∇²f‖ = {spectral} exceeds ℓ = {} at {x:?}",
                    p.name(),
                    p.grad_lipschitz()
                );
            }
        }
    }

    #[test]
    fn noisy_model_zero_variance_is_exact_and_touches_no_rng() {
        let p = Problem::separable_quartic(4).unwrap();
        let mut m = NoisyGradModel::new(p.clone(), 0.0, 123).unwrap();
        let x = vec![0.1, -0.2, 0.3, 0.4];
        for _ in 0..3 {
            assert_eq!(m.stochastic_grad(&x, 7), p.grad(&x), "σ²=0 must be exact");
        }
    }

    #[test]
    fn noisy_model_single_sample_variance_matches_sigma2() {
        let p = Problem::separable_quartic(10).unwrap();
        let sigma2 = 4.0;
        let mut m = NoisyGradModel::new(p.clone(), sigma2, 99).unwrap();
        let x = vec![0.05; 10];
        let exact = p.grad(&x);
        let trials = 100_000;
        let mut mean_sq = 0.0;
        for _ in 0..trials {
            let g = m.stochastic_grad(&x, 1);
            let noise_sq: f64 = g.iter().zip(&exact).map(|(a, b)| (a - b) * (a - b)).sum();
            mean_sq += noise_sq;
        }
        mean_sq /= trials as f64;
        assert!(
            (mean_sq - sigma2).abs() / sigma2 <= 0.02,
            "E‖g̃−∇f‖² = {mean_sq}, want {sigma2} ± 2%"
        );
    }

    #[test]
    fn noisy_model_batch_reduces_variance() {
        let p = Problem::separable_quartic(10).unwrap();
        let sigma2 = 4.0;
        let batch = 16;
        let mut m = NoisyGradModel::new(p.clone(), sigma2, 7).unwrap();
        let x = vec![0.05; 10];
        let exact = p.grad(&x);
        let trials = 50_000;
        let mut mean_sq = 0.0;
        for _ in 0..trials {
            let g = m.stochastic_grad(&x, batch);
            mean_sq += g
                .iter()
                .zip(&exact)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
        }
        mean_sq /= trials as f64;
        let want = sigma2 / batch as f64;
        assert!(
            (mean_sq - want).abs() / want <= 0.05,
            "batch-{batch} variance {mean_sq}, want {want} ± 5%"
        );
    }

    #[test]
    fn noisy_model_is_deterministic_per_seed() {
        let p = Problem::separable_quartic(3).unwrap();
        let x = vec![0.2, 0.1, -0.3];
        let mut a = NoisyGradModel::new(p.clone(), 1.0, 5).unwrap();
        let mut b = NoisyGradModel::new(p, 1.0, 5).unwrap();
        for _ in 0..10 {
            assert_eq!(a.stochastic_grad(&x, 3), b.stochastic_grad(&x, 3));
        }
    }

    #[test]
    fn fd_step_scales_with_point_norm() {
        assert_close(fd_step(&[0.0, 0.0]), 1e-5, 1e-18, "fd step at origin");
        let x = [3.0, 4.0]; // norm 5
        assert_close(fd_step(&x), 6e-5, 1e-18, "fd step at norm 5");
    }
}
