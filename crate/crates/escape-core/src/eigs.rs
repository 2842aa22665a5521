//! Matrix-free minimum-eigenvalue estimation and random sampling primitives.
//!
//! The estimator is randomized Lanczos: a three-term recurrence builds a
//! Krylov tridiagonalization `T_k` of the Hessian from HVP calls alone, and
//! the smallest eigenvalue of `T_k` (extracted by Sturm-sequence bisection)
//! estimates `λ_min(∇²f(x))` from above. The recurrence deliberately
//! orthogonalizes only against the two most recent basis vectors — no full
//! re-orthogonalization — which is cheap and sufficient for the
//! moderate-accuracy curvature checks the optimizer needs, at the documented
//! risk of orthogonality loss on ill-conditioned Hessians.
//!
//! Also here: uniform sampling on the ball (escape perturbations) and on the
//! sphere (probe directions), both driven by a caller-provided RNG so vector
//! streams are reproducible per seed.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{EigsError, ParamError};
use crate::vecmath::{axpy, dot, norm, scale};

/// Outcome of one randomized-Lanczos minimum-eigenvalue estimation.
#[derive(Clone, Debug)]
pub struct LanczosResult {
    /// Estimate of the smallest Hessian eigenvalue (= `λ_min(T_k)`; an upper
    /// bound on the true `λ_min` up to rounding, by Rayleigh–Ritz).
    pub lambda_min_est: f64,
    /// Unit Ritz vector paired with the smallest Ritz value, mapped back to
    /// the original space.
    pub direction: Vec<f64>,
    /// Number of recurrence steps actually performed (≤ requested `k`).
    pub iterations_used: usize,
    /// Whether the recurrence stopped on `β_{j+1} < eps_term` (the Krylov
    /// space closed early, so the estimate is exact for that subspace).
    pub terminated_early: bool,
}

/// Default Lanczos iteration count for a curvature check at resolution
/// `gamma`: `min(d, ⌈10·ln(d)·√(ℓ/γ)⌉)`, clamped to `[1, 200]`. The √(ℓ/γ)
/// factor is the usual gap-dependent Krylov convergence rate; the cap keeps
/// worst-case check cost bounded.
pub fn default_lanczos_k(dim: usize, ell: f64, gamma: f64) -> usize {
    assert!(dim >= 1, "dim must be ≥ 1");
    assert!(ell > 0.0 && gamma > 0.0, "ell and gamma must be > 0");
    let raw = 10.0 * (dim as f64).ln() * (ell / gamma).sqrt();
    let k = if raw.is_finite() { raw.ceil() as usize } else { 200 };
    k.min(dim).clamp(1, 200)
}

/// Estimate the smallest eigenvalue of the symmetric operator behind `hvp`.
///
/// `hvp` must apply a fixed linear symmetric map (`buf ← H·v`); `k ≥ 1` is
/// the maximum recurrence length (internally capped at `dim`); `eps_term`
/// is the breakdown threshold on `β_{j+1}`; `seed` fixes the Gaussian start
/// vector. Returns [`EigsError::BreakdownAtStart`] only if the start vector
/// has zero norm twice in a row (probability zero under a working RNG).
pub fn lanczos_min_eig<F>(
    mut hvp: F,
    dim: usize,
    k: usize,
    eps_term: f64,
    seed: u64,
) -> Result<LanczosResult, EigsError>
where
    F: FnMut(&[f64], &mut [f64]),
{
    if dim == 0 {
        return Err(ParamError::invalid("dim", "must be ≥ 1").into());
    }
    if k == 0 {
        return Err(ParamError::invalid("k", "must be ≥ 1").into());
    }
    if !eps_term.is_finite() || eps_term <= 0.0 {
        return Err(ParamError::invalid("eps_term", "must be finite and > 0").into());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v0 = gaussian_vector(dim, &mut rng);
    let mut n0 = norm(&v0);
    if n0 == 0.0 {
        v0 = gaussian_vector(dim, &mut rng);
        n0 = norm(&v0);
        if n0 == 0.0 {
            return Err(EigsError::BreakdownAtStart { dim });
        }
    }
    scale(&mut v0, 1.0 / n0);

    let steps = k.min(dim);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(steps);
    basis.push(v0);
    let mut alphas: Vec<f64> = Vec::with_capacity(steps);
    let mut betas: Vec<f64> = Vec::with_capacity(steps.saturating_sub(1));
    let mut w = vec![0.0; dim];
    let mut terminated_early = false;

    for j in 0..steps {
        hvp(&basis[j], &mut w);
        let alpha = dot(&basis[j], &w);
        alphas.push(alpha);
        axpy(-alpha, &basis[j], &mut w);
        if j > 0 {
            axpy(-betas[j - 1], &basis[j - 1], &mut w);
        }
        let beta = norm(&w);
        if beta < eps_term {
            // Krylov space closed: T_j already holds everything the start
            // vector can reach.
            terminated_early = true;
            break;
        }
        if j + 1 < steps {
            betas.push(beta);
            let mut next = w.clone();
            scale(&mut next, 1.0 / beta);
            basis.push(next);
        }
    }

    let m = alphas.len();
    let lambda_min_est = if m == 1 {
        alphas[0]
    } else {
        tridiag_min_eig(&alphas, &betas)
    };

    let direction = if m == 1 {
        basis[0].clone()
    } else {
        let y = ritz_vector(&alphas, &betas, lambda_min_est);
        let mut dir = vec![0.0; dim];
        for (coef, vj) in y.iter().zip(&basis) {
            axpy(*coef, vj, &mut dir);
        }
        let n = norm(&dir);
        if n > 0.0 {
            scale(&mut dir, 1.0 / n);
            dir
        } else {
            // Degenerate cancellation (requires severe orthogonality loss):
            // fall back to the start vector rather than return garbage.
            basis[0].clone()
        }
    };

    Ok(LanczosResult {
        lambda_min_est,
        direction,
        iterations_used: m,
        terminated_early,
    })
}

/// Number of eigenvalues of the tridiagonal `(alphas, betas)` strictly below
/// `x`, counted as the negative pivots of the shifted `LDLᵀ` recurrence
/// (Sturm sequence). `pivmin` regularizes exact-zero pivots.
fn sturm_count_below(alphas: &[f64], betas: &[f64], x: f64, pivmin: f64) -> usize {
    let mut count = 0;
    let mut prev_pivot = 1.0;
    for (i, &a) in alphas.iter().enumerate() {
        let offdiag_sq = if i > 0 { betas[i - 1] * betas[i - 1] } else { 0.0 };
        let mut pivot = (a - x) - offdiag_sq / prev_pivot;
        if pivot.abs() < pivmin {
            pivot = -pivmin;
        }
        if pivot < 0.0 {
            count += 1;
        }
        prev_pivot = pivot;
    }
    count
}

/// Smallest eigenvalue of a symmetric tridiagonal matrix by bisection on the
/// Sturm count, to 1e−12 absolute. Exact (to that tolerance) for any size we
/// use; no external eigensolver involved.
fn tridiag_min_eig(alphas: &[f64], betas: &[f64]) -> f64 {
    let m = alphas.len();
    debug_assert_eq!(betas.len() + 1, m);

    // Gershgorin bracket, padded so the strict count at `lo` is zero.
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut max_abs = 0.0_f64;
    for i in 0..m {
        let r = if i > 0 { betas[i - 1].abs() } else { 0.0 }
            + if i < m - 1 { betas[i].abs() } else { 0.0 };
        lo = lo.min(alphas[i] - r);
        hi = hi.max(alphas[i] + r);
        max_abs = max_abs.max(alphas[i].abs() + r);
    }
    let pad = 1e-6 * (1.0 + max_abs);
    lo -= pad;
    hi += pad;
    let pivmin = 1e-30 * (1.0 + max_abs);

    let tol = 1e-12;
    let mut rounds = 0;
    while hi - lo > tol && rounds < 200 {
        let mid = 0.5 * (lo + hi);
        if sturm_count_below(alphas, betas, mid, pivmin) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        rounds += 1;
    }
    0.5 * (lo + hi)
}

/// Eigenvector of the tridiagonal for the (already computed) smallest
/// eigenvalue, by a few inverse-iteration steps with pivot regularization.
fn ritz_vector(alphas: &[f64], betas: &[f64], lambda: f64) -> Vec<f64> {
    let m = alphas.len();
    let max_abs = alphas
        .iter()
        .map(|a| a.abs())
        .chain(betas.iter().map(|b| b.abs()))
        .fold(0.0_f64, f64::max);
    let pivmin = 1e-14 * (1.0 + max_abs);

    let mut y = vec![1.0 / (m as f64).sqrt(); m];
    for _ in 0..3 {
        y = tridiag_solve_shifted(alphas, betas, lambda, &y, pivmin);
        let n = norm(&y);
        if n == 0.0 || !n.is_finite() {
            // Restart from a skewed vector if the solve degenerated.
            y = (0..m).map(|i| 1.0 + (i as f64) * 0.01).collect();
            let n2 = norm(&y);
            scale(&mut y, 1.0 / n2);
            continue;
        }
        scale(&mut y, 1.0 / n);
    }
    y
}

/// Solve `(T − shift·I) y = rhs` for tridiagonal `T` by the Thomas forward
/// elimination / back substitution, clamping near-zero pivots to `±pivmin`
/// (standard inverse-iteration regularization).
fn tridiag_solve_shifted(
    alphas: &[f64],
    betas: &[f64],
    shift: f64,
    rhs: &[f64],
    pivmin: f64,
) -> Vec<f64> {
    let m = alphas.len();
    let mut diag: Vec<f64> = alphas.iter().map(|a| a - shift).collect();
    let mut b = rhs.to_vec();
    // Forward elimination.
    for i in 1..m {
        if diag[i - 1].abs() < pivmin {
            diag[i - 1] = if diag[i - 1] < 0.0 { -pivmin } else { pivmin };
        }
        let factor = betas[i - 1] / diag[i - 1];
        diag[i] -= factor * betas[i - 1];
        b[i] -= factor * b[i - 1];
    }
    if diag[m - 1].abs() < pivmin {
        diag[m - 1] = if diag[m - 1] < 0.0 { -pivmin } else { pivmin };
    }
    // Back substitution.
    let mut y = vec![0.0; m];
    y[m - 1] = b[m - 1] / diag[m - 1];
    for i in (0..m - 1).rev() {
        y[i] = (b[i] - betas[i] * y[i + 1]) / diag[i];
    }
    y
}

fn gaussian_vector<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Uniform draw from the solid ball of radius `r`: Gaussian direction
/// normalized, radius `r·U^{1/d}`.
pub fn sample_ball<R: Rng + ?Sized>(r: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(r > 0.0 && r.is_finite(), "ball radius must be finite and > 0, got {r}");
    let mut v = sample_sphere(dim, rng);
    let u: f64 = rng.random();
    let radius = r * u.powf(1.0 / dim as f64);
    scale(&mut v, radius);
    v
}

/// Uniform draw from the unit sphere: Gaussian vector normalized (zero-norm
/// draws are redrawn; probability zero).
pub fn sample_sphere<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    assert!(dim >= 1, "dim must be ≥ 1");
    loop {
        let mut v = gaussian_vector(dim, rng);
        let n = norm(&v);
        if n > 0.0 {
            scale(&mut v, 1.0 / n);
            return v;
        }
    }
}
