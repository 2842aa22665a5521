//! Dense symmetric eigen-decomposition used as a verification oracle.
//!
//! The optimizer itself never calls into this module: its negative-curvature
//! estimates come from the matrix-free Krylov routine in [`crate::eigs`].
//! This solver exists so that diagnostic checks (library tests and the
//! harness's numeric self-checks) can compare those estimates against an
//! independently computed exact spectrum on small dense Hessians.
//!
//! The implementation is the classic cyclic Jacobi rotation method: it is
//! `O(d³)` per sweep and unsuitable for large `d`, but is simple, robust,
//! and accurate to near machine precision for the `d ≲ 200` diagnostics use.

use crate::oracle::Problem;

/// Dense Hessian of `p` at `x` as a row-major `d×d` matrix, assembled from
/// one Hessian-vector product per basis vector and symmetrized to remove
/// rounding asymmetry.
pub fn dense_hessian(p: &Problem, x: &[f64]) -> Vec<f64> {
    let d = p.dim();
    let mut basis = vec![0.0; d];
    let mut column = vec![0.0; d];
    let mut hess = vec![0.0; d * d];
    for j in 0..d {
        basis[j] = 1.0;
        p.hvp_into(x, &basis, &mut column);
        basis[j] = 0.0;
        for i in 0..d {
            hess[i * d + j] = column[i];
        }
    }
    for i in 0..d {
        for j in (i + 1)..d {
            let avg = 0.5 * (hess[i * d + j] + hess[j * d + i]);
            hess[i * d + j] = avg;
            hess[j * d + i] = avg;
        }
    }
    hess
}

/// Full eigen-decomposition of a symmetric row-major `dim×dim` matrix.
///
/// Returns `(eigenvalues, eigenvectors)` with eigenvalues ascending and
/// `eigenvectors[k]` the unit eigenvector paired with `eigenvalues[k]`.
/// Panics if the matrix has the wrong size; symmetry is the caller's
/// responsibility (only the upper triangle drives the rotations).
pub fn jacobi_eigen(mat: &[f64], dim: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(mat.len(), dim * dim, "matrix must be dim×dim");
    assert!(dim >= 1, "dim must be ≥ 1");
    let mut a = mat.to_vec();
    // Eigenvector accumulator, starts as the identity; columns track the
    // applied rotations.
    let mut v = vec![0.0; dim * dim];
    for i in 0..dim {
        v[i * dim + i] = 1.0;
    }

    let max_sweeps = 60;
    for _sweep in 0..max_sweeps {
        let mut off_diag_sq = 0.0;
        for i in 0..dim {
            for j in (i + 1)..dim {
                off_diag_sq += a[i * dim + j] * a[i * dim + j];
            }
        }
        let frob_sq: f64 = a.iter().map(|x| x * x).sum();
        if off_diag_sq <= 1e-30 * frob_sq.max(f64::MIN_POSITIVE) {
            break;
        }
        for p in 0..dim {
            for q in (p + 1)..dim {
                let apq = a[p * dim + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * dim + p];
                let aqq = a[q * dim + q];
                // Stable rotation angle: t = sgn(θ)/(|θ| + √(θ²+1)).
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..dim {
                    let akp = a[k * dim + p];
                    let akq = a[k * dim + q];
                    a[k * dim + p] = c * akp - s * akq;
                    a[k * dim + q] = s * akp + c * akq;
                }
                for k in 0..dim {
                    let apk = a[p * dim + k];
                    let aqk = a[q * dim + k];
                    a[p * dim + k] = c * apk - s * aqk;
                    a[q * dim + k] = s * apk + c * aqk;
                }
                for k in 0..dim {
                    let vkp = v[k * dim + p];
                    let vkq = v[k * dim + q];
                    v[k * dim + p] = c * vkp - s * vkq;
                    v[k * dim + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&i, &j| {
        a[i * dim + i]
            .partial_cmp(&a[j * dim + j])
            .expect("eigenvalues must be comparable (no NaN)")
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| a[i * dim + i]).collect();
    let eigenvectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&col| (0..dim).map(|row| v[row * dim + col]).collect())
        .collect();
    (eigenvalues, eigenvectors)
}

/// Eigenvalues only, ascending.
pub fn jacobi_eigenvalues(mat: &[f64], dim: usize) -> Vec<f64> {
    jacobi_eigen(mat, dim).0
}

/// Exact smallest Hessian eigenvalue of `p` at `x` and its unit eigenvector,
/// via the dense solver. Diagnostics only: cost is `O(d³)`.
pub fn hessian_min_eig(p: &Problem, x: &[f64]) -> (f64, Vec<f64>) {
    let hess = dense_hessian(p, x);
    let (vals, vecs) = jacobi_eigen(&hess, p.dim());
    (vals[0], vecs.into_iter().next().expect("dim ≥ 1"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vecmath::{dot, norm};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn diagonal_matrix_is_its_own_spectrum() {
        let mat = vec![
            3.0, 0.0, 0.0, //
            0.0, -1.0, 0.0, //
            0.0, 0.0, 2.0,
        ];
        let (vals, vecs) = jacobi_eigen(&mat, 3);
        assert_eq!(vals, vec![-1.0, 2.0, 3.0]);
        // Eigenvector of the smallest eigenvalue is ±e₁.
        assert!((vecs[0][1].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_known_eigenvalues() {
        // [[2,1],[1,2]] has spectrum {1, 3}.
        let mat = vec![2.0, 1.0, 1.0, 2.0];
        let vals = jacobi_eigenvalues(&mat, 2);
        assert!((vals[0] - 1.0).abs() < 1e-12, "got {vals:?}");
        assert!((vals[1] - 3.0).abs() < 1e-12, "got {vals:?}");
    }

    #[test]
    fn random_symmetric_eigenpairs_satisfy_definition() {
        let d = 8;
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut mat = vec![0.0; d * d];
        for i in 0..d {
            for j in i..d {
                let entry = rng.random_range(-2.0..2.0);
                mat[i * d + j] = entry;
                mat[j * d + i] = entry;
            }
        }
        let (vals, vecs) = jacobi_eigen(&mat, d);
        for w in vals.windows(2) {
            assert!(w[0] <= w[1], "eigenvalues must be ascending: {vals:?}");
        }
        for (lambda, vector) in vals.iter().zip(&vecs) {
            assert!((norm(vector) - 1.0).abs() < 1e-10, "unit eigenvector");
            let mut resid = vec![0.0; d];
            for i in 0..d {
                resid[i] = (0..d).map(|j| mat[i * d + j] * vector[j]).sum::<f64>()
                    - lambda * vector[i];
            }
            assert!(
                norm(&resid) < 1e-9,
                "‖Av − λv‖ = {} for λ = {lambda}",
                norm(&resid)
            );
        }
        // Pairwise orthogonality of the eigenbasis.
        for i in 0..d {
            for j in (i + 1)..d {
                assert!(dot(&vecs[i], &vecs[j]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn dense_hessian_agrees_with_known_quartic_hessian() {
        let p = Problem::separable_quartic(3).unwrap();
        let x = vec![0.5, 0.0, -1.0];
        let hess = dense_hessian(&p, &x);
        // ∇²f is diagonal with entries 12xᵢ² − 2.
        let expect = [1.0, -2.0, 10.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { expect[i] } else { 0.0 };
                assert!(
                    (hess[i * 3 + j] - want).abs() < 1e-12,
                    "H[{i}][{j}] = {}, want {want}",
                    hess[i * 3 + j]
                );
            }
        }
    }

    #[test]
    fn hessian_min_eig_matches_exact_quadratic_spectrum() {
        let spectrum = [-2.5, 0.5, 1.0, 4.0];
        let p = Problem::random_quadratic(4, &spectrum, 31).unwrap();
        let (lambda, vector) = hessian_min_eig(&p, &[0.2, -0.1, 0.4, 0.0]);
        assert!((lambda - (-2.5)).abs() < 1e-9, "λ_min = {lambda}");
        // The returned vector must actually achieve the Rayleigh quotient.
        let hv = p.hvp(&[0.0; 4], &vector);
        let rayleigh = dot(&vector, &hv);
        assert!((rayleigh - lambda).abs() < 1e-8, "Rayleigh = {rayleigh}");
    }
}
