//! Perturbed-gradient-descent baseline: blind timer-driven perturbations
//! with no curvature information.
//!
//! The baseline descends exactly like the main optimizer while the gradient
//! is large. Whenever `‖∇f‖ ≤ ε` and no perturbation happened within the
//! last `W` steps, it records the current point as an anchor, perturbs
//! uniformly in the same ball the main optimizer uses, and watches the next
//! `W` steps. A window that produces a function decrease of at least
//! `ε²/(128ℓ)` below the anchor counts as a successful escape and the search
//! continues; a window that completes without one means the anchor was
//! already as good as this scheme can certify, so the run terminates and
//! reports the anchor as its answer.
//!
//! All scales are shared with the derived optimizer schedule for fairness:
//! step size `1/(2ℓ)`, perturbation radius `r`, per-window decrease target
//! `ε²/(128ℓ)`, and the single-episode window length
//! `W = ⌈(8ℓ/γ)·ln(16d/δ)⌉`.

use escape_core::eigs;
use escape_core::vecmath::{axpy, norm};
use escape_core::{Problem, PsdConfig};
use rand_chacha::ChaCha8Rng;

/// Schedule for the perturbed-descent baseline.
#[derive(Debug, Clone)]
pub struct PgdParams {
    /// Steps between perturbations and length of the watched window, `W`.
    pub window: u64,
    /// Perturbation ball radius (the optimizer's `r`).
    pub radius: f64,
    /// Gradient step size `1/(2ℓ)`.
    pub step_size: f64,
    /// Gradient tolerance `ε` gating perturbations.
    pub grad_tol: f64,
    /// Decrease a window must achieve to count as an escape, `ε²/(128ℓ)`.
    pub decrease_target: f64,
    /// Hard stop on gradient steps; `None` disables it.
    pub iter_cap: Option<u64>,
}

impl PgdParams {
    /// Share every scale with an already-derived optimizer schedule; the
    /// window is the single-episode length `W = ⌈(8ℓ/γ)·ln(16d/δ)⌉`.
    pub fn derive(cfg: &PsdConfig) -> PgdParams {
        let ell = cfg.grad_lipschitz;
        let gamma = cfg.curvature_scale;
        let window = (8.0 * ell / gamma * (16.0 * cfg.dim as f64 / cfg.failure_prob).ln())
            .ceil() as u64;
        PgdParams {
            window: window.max(1),
            radius: cfg.perturb_radius,
            step_size: cfg.step_size,
            grad_tol: cfg.grad_tol,
            decrease_target: cfg.grad_tol * cfg.grad_tol / (128.0 * ell),
            iter_cap: cfg.iter_cap,
        }
    }
}

/// Result of a baseline run.
#[derive(Debug, Clone)]
pub struct PgdOutcome {
    /// The reported point: the last window's anchor when converged,
    /// otherwise the iterate at the cap.
    pub answer: Vec<f64>,
    pub terminal_f: f64,
    pub terminal_grad_norm: f64,
    /// Gradient steps taken (perturbations are free, as in the optimizer).
    pub iterations: u64,
    pub perturbations: u64,
    /// `true` when a full window certified no further escape; `false` when
    /// the iteration cap cut the run short.
    pub converged: bool,
}

struct Watch {
    anchor: Vec<f64>,
    f_anchor: f64,
    start_iter: u64,
    decreased: bool,
}

/// Run the baseline from `x0`. Deterministic given the RNG state.
pub fn run_pgd(p: &Problem, params: &PgdParams, x0: &[f64], rng: &mut ChaCha8Rng) -> PgdOutcome {
    assert_eq!(x0.len(), p.dim(), "start point dimension mismatch");
    let mut x = x0.to_vec();
    let mut g = vec![0.0; x.len()];
    let mut iter: u64 = 0;
    let mut perturbations: u64 = 0;
    let mut last_perturb: Option<u64> = None;
    let mut watch: Option<Watch> = None;

    loop {
        // Verdict exactly one full window after a perturbation: either the
        // window saw the required decrease (keep going) or the anchor stands.
        let verdict_due = watch
            .as_ref()
            .is_some_and(|w| iter - w.start_iter >= params.window);
        if verdict_due {
            let w = watch.take().expect("verdict_due implies a watch");
            if !w.decreased {
                let gn = norm(&p.grad(&w.anchor));
                return PgdOutcome {
                    answer: w.anchor,
                    terminal_f: w.f_anchor,
                    terminal_grad_norm: gn,
                    iterations: iter,
                    perturbations,
                    converged: true,
                };
            }
        }
        if params.iter_cap.is_some_and(|cap| iter >= cap) {
            let f = p.value(&x);
            let gn = norm(&p.grad(&x));
            return PgdOutcome {
                answer: x,
                terminal_f: f,
                terminal_grad_norm: gn,
                iterations: iter,
                perturbations,
                converged: false,
            };
        }

        p.grad_into(&x, &mut g);
        let gnorm = norm(&g);
        let recently_perturbed = last_perturb.is_some_and(|lp| iter - lp < params.window);
        if gnorm <= params.grad_tol && !recently_perturbed {
            let anchor = x.clone();
            let f_anchor = p.value(&anchor);
            let xi = eigs::sample_ball(params.radius, x.len(), rng);
            axpy(1.0, &xi, &mut x);
            perturbations += 1;
            last_perturb = Some(iter);
            watch = Some(Watch {
                anchor,
                f_anchor,
                start_iter: iter,
                decreased: false,
            });
            // The perturbation consumes no iteration; the next pass works
            // with the perturbed point's own gradient.
            continue;
        }

        axpy(-params.step_size, &g, &mut x);
        iter += 1;
        if let Some(w) = &mut watch {
            if !w.decreased && p.value(&x) <= w.f_anchor - params.decrease_target {
                w.decreased = true;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn derive_for(p: &Problem, eps: f64, cap: Option<u64>) -> (PsdConfig, PgdParams) {
        let cfg = PsdConfig::for_problem(p, eps, 0.1)
            .expect("valid schedule")
            .with_iter_cap(cap);
        let params = PgdParams::derive(&cfg);
        (cfg, params)
    }

    #[test]
    fn derived_window_lengths_match_the_closed_form() {
        // W = ⌈(8ℓ/γ)·ln(16d/δ)⌉ with γ = √(ρε) (or ε when ρ = 0).
        let quartic10 = Problem::separable_quartic(10).unwrap();
        let quartic100 = Problem::separable_quartic(100).unwrap();
        let rosen10 = Problem::rosenbrock(10).unwrap();
        let (_, p10) = derive_for(&quartic10, 1e-3, None);
        let (_, p100) = derive_for(&quartic100, 1e-3, None);
        let (_, pr) = derive_for(&rosen10, 1e-3, None);
        assert_eq!(p10.window, 7_777);
        assert_eq!(p100.window, 10_204);
        // Above the 50,000-iteration cap: the baseline can never finish a
        // window on the Rosenbrock chain at this tolerance.
        assert_eq!(pr.window, 126_671);
    }

    #[test]
    fn derived_scales_are_shared_with_the_optimizer_schedule() {
        let p = Problem::separable_quartic(10).unwrap();
        let (cfg, params) = derive_for(&p, 1e-3, Some(123));
        assert_eq!(params.radius, cfg.perturb_radius);
        assert_eq!(params.step_size, cfg.step_size);
        assert_eq!(params.grad_tol, cfg.grad_tol);
        assert_eq!(params.iter_cap, Some(123));
        let ell = cfg.grad_lipschitz;
        assert_eq!(params.decrease_target, 1e-3 * 1e-3 / (128.0 * ell));
    }

    #[test]
    fn converges_at_a_convex_minimum_and_reports_the_anchor() {
        // ½‖x‖²: every window eventually fails because no point sits below
        // the minimum, so the run must stop at a small-gradient anchor.
        let p = Problem::random_quadratic(5, &[1.0; 5], 9).unwrap();
        let params = PgdParams {
            window: 60,
            radius: 1e-2,
            step_size: 0.5,
            grad_tol: 1e-2,
            decrease_target: 1e-2 * 1e-2 / 128.0,
            iter_cap: None,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let out = run_pgd(&p, &params, &[1.0, -0.5, 0.25, 0.8, -1.0], &mut rng);
        assert!(out.converged, "should certify convergence, got {out:?}");
        assert!(
            out.terminal_grad_norm <= params.grad_tol,
            "anchors are small-gradient points: ‖∇f‖ = {}",
            out.terminal_grad_norm
        );
        assert!(
            out.terminal_f <= params.decrease_target,
            "answer should sit within the decrease target of the minimum, f = {}",
            out.terminal_f
        );
        assert!(out.perturbations >= 1);
        assert_eq!(out.terminal_f, p.value(&out.answer));
    }

    #[test]
    fn escapes_the_quartic_saddle_manifold_before_certifying() {
        let p = Problem::separable_quartic(6).unwrap();
        let x0 = crate::starts::masked_near_saddle_start(6, 1e-3, 11);
        let params = PgdParams {
            window: 2_000,
            radius: 0.05,
            step_size: 1.0 / 50.0,
            grad_tol: 1e-3,
            decrease_target: 1e-6 / (128.0 * 25.0),
            iter_cap: Some(200_000),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let out = run_pgd(&p, &params, &x0, &mut rng);
        assert!(out.converged, "expected a certified stop, got {out:?}");
        // All coordinates must have left the saddle for a well at ±1/√2.
        let well = 1.0 / 2.0_f64.sqrt();
        for (i, v) in out.answer.iter().enumerate() {
            assert!(
                (v.abs() - well).abs() < 0.05,
                "coordinate {i} = {v} never escaped"
            );
        }
        assert!(out.terminal_f <= -(6.0 / 4.0) + 0.05);
        // Escaping needs one perturbation, certifying needs at least one
        // more whose window fails.
        assert!(out.perturbations >= 2, "perturbations: {}", out.perturbations);
    }

    #[test]
    fn iteration_cap_censors_the_run() {
        let p = Problem::separable_quartic(4).unwrap();
        let x0 = crate::starts::masked_near_saddle_start(4, 1e-3, 2);
        let (_, mut params) = derive_for(&p, 1e-3, Some(500));
        params.iter_cap = Some(500);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let out = run_pgd(&p, &params, &x0, &mut rng);
        assert!(!out.converged);
        assert_eq!(out.iterations, 500);
    }

    #[test]
    fn perturbations_respect_the_window_spacing() {
        let p = Problem::separable_quartic(6).unwrap();
        let x0 = crate::starts::masked_near_saddle_start(6, 1e-3, 11);
        let params = PgdParams {
            window: 300,
            radius: 0.05,
            step_size: 1.0 / 50.0,
            grad_tol: 1e-3,
            decrease_target: 1e-6 / (128.0 * 25.0),
            iter_cap: Some(20_000),
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let out = run_pgd(&p, &params, &x0, &mut rng);
        // At most one perturbation per window of steps, plus the first.
        let bound = 1 + out.iterations / params.window;
        assert!(
            out.perturbations <= bound,
            "{} perturbations over {} iterations violates the {}-step spacing",
            out.perturbations,
            out.iterations,
            params.window
        );
    }

    #[test]
    fn reruns_are_bitwise_identical() {
        let p = Problem::separable_quartic(5).unwrap();
        let x0 = crate::starts::masked_near_saddle_start(5, 1e-3, 3);
        let params = PgdParams {
            window: 500,
            radius: 0.05,
            step_size: 1.0 / 50.0,
            grad_tol: 1e-3,
            decrease_target: 1e-6 / (128.0 * 25.0),
            iter_cap: Some(50_000),
        };
        let run = |seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            run_pgd(&p, &params, &x0, &mut rng)
        };
        let (a, b) = (run(8), run(8));
        assert_eq!(a.answer, b.answer);
        assert_eq!(a.iterations, b.iterations);
        assert_eq!(a.perturbations, b.perturbations);
        assert_eq!(a.terminal_f.to_bits(), b.terminal_f.to_bits());
    }
}
