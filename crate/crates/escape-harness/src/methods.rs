//! Benchmark problem families and a uniform runner for the four methods
//! under comparison: plain gradient descent, the saddle-escaping optimizer,
//! its probe-check variant, and the perturbed-descent baseline.

use escape_core::vecmath::ceil_tol;
use escape_core::{
    run_psd, run_psd_probe, ParamError, ProbeParams, Problem, PsdConfig, RunError, RunTrace,
    TerminalStatus,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::pgd::{run_pgd, PgdOutcome, PgdParams};
use crate::starts;

/// Iteration cap shared by every benchmark run; runs that hit it are
/// censored and never enter a median as a finite value.
pub const ITER_CAP: u64 = 50_000;

/// Trajectory sampling stride for trace CSVs.
pub const TRACE_STRIDE: u64 = 100;

/// Fixed seed for the convex quadratic's random orthogonal basis, so the
/// problem instance is part of the benchmark definition rather than a
/// per-run draw.
pub const QUADRATIC_BASIS_SEED: u64 = 777;

/// Default pairwise coupling strength for the coupled quartic.
pub const DEFAULT_COUPLING: f64 = 0.1;

/// Benchmark objective families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemFamily {
    /// Separable quartic `Σ xᵢ⁴ − xᵢ²`: strict saddle at the origin.
    Quartic,
    /// Quartic plus pairwise coupling `c·Σ_{i<j} xᵢxⱼ`.
    CoupledQuartic,
    /// Chained Rosenbrock; dimension 10 carries an audited interior saddle.
    Rosenbrock,
    /// Strongly convex random quadratic (spectrum in [1, 25]); no saddles.
    ConvexQuadratic,
}

impl ProblemFamily {
    pub fn parse(s: &str) -> Option<ProblemFamily> {
        match s.to_ascii_lowercase().as_str() {
            "quartic" => Some(ProblemFamily::Quartic),
            "coupled" | "coupled_quartic" => Some(ProblemFamily::CoupledQuartic),
            "rosenbrock" => Some(ProblemFamily::Rosenbrock),
            "quadratic" | "convex_quadratic" => Some(ProblemFamily::ConvexQuadratic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProblemFamily::Quartic => "quartic",
            ProblemFamily::CoupledQuartic => "coupled_quartic",
            ProblemFamily::Rosenbrock => "rosenbrock",
            ProblemFamily::ConvexQuadratic => "convex_quadratic",
        }
    }

    pub fn is_convex(self) -> bool {
        matches!(self, ProblemFamily::ConvexQuadratic)
    }

    /// Instantiate the family at a dimension. `coupling` only affects the
    /// coupled quartic.
    pub fn build(self, dim: usize, coupling: f64) -> Result<Problem, ParamError> {
        match self {
            ProblemFamily::Quartic => Problem::separable_quartic(dim),
            ProblemFamily::CoupledQuartic => Problem::coupled_quartic(dim, coupling),
            ProblemFamily::Rosenbrock => Problem::rosenbrock(dim),
            ProblemFamily::ConvexQuadratic => {
                let spectrum: Vec<f64> = if dim == 1 {
                    vec![1.0]
                } else {
                    (0..dim)
                        .map(|i| 1.0 + 24.0 * i as f64 / (dim - 1) as f64)
                        .collect()
                };
                Problem::random_quadratic(dim, &spectrum, QUADRATIC_BASIS_SEED)
            }
        }
    }

    /// The family's canonical per-seed start point.
    pub fn start(self, dim: usize, seed: u64) -> Vec<f64> {
        match self {
            ProblemFamily::Quartic | ProblemFamily::CoupledQuartic => {
                starts::masked_near_saddle_start(dim, starts::NEAR_SADDLE_SCALE, seed)
            }
            ProblemFamily::Rosenbrock => {
                if dim == 10 {
                    starts::saddle_adjacent_start(seed)
                } else {
                    starts::rosenbrock_classic_start(dim)
                }
            }
            ProblemFamily::ConvexQuadratic => starts::sphere_start(dim, 1.0, seed),
        }
    }
}

/// Methods under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Plain gradient descent (the optimizer with escapes disabled).
    Gd,
    /// The saddle-escaping optimizer with the Lanczos curvature check.
    Psd,
    /// The optimizer with the central-difference probe check.
    PsdProbe,
    /// Timer-driven perturbed descent baseline.
    Pgd,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Gd, Method::Psd, Method::PsdProbe, Method::Pgd];

    pub fn parse(s: &str) -> Option<Method> {
        match s.to_ascii_lowercase().as_str() {
            "gd" => Some(Method::Gd),
            "psd" => Some(Method::Psd),
            "psd_probe" | "psd-probe" | "probe" => Some(Method::PsdProbe),
            "pgd" => Some(Method::Pgd),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::Gd => "gd",
            Method::Psd => "psd",
            Method::PsdProbe => "psd_probe",
            Method::Pgd => "pgd",
        }
    }
}

/// The benchmark schedule for a problem: the derived optimizer parameters
/// plus the shared iteration cap, trajectory stride, and early episode exit
/// (episodes end as soon as their decrease target is met, which is what
/// makes iteration counts comparable across methods).
pub fn base_config(p: &Problem, epsilon: f64, delta: f64) -> Result<PsdConfig, ParamError> {
    PsdConfig::for_problem(p, epsilon, delta)?
        .with_iter_cap(Some(ITER_CAP))
        .with_early_exit(true)
        .with_trace_stride(TRACE_STRIDE)
}

/// Probe-check parameters for a problem. Constant-Hessian objectives have no
/// third-derivative scale to set the probe step, so the quadratic-mode
/// perturbation radius stands in for `h` with the usual `α = h/8` and
/// `−(2/3)·(curvature tolerance)` conventions; everything else derives the
/// standard way.
pub fn probe_params_for(p: &Problem, cfg: &PsdConfig) -> Result<ProbeParams, ParamError> {
    if cfg.quadratic_mode {
        let h = cfg.perturb_radius;
        let m = ceil_tol(16.0 * (16.0 * p.dim() as f64 / cfg.failure_prob).ln()) as u64;
        Ok(ProbeParams {
            h,
            m,
            alpha: h / 8.0,
            threshold: -(2.0 / 3.0) * cfg.curvature_scale,
        })
    } else {
        ProbeParams::derive(cfg)
    }
}

/// Uniform view of one run, whichever method produced it.
#[derive(Debug, Clone)]
pub struct MethodOutcome {
    pub method: Method,
    /// Gradient steps taken (descent + episode for the optimizer family).
    pub iterations: u64,
    /// `true` when the run stopped without certifying a second-order
    /// stationary point (or, for the baseline, without a failed window).
    pub censored: bool,
    /// Status label for CSVs: `sosp`, `converged`, `episode_cap`, `>cap`.
    pub status: &'static str,
    pub terminal_f: f64,
    pub terminal_grad_norm: f64,
    /// Full trace for the optimizer-family methods; `None` for the baseline.
    pub trace: Option<RunTrace>,
    /// Baseline-specific extras; `None` for the optimizer family.
    pub pgd: Option<PgdOutcome>,
}

impl MethodOutcome {
    fn from_trace(method: Method, trace: RunTrace) -> MethodOutcome {
        let censored = trace.terminal_status != TerminalStatus::Sosp;
        let status = match trace.terminal_status {
            TerminalStatus::Sosp => "sosp",
            TerminalStatus::BudgetExhausted => ">cap",
            TerminalStatus::EpisodeCap => "episode_cap",
        };
        MethodOutcome {
            method,
            iterations: trace.iterations(),
            censored,
            status,
            terminal_f: trace.terminal_f,
            terminal_grad_norm: trace.terminal_grad_norm,
            trace: Some(trace),
            pgd: None,
        }
    }

    fn from_pgd(out: PgdOutcome) -> MethodOutcome {
        MethodOutcome {
            method: Method::Pgd,
            iterations: out.iterations,
            censored: !out.converged,
            status: if out.converged { "converged" } else { ">cap" },
            terminal_f: out.terminal_f,
            terminal_grad_norm: out.terminal_grad_norm,
            trace: None,
            pgd: Some(out),
        }
    }
}

/// Run one method on one problem from one start, deterministically in
/// `seed`. The same seed integer drives the method's internal randomness;
/// start points use a salted stream (see [`starts`]).
pub fn run_method(
    p: &Problem,
    cfg: &PsdConfig,
    method: Method,
    x0: &[f64],
    seed: u64,
) -> Result<MethodOutcome, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match method {
        Method::Gd => {
            let gd_cfg = cfg.clone().with_episodes_enabled(false);
            Ok(MethodOutcome::from_trace(
                method,
                run_psd(p, &gd_cfg, x0, &mut rng)?,
            ))
        }
        Method::Psd => Ok(MethodOutcome::from_trace(
            method,
            run_psd(p, cfg, x0, &mut rng)?,
        )),
        Method::PsdProbe => {
            let probe = probe_params_for(p, cfg)?;
            Ok(MethodOutcome::from_trace(
                method,
                run_psd_probe(p, cfg, &probe, x0, &mut rng)?,
            ))
        }
        Method::Pgd => {
            let params = PgdParams::derive(cfg);
            Ok(MethodOutcome::from_pgd(run_pgd(p, &params, x0, &mut rng)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_and_parsing_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.name()), Some(m));
        }
        for f in [
            ProblemFamily::Quartic,
            ProblemFamily::CoupledQuartic,
            ProblemFamily::Rosenbrock,
            ProblemFamily::ConvexQuadratic,
        ] {
            assert_eq!(ProblemFamily::parse(f.name()), Some(f));
        }
        assert_eq!(Method::parse("newton"), None);
        assert_eq!(ProblemFamily::parse("ackley"), None);
    }

    #[test]
    fn base_config_pins_the_shared_benchmark_knobs() {
        let p = Problem::separable_quartic(10).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1).unwrap();
        assert_eq!(cfg.iter_cap, Some(ITER_CAP));
        assert_eq!(cfg.trace_stride, TRACE_STRIDE);
        assert!(cfg.early_exit);
        assert!(cfg.episodes_enabled);
    }

    #[test]
    fn gradient_descent_stalls_on_the_saddle_manifold_and_is_censored() {
        let p = Problem::separable_quartic(5).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1)
            .unwrap()
            .with_iter_cap(Some(2_000));
        let x0 = ProblemFamily::Quartic.start(5, 1);
        let out = run_method(&p, &cfg, Method::Gd, &x0, 1).unwrap();
        assert!(out.censored);
        assert_eq!(out.status, ">cap");
        assert_eq!(out.iterations, 2_000);
        // The masked coordinates never move under plain descent.
        let trace = out.trace.expect("driver method keeps its trace");
        let stuck = trace
            .terminal_point
            .iter()
            .zip(&x0)
            .filter(|&(now, start)| *start == 0.0 && *now == 0.0)
            .count();
        assert!(stuck >= 1, "expected surviving exact zeros");
    }

    #[test]
    fn escaping_method_reaches_stationarity_from_the_same_start() {
        let p = Problem::separable_quartic(5).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1).unwrap();
        let x0 = ProblemFamily::Quartic.start(5, 1);
        let out = run_method(&p, &cfg, Method::Psd, &x0, 1).unwrap();
        assert!(!out.censored, "status: {}", out.status);
        assert_eq!(out.status, "sosp");
        assert!(
            out.terminal_f <= -(5.0 / 4.0) + 1e-2,
            "terminal f = {}",
            out.terminal_f
        );
        assert!(out.iterations < ITER_CAP);
    }

    #[test]
    fn convex_quadratic_needs_no_escapes_for_any_driver_method() {
        let fam = ProblemFamily::ConvexQuadratic;
        let p = fam.build(20, DEFAULT_COUPLING).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1).unwrap();
        assert!(cfg.quadratic_mode, "ρ = 0 selects quadratic mode");
        let x0 = fam.start(20, 4);
        let gd = run_method(&p, &cfg, Method::Gd, &x0, 4).unwrap();
        let psd = run_method(&p, &cfg, Method::Psd, &x0, 4).unwrap();
        let probe = run_method(&p, &cfg, Method::PsdProbe, &x0, 4).unwrap();
        for out in [&gd, &psd, &probe] {
            assert_eq!(out.status, "sosp");
            assert!(out.trace.as_ref().unwrap().episodes.is_empty());
        }
        // Identical trajectories, down to the bits.
        assert_eq!(gd.iterations, psd.iterations);
        assert_eq!(psd.iterations, probe.iterations);
        assert_eq!(
            psd.trace.as_ref().unwrap().terminal_point,
            probe.trace.as_ref().unwrap().terminal_point
        );
        assert_eq!(
            gd.trace.as_ref().unwrap().terminal_point,
            psd.trace.as_ref().unwrap().terminal_point
        );
    }

    #[test]
    fn probe_parameters_fall_back_cleanly_in_quadratic_mode() {
        let fam = ProblemFamily::ConvexQuadratic;
        let p = fam.build(50, DEFAULT_COUPLING).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1).unwrap();
        let probe = probe_params_for(&p, &cfg).unwrap();
        // h reuses the quadratic-mode perturbation radius ε/ℓ.
        assert_eq!(probe.h, 1e-3 / 25.0);
        assert_eq!(probe.alpha, probe.h / 8.0);
        // m = ⌈16·ln(16·50/0.1)⌉ = ⌈143.795…⌉.
        assert_eq!(probe.m, 144);
        assert_eq!(probe.threshold, -(2.0 / 3.0) * cfg.curvature_scale);

        // The standard derivation still applies off quadratic mode.
        let q = Problem::separable_quartic(10).unwrap();
        let qcfg = base_config(&q, 1e-3, 0.1).unwrap();
        let derived = probe_params_for(&q, &qcfg).unwrap();
        assert_eq!(derived.h, (1e-3_f64 / 36.0).sqrt());
    }

    #[test]
    fn baseline_outcome_maps_into_the_uniform_view() {
        let p = Problem::separable_quartic(4).unwrap();
        let cfg = base_config(&p, 1e-3, 0.1)
            .unwrap()
            .with_iter_cap(Some(300));
        let x0 = ProblemFamily::Quartic.start(4, 9);
        let out = run_method(&p, &cfg, Method::Pgd, &x0, 9).unwrap();
        assert_eq!(out.method, Method::Pgd);
        assert!(out.trace.is_none());
        let pgd = out.pgd.as_ref().expect("baseline extras");
        assert_eq!(out.censored, !pgd.converged);
        assert_eq!(out.iterations, pgd.iterations);
    }
}
