//! The core saddle-escaping optimizer: schedule derivation, gradient
//! descent, escape episodes, randomized stationarity checks, and the main
//! loop with exact evaluation accounting.
//!
//! The method alternates two phases driven by the gradient norm:
//!
//! * **descent** — while `‖∇f(x)‖ > ε`, take plain gradient steps with
//!   `η = 1/(2ℓ)`; each step is guaranteed to decrease `f` by at least
//!   `(3/(8ℓ))‖∇f(x)‖²`;
//! * **check/escape** — once the gradient is small, estimate the smallest
//!   Hessian eigenvalue with randomized Lanczos. If the estimate clears
//!   `−γ + γ/4` (a quarter of the curvature scale absorbs estimation
//!   error), declare second-order stationarity and stop. Otherwise run one
//!   *escape episode*: perturb uniformly in a ball of radius `r` and take
//!   exactly `T` gradient steps, which escapes a strict saddle with high
//!   probability and decreases `f` by at least `ε²/(128ℓ)` per successful
//!   episode.
//!
//! All schedule constants are explicit functions of `(ℓ, ρ, Δf, ε, δ, d)`
//! — see [`derive_params`] — and every oracle call is charged to a named
//! ledger bucket in the returned [`RunTrace`].

use rand::RngCore;
use rand_chacha::ChaCha8Rng;

use crate::eigs::{self, LanczosResult};
use crate::error::{ParamError, RunError};
use crate::oracle::{self, NoisyGradModel, Problem};
use crate::probe::ProbeParams;
use crate::trace::{EpisodeRecord, Phase, RunTrace, TerminalStatus, TraceSample};
use crate::vecmath::{all_finite, axpy, ceil_tol, norm};

/// Complete parameter set for one optimizer run.
///
/// Produced by [`derive_params`] (or [`PsdConfig::for_problem`]); the
/// schedule fields obey `η = 1/(2ℓ)`, `γ = √(ρε)`, `r = γ/(8ρ)`,
/// `M = 1 + ⌈128ℓΔf/ε²⌉`, `T = ⌈(8ℓ/γ)·ln(16dM/δ)⌉` when `ρ > 0`. The
/// behavioral flags (`early_exit`, `episodes_enabled`, budgets, tracing)
/// have builder-style setters and sane defaults.
#[derive(Clone, Debug, PartialEq)]
pub struct PsdConfig {
    /// Problem dimension `d`.
    pub dim: usize,
    /// Gradient-Lipschitz constant `ℓ` the schedule was derived from.
    pub grad_lipschitz: f64,
    /// Hessian-Lipschitz constant `ρ` (0 selects quadratic mode).
    pub hess_lipschitz: f64,
    /// Initial suboptimality bound `Δf` used for the episode budget.
    pub suboptimality: f64,
    /// Gradient tolerance `ε`.
    pub grad_tol: f64,
    /// Failure probability `δ`.
    pub failure_prob: f64,
    /// Step size `η = 1/(2ℓ)`.
    pub step_size: f64,
    /// Curvature scale `γ = √(ρε)`; in quadratic mode, the user-facing
    /// curvature tolerance (defaults to `ε`).
    pub curvature_scale: f64,
    /// Perturbation radius `r = γ/(8ρ) = (1/8)√(ε/ρ)`; in quadratic mode,
    /// the single-perturbation radius `ε/ℓ`.
    pub perturb_radius: f64,
    /// Episode budget `M` (quadratic mode: 1).
    pub max_episodes: u64,
    /// Episode length `T` in gradient steps.
    pub episode_len: u64,
    /// Hard cap on total gradient-equivalent evaluations (gradient calls
    /// plus HVP charge). The worst-case `M` is astronomically conservative,
    /// so this is the practical stop. `None` disables it.
    pub grad_budget: Option<u64>,
    /// Hard cap on gradient *steps* taken (descent + episode). `None`
    /// disables it.
    pub iter_cap: Option<u64>,
    /// Degenerate `ρ = 0` mode: constant Hessian, so the `√(ρε)` scales are
    /// unavailable. At most one perturbation (of radius `ε/ℓ`) is used, the
    /// curvature check compares against `curvature_scale` directly, and a
    /// genuinely indefinite quadratic diverges to `−∞` after the
    /// perturbation (surfacing as a non-finite abort — the honest outcome
    /// for an objective that is unbounded below).
    pub quadratic_mode: bool,
    /// End an episode as soon as its decrease target `ε²/(128ℓ)` is met
    /// (default off: run exactly `T` steps).
    pub early_exit: bool,
    /// When false, never perturb: plain gradient descent with periodic
    /// stationarity checks (baseline mode).
    pub episodes_enabled: bool,
    /// Record a trajectory sample every this many iterations (≥ 1).
    pub trace_stride: u64,
    /// Lanczos recurrence length for curvature checks.
    pub lanczos_k: usize,
    /// Lanczos breakdown threshold.
    pub lanczos_eps_term: f64,
    /// Use central-difference HVPs in curvature checks (charged 2 gradient
    /// equivalents each) instead of the analytic HVP oracle (charged 1).
    pub use_fd_hvp: bool,
}

/// Default cap on total gradient-equivalent evaluations.
pub const DEFAULT_GRAD_BUDGET: u64 = 10_000_000;

/// Derive the full schedule from the problem constants.
///
/// `ell` (ℓ) and `epsilon` (ε) must be positive, `delta` (δ) in `(0, 1]`,
/// `delta_f` (Δf) and `rho` (ρ) non-negative, `dim ≥ 1`. Natural logarithms
/// throughout. `rho = 0` returns the quadratic-mode config (constant
/// Hessian): `γ` defaults to `ε` (override with
/// [`PsdConfig::with_curvature_tol`]), one perturbation of radius `ε/ℓ`.
pub fn derive_params(
    ell: f64,
    rho: f64,
    delta_f: f64,
    epsilon: f64,
    delta: f64,
    dim: usize,
) -> Result<PsdConfig, ParamError> {
    if !ell.is_finite() || ell <= 0.0 {
        return Err(ParamError::invalid("ell", "must be finite and > 0"));
    }
    if !rho.is_finite() || rho < 0.0 {
        return Err(ParamError::invalid("rho", "must be finite and ≥ 0"));
    }
    if !delta_f.is_finite() || delta_f < 0.0 {
        return Err(ParamError::invalid("delta_f", "must be finite and ≥ 0"));
    }
    if !epsilon.is_finite() || epsilon <= 0.0 {
        return Err(ParamError::invalid("epsilon", "must be finite and > 0"));
    }
    if !(delta > 0.0 && delta <= 1.0) {
        return Err(ParamError::invalid("delta", "must lie in (0, 1]"));
    }
    if dim == 0 {
        return Err(ParamError::invalid("dim", "must be ≥ 1"));
    }

    let eta = 1.0 / (2.0 * ell);
    if rho == 0.0 {
        // Constant Hessian: a single perturbation of radius ε/ℓ suffices
        // (it raises f by at most ℓr²/2 = ε²/(2ℓ)), then plain descent; the
        // curvature tolerance has no √(ρε) scale and defaults to ε.
        let gamma = epsilon;
        return Ok(PsdConfig {
            dim,
            grad_lipschitz: ell,
            hess_lipschitz: 0.0,
            suboptimality: delta_f,
            grad_tol: epsilon,
            failure_prob: delta,
            step_size: eta,
            curvature_scale: gamma,
            perturb_radius: epsilon / ell,
            max_episodes: 1,
            episode_len: ceil_at_least_one((8.0 * ell / gamma) * ln_arg(dim, 1, delta)),
            grad_budget: Some(DEFAULT_GRAD_BUDGET),
            iter_cap: None,
            quadratic_mode: true,
            early_exit: false,
            episodes_enabled: true,
            trace_stride: 1,
            lanczos_k: eigs::default_lanczos_k(dim, ell, gamma),
            lanczos_eps_term: 1e-10 * ell,
            use_fd_hvp: false,
        });
    }

    let gamma = (rho * epsilon).sqrt();
    let r = gamma / (8.0 * rho);
    let m_raw = 1.0 + ceil_tol(128.0 * ell * delta_f / (epsilon * epsilon));
    let max_episodes = if m_raw >= u64::MAX as f64 {
        u64::MAX
    } else {
        m_raw as u64
    };
    let episode_len =
        ceil_at_least_one((8.0 * ell / gamma) * ln_arg(dim, max_episodes, delta));

    Ok(PsdConfig {
        dim,
        grad_lipschitz: ell,
        hess_lipschitz: rho,
        suboptimality: delta_f,
        grad_tol: epsilon,
        failure_prob: delta,
        step_size: eta,
        curvature_scale: gamma,
        perturb_radius: r,
        max_episodes,
        episode_len,
        grad_budget: Some(DEFAULT_GRAD_BUDGET),
        iter_cap: None,
        quadratic_mode: false,
        early_exit: false,
        episodes_enabled: true,
        trace_stride: 1,
        lanczos_k: eigs::default_lanczos_k(dim, ell, gamma),
        lanczos_eps_term: 1e-10 * ell,
        use_fd_hvp: false,
    })
}

/// `ln(16·d·M/δ)` with the integer product widened before the logarithm.
fn ln_arg(dim: usize, max_episodes: u64, delta: f64) -> f64 {
    (16.0 * dim as f64 * max_episodes as f64 / delta).ln()
}

fn ceil_at_least_one(x: f64) -> u64 {
    let c = ceil_tol(x);
    if c < 1.0 {
        1
    } else if c >= u64::MAX as f64 {
        u64::MAX
    } else {
        c as u64
    }
}

impl PsdConfig {
    /// Derive the schedule from a problem's own constants.
    pub fn for_problem(p: &Problem, epsilon: f64, delta: f64) -> Result<Self, ParamError> {
        derive_params(
            p.grad_lipschitz(),
            p.hess_lipschitz(),
            p.suboptimality(),
            epsilon,
            delta,
            p.dim(),
        )
    }

    /// Per-episode decrease target `ε²/(128ℓ)`.
    pub fn episode_decrease_target(&self) -> f64 {
        self.grad_tol * self.grad_tol / (128.0 * self.grad_lipschitz)
    }

    /// Stationarity threshold on the Lanczos estimate: `−γ + γ/4`.
    pub fn curvature_accept_threshold(&self) -> f64 {
        -self.curvature_scale + self.curvature_scale / 4.0
    }

    pub fn with_grad_budget(mut self, budget: Option<u64>) -> Self {
        self.grad_budget = budget;
        self
    }

    pub fn with_iter_cap(mut self, cap: Option<u64>) -> Self {
        self.iter_cap = cap;
        self
    }

    pub fn with_early_exit(mut self, enabled: bool) -> Self {
        self.early_exit = enabled;
        self
    }

    pub fn with_episodes_enabled(mut self, enabled: bool) -> Self {
        self.episodes_enabled = enabled;
        self
    }

    pub fn with_trace_stride(mut self, stride: u64) -> Result<Self, ParamError> {
        if stride == 0 {
            return Err(ParamError::invalid("trace_stride", "must be ≥ 1"));
        }
        self.trace_stride = stride;
        Ok(self)
    }

    pub fn with_use_fd_hvp(mut self, enabled: bool) -> Self {
        self.use_fd_hvp = enabled;
        self
    }

    /// Quadratic-mode curvature tolerance (rejected when `ρ > 0`, where the
    /// scale `γ = √(ρε)` is not a free choice). Also rescales the default
    /// Lanczos length to the new resolution.
    pub fn with_curvature_tol(mut self, eps_h: f64) -> Result<Self, ParamError> {
        if !self.quadratic_mode {
            return Err(ParamError::invalid(
                "curvature_tol",
                "only quadratic-mode configs take a free curvature tolerance",
            ));
        }
        if !eps_h.is_finite() || eps_h <= 0.0 {
            return Err(ParamError::invalid("curvature_tol", "must be finite and > 0"));
        }
        self.curvature_scale = eps_h;
        self.lanczos_k = eigs::default_lanczos_k(self.dim, self.grad_lipschitz, eps_h);
        Ok(self)
    }

    /// Sanity checks for hand-edited configs (derive_params output always
    /// passes).
    fn validate(&self) -> Result<(), ParamError> {
        if self.dim == 0 {
            return Err(ParamError::invalid("dim", "must be ≥ 1"));
        }
        for (name, v) in [
            ("grad_lipschitz", self.grad_lipschitz),
            ("grad_tol", self.grad_tol),
            ("step_size", self.step_size),
            ("curvature_scale", self.curvature_scale),
            ("perturb_radius", self.perturb_radius),
            ("lanczos_eps_term", self.lanczos_eps_term),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err(ParamError::invalid(name, "must be finite and > 0"));
            }
        }
        if !self.hess_lipschitz.is_finite() || self.hess_lipschitz < 0.0 {
            return Err(ParamError::invalid("hess_lipschitz", "must be finite and ≥ 0"));
        }
        if self.episode_len == 0 {
            return Err(ParamError::invalid("episode_len", "must be ≥ 1"));
        }
        if self.trace_stride == 0 {
            return Err(ParamError::invalid("trace_stride", "must be ≥ 1"));
        }
        if self.lanczos_k == 0 {
            return Err(ParamError::invalid("lanczos_k", "must be ≥ 1"));
        }
        Ok(())
    }
}

/// One plain gradient step `x⁺ = x − η∇f(x)`.
///
/// With `η = 1/(2ℓ)` this satisfies `f(x⁺) ≤ f(x) − (3/(8ℓ))‖∇f(x)‖²`; a
/// zero gradient returns `x` unchanged.
pub fn descent_step(p: &Problem, x: &[f64], eta: f64) -> Vec<f64> {
    let mut out = x.to_vec();
    let g = p.grad(x);
    axpy(-eta, &g, &mut out);
    out
}

/// Decide second-order stationarity at `x`: `‖∇f(x)‖ ≤ ε` and the Lanczos
/// minimum-eigenvalue estimate at least `−γ + γ/4`.
///
/// When the gradient condition already fails, Lanczos is skipped and the
/// result carries `None`. Standalone diagnostic entry point; the run loop
/// uses the same logic with ledger accounting.
pub fn sosp_check(
    p: &Problem,
    x: &[f64],
    cfg: &PsdConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(bool, Option<LanczosResult>), RunError> {
    let gnorm = norm(&p.grad(x));
    if gnorm > cfg.grad_tol {
        return Ok((false, None));
    }
    let seed = rng.next_u64();
    let res = run_lanczos(p, x, cfg, seed, None)?;
    let ok = res.lambda_min_est >= cfg.curvature_accept_threshold();
    Ok((ok, Some(res)))
}

/// Run the configured Lanczos check at `x`, charging HVP work to `ledger`
/// when one is supplied.
fn run_lanczos(
    p: &Problem,
    x: &[f64],
    cfg: &PsdConfig,
    seed: u64,
    ledger: Option<&mut Ledger>,
) -> Result<LanczosResult, RunError> {
    let mut hvp_calls = 0_u64;
    let res = if cfg.use_fd_hvp {
        let h = oracle::fd_step(x);
        eigs::lanczos_min_eig(
            |v, out| {
                hvp_calls += 1;
                out.copy_from_slice(&oracle::hvp_finite_difference(p, x, v, h));
            },
            cfg.dim,
            cfg.lanczos_k,
            cfg.lanczos_eps_term,
            seed,
        )?
    } else {
        eigs::lanczos_min_eig(
            |v, out| {
                hvp_calls += 1;
                p.hvp_into(x, v, out);
            },
            cfg.dim,
            cfg.lanczos_k,
            cfg.lanczos_eps_term,
            seed,
        )?
    };
    if let Some(ledger) = ledger {
        ledger.hvp_evals += hvp_calls;
        ledger.hvp_charge += hvp_calls * if cfg.use_fd_hvp { 2 } else { 1 };
        ledger.sosp_checks += 1;
    }
    Ok(res)
}

/// One standalone escape episode from `x` (requires `‖∇f(x)‖ ≤ ε`, not
/// enforced): sample `ξ` uniformly from the radius-`r` ball, set
/// `y₀ = x + ξ`, take exactly `T` gradient steps (fewer only with
/// `early_exit`), and report the entry/exit function values.
pub fn escape_episode(
    p: &Problem,
    x: &[f64],
    cfg: &PsdConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, EpisodeRecord) {
    let (y, record, _) = episode_with_iterates(p, x, cfg, rng, false);
    (y, record)
}

/// [`escape_episode`] variant that also returns every iterate
/// `y₀, y₁, …` (diagnostic; used to verify the Taylor-remainder bound along
/// actual escape trajectories).
pub fn escape_episode_traced(
    p: &Problem,
    x: &[f64],
    cfg: &PsdConfig,
    rng: &mut ChaCha8Rng,
) -> (Vec<f64>, EpisodeRecord, Vec<Vec<f64>>) {
    episode_with_iterates(p, x, cfg, rng, true)
}

fn episode_with_iterates(
    p: &Problem,
    x: &[f64],
    cfg: &PsdConfig,
    rng: &mut ChaCha8Rng,
    keep_iterates: bool,
) -> (Vec<f64>, EpisodeRecord, Vec<Vec<f64>>) {
    let f_enter = p.value(x);
    let xi = eigs::sample_ball(cfg.perturb_radius, cfg.dim, rng);
    let mut y = x.to_vec();
    axpy(1.0, &xi, &mut y);

    let mut iterates = Vec::new();
    if keep_iterates {
        iterates.push(y.clone());
    }
    let target = cfg.episode_decrease_target();
    let mut g = vec![0.0; cfg.dim];
    let mut steps = 0_u64;
    for _ in 0..cfg.episode_len {
        p.grad_into(&y, &mut g);
        axpy(-cfg.step_size, &g, &mut y);
        steps += 1;
        if keep_iterates {
            iterates.push(y.clone());
        }
        if cfg.early_exit && f_enter - p.value(&y) >= target {
            break;
        }
    }
    let f_exit = p.value(&y);
    let decrease = f_enter - f_exit;
    let record = EpisodeRecord {
        episode_id: 0,
        f_enter,
        f_exit,
        decrease,
        steps,
        success: decrease >= target,
        perturbation_norm: norm(&xi),
        probe_id: None,
    };
    (y, record, iterates)
}

/// Run the full optimizer from `x0`. Deterministic given `(cfg, x0, rng
/// seed)`. Returns the complete [`RunTrace`]; a non-finite objective or
/// gradient (divergence) aborts with [`RunError::NonFinite`].
pub fn run_psd(
    p: &Problem,
    cfg: &PsdConfig,
    x0: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace, RunError> {
    let mut engine = ExactEngine { p };
    run_driver(&mut engine, cfg, CheckMode::Lanczos, x0, rng)
}

// ---------------------------------------------------------------------------
// Shared run driver
// ---------------------------------------------------------------------------

/// Gradient supplier for the run driver, abstracting exact vs. mini-batch
/// stochastic gradients so the main loop is written once.
pub(crate) trait GradEngine {
    fn problem(&self) -> &Problem;
    /// Whether driving gradients are exact (`true` skips the separate exact
    /// verification gradient at trigger points).
    fn is_exact(&self) -> bool;
    /// Samples consumed per driving-gradient call.
    fn batch(&self) -> u64;
    /// Samples consumed per episode-gradient call.
    fn episode_batch(&self) -> u64;
    /// Trigger threshold on the driving gradient norm (ε for exact
    /// gradients; inflated for noisy ones).
    fn trigger_threshold(&self, eps: f64) -> f64;
    fn driving_grad(&mut self, x: &[f64], out: &mut [f64]);
    fn episode_grad(&mut self, x: &[f64], out: &mut [f64]);
}

pub(crate) struct ExactEngine<'a> {
    pub p: &'a Problem,
}

impl GradEngine for ExactEngine<'_> {
    fn problem(&self) -> &Problem {
        self.p
    }
    fn is_exact(&self) -> bool {
        true
    }
    fn batch(&self) -> u64 {
        1
    }
    fn episode_batch(&self) -> u64 {
        1
    }
    fn trigger_threshold(&self, eps: f64) -> f64 {
        eps
    }
    fn driving_grad(&mut self, x: &[f64], out: &mut [f64]) {
        self.p.grad_into(x, out);
    }
    fn episode_grad(&mut self, x: &[f64], out: &mut [f64]) {
        self.p.grad_into(x, out);
    }
}

pub(crate) struct NoisyEngine<'a> {
    pub model: &'a mut NoisyGradModel,
    pub batch: u64,
    pub exact_episodes: bool,
}

impl GradEngine for NoisyEngine<'_> {
    fn problem(&self) -> &Problem {
        self.model.problem()
    }
    fn is_exact(&self) -> bool {
        self.model.sigma2() == 0.0
    }
    fn batch(&self) -> u64 {
        self.batch
    }
    fn episode_batch(&self) -> u64 {
        if self.exact_episodes {
            1
        } else {
            self.batch
        }
    }
    fn trigger_threshold(&self, eps: f64) -> f64 {
        let sigma2 = self.model.sigma2();
        eps * (1.0 + 2.0 * sigma2 / (self.batch as f64 * eps * eps)).sqrt()
    }
    fn driving_grad(&mut self, x: &[f64], out: &mut [f64]) {
        self.model.stochastic_grad_into(x, self.batch, out);
    }
    fn episode_grad(&mut self, x: &[f64], out: &mut [f64]) {
        if self.exact_episodes {
            self.model.problem().grad_into(x, out);
        } else {
            self.model.stochastic_grad_into(x, self.batch, out);
        }
    }
}

/// How the small-gradient branch decides between stopping and escaping.
pub(crate) enum CheckMode<'a> {
    /// Randomized Lanczos curvature estimate, ball perturbation on failure.
    Lanczos,
    /// Finite-difference curvature probes, curvature-direction step on
    /// detection, stationarity declared when no probe fires.
    Probe(&'a ProbeParams),
}

#[derive(Default)]
struct Ledger {
    descent_steps: u64,
    episode_steps: u64,
    check_grad_evals: u64,
    grad_evals: u64,
    grad_samples: u64,
    hvp_evals: u64,
    hvp_charge: u64,
    value_evals: u64,
    sosp_checks: u64,
}

impl Ledger {
    fn grad_equivalents(&self) -> u64 {
        self.grad_evals + self.hvp_charge
    }
    fn iterations(&self) -> u64 {
        self.descent_steps + self.episode_steps
    }
}

struct Tracer {
    stride: u64,
    samples: Vec<TraceSample>,
}

impl Tracer {
    fn maybe_sample(&mut self, iter: u64, phase: Phase, f: f64, grad_norm: f64, ep: Option<u64>) {
        if iter.is_multiple_of(self.stride) {
            self.samples.push(TraceSample {
                iter,
                phase,
                f,
                grad_norm,
                episode_id: ep,
            });
        }
    }
}

fn caps_hit(ledger: &Ledger, cfg: &PsdConfig) -> bool {
    if let Some(budget) = cfg.grad_budget {
        if ledger.grad_equivalents() >= budget {
            return true;
        }
    }
    if let Some(cap) = cfg.iter_cap {
        if ledger.iterations() >= cap {
            return true;
        }
    }
    false
}

pub(crate) fn run_driver<E: GradEngine>(
    engine: &mut E,
    cfg: &PsdConfig,
    check_mode: CheckMode<'_>,
    x0: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace, RunError> {
    cfg.validate()?;
    // Snapshot the problem so exact-oracle reads (checks, episode values,
    // diagnostics) don't hold a borrow across the engine's mutable gradient
    // calls. One copy per run; the oracles themselves stay shared-free.
    let p = &engine.problem().clone();
    if x0.len() != cfg.dim {
        return Err(ParamError::DimensionMismatch {
            what: "x0",
            expected: cfg.dim,
            actual: x0.len(),
        }
        .into());
    }
    if p.dim() != cfg.dim {
        return Err(ParamError::DimensionMismatch {
            what: "problem dim",
            expected: cfg.dim,
            actual: p.dim(),
        }
        .into());
    }
    if !all_finite(x0) {
        return Err(ParamError::invalid("x0", "must be finite").into());
    }

    let mut ledger = Ledger::default();
    let mut tracer = Tracer {
        stride: cfg.trace_stride,
        samples: Vec::new(),
    };
    let mut episodes: Vec<EpisodeRecord> = Vec::new();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; cfg.dim];
    let mut iter: u64 = 0;
    let mut final_min_eig_est: Option<f64> = None;
    // Vanilla-descent mode throttles stationarity checks so a run parked at
    // a saddle doesn't spend its whole budget on curvature estimates.
    let check_interval = cfg.episode_len.max(1);
    let mut last_check: Option<u64> = None;
    // Track where the terminal sample should say the run ended.
    let mut final_phase = Phase::Descent;
    let mut final_episode_id: Option<u64> = None;

    let status = 'outer: loop {
        if caps_hit(&ledger, cfg) {
            break TerminalStatus::BudgetExhausted;
        }

        engine.driving_grad(&x, &mut g);
        ledger.grad_evals += 1;
        ledger.grad_samples += engine.batch();
        if !all_finite(&g) {
            return Err(RunError::NonFinite {
                what: "gradient",
                iteration: iter,
            });
        }
        let gnorm = norm(&g);
        let trigger = engine.trigger_threshold(cfg.grad_tol);

        if gnorm > trigger {
            take_descent_step(p, cfg, &mut x, &g, gnorm, iter, &mut tracer, engine.is_exact());
            ledger.descent_steps += 1;
            iter += 1;
            continue;
        }

        // Small driving gradient. Vanilla mode: periodic check, then step
        // regardless (the step's gradient is already in hand).
        if !cfg.episodes_enabled {
            let due = last_check.is_none_or(|lc| iter - lc >= check_interval);
            if due {
                let exact_gnorm = exact_gnorm_for_check(engine, &x, gnorm, &mut ledger);
                if exact_gnorm <= cfg.grad_tol {
                    let seed = rng.next_u64();
                    let res = run_lanczos(p, &x, cfg, seed, Some(&mut ledger))?;
                    last_check = Some(iter);
                    if res.lambda_min_est >= cfg.curvature_accept_threshold() {
                        final_min_eig_est = Some(res.lambda_min_est);
                        // The gradient in hand was spent on the check, not
                        // on a step.
                        ledger.check_grad_evals += 1;
                        break TerminalStatus::Sosp;
                    }
                }
            }
            take_descent_step(p, cfg, &mut x, &g, gnorm, iter, &mut tracer, engine.is_exact());
            ledger.descent_steps += 1;
            iter += 1;
            continue;
        }

        // Escape-enabled mode: the gradient in hand tested the phase
        // condition and will not drive a step.
        ledger.check_grad_evals += 1;

        let exact_gnorm = if engine.is_exact() {
            gnorm
        } else {
            let mut ge = vec![0.0; cfg.dim];
            p.grad_into(&x, &mut ge);
            ledger.grad_evals += 1;
            ledger.grad_samples += 1;
            ledger.check_grad_evals += 1;
            norm(&ge)
        };
        if exact_gnorm > cfg.grad_tol {
            // Noise-induced false trigger: the exact gradient is still
            // large, so resume descent.
            continue;
        }

        // Curvature decision.
        let episode_start: Vec<f64>;
        let mut probe_id: Option<u64> = None;
        let perturbation_norm;
        match check_mode {
            CheckMode::Lanczos => {
                let seed = rng.next_u64();
                let res = run_lanczos(p, &x, cfg, seed, Some(&mut ledger))?;
                if res.lambda_min_est >= cfg.curvature_accept_threshold() {
                    final_min_eig_est = Some(res.lambda_min_est);
                    break TerminalStatus::Sosp;
                }
                if episodes.len() as u64 >= cfg.max_episodes {
                    final_min_eig_est = Some(res.lambda_min_est);
                    break TerminalStatus::EpisodeCap;
                }
                let xi = eigs::sample_ball(cfg.perturb_radius, cfg.dim, rng);
                perturbation_norm = norm(&xi);
                let mut y = x.clone();
                axpy(1.0, &xi, &mut y);
                episode_start = y;
            }
            CheckMode::Probe(params) => {
                ledger.sosp_checks += 1;
                let (y, report) = crate::probe::psd_probe_step(p, &x, params, rng);
                ledger.value_evals += report.value_evals;
                match report.detection {
                    None => break TerminalStatus::Sosp,
                    Some(det) => {
                        if episodes.len() as u64 >= cfg.max_episodes {
                            break TerminalStatus::EpisodeCap;
                        }
                        probe_id = Some(det.probe_id);
                        perturbation_norm = params.alpha;
                        episode_start = y;
                    }
                }
            }
        }

        // Escape episode: fixed-length descent from the perturbed point.
        let episode_id = episodes.len() as u64;
        let f_enter = p.value(&x);
        ledger.value_evals += 1;
        let target = cfg.episode_decrease_target();
        let mut y = episode_start;
        let mut steps = 0_u64;
        let mut capped_mid_episode = false;
        while steps < cfg.episode_len {
            if caps_hit(&ledger, cfg) {
                capped_mid_episode = true;
                break;
            }
            engine.episode_grad(&y, &mut g);
            ledger.grad_evals += 1;
            ledger.grad_samples += engine.episode_batch();
            if !all_finite(&g) {
                return Err(RunError::NonFinite {
                    what: "gradient",
                    iteration: iter,
                });
            }
            let ep_gnorm = norm(&g);
            if iter.is_multiple_of(tracer.stride) {
                // Instrumentation read; not charged to the ledger.
                tracer.maybe_sample(iter, Phase::Episode, p.value(&y), ep_gnorm, Some(episode_id));
            }
            axpy(-cfg.step_size, &g, &mut y);
            ledger.episode_steps += 1;
            steps += 1;
            iter += 1;
            if !y.iter().all(|v| v.is_finite()) {
                return Err(RunError::NonFinite {
                    what: "iterate",
                    iteration: iter,
                });
            }
            if cfg.early_exit {
                ledger.value_evals += 1;
                if f_enter - p.value(&y) >= target {
                    break;
                }
            }
        }
        let f_exit = p.value(&y);
        ledger.value_evals += 1;
        if !f_exit.is_finite() {
            return Err(RunError::NonFinite {
                what: "objective",
                iteration: iter,
            });
        }
        let decrease = f_enter - f_exit;
        episodes.push(EpisodeRecord {
            episode_id,
            f_enter,
            f_exit,
            decrease,
            steps,
            success: decrease >= target,
            perturbation_norm,
            probe_id,
        });
        x = y;
        if capped_mid_episode {
            final_phase = Phase::Episode;
            final_episode_id = Some(episode_id);
            break 'outer TerminalStatus::BudgetExhausted;
        }
    };

    // Terminal diagnostics are reporting-only reads, not algorithm work:
    // they are excluded from the ledger, as are the tracer's f samples.
    let terminal_f = p.value(&x);
    let terminal_grad_norm = norm(&p.grad(&x));
    if tracer.samples.last().map(|s| s.iter) != Some(iter) {
        tracer.samples.push(TraceSample {
            iter,
            phase: final_phase,
            f: terminal_f,
            grad_norm: terminal_grad_norm,
            episode_id: final_episode_id,
        });
    }

    debug_assert_eq!(
        ledger.grad_evals,
        ledger.descent_steps + ledger.episode_steps + ledger.check_grad_evals,
        "gradient ledger buckets must partition the calls"
    );

    let ell = cfg.grad_lipschitz;
    let eps = cfg.grad_tol;
    let descent_coarse = 4.0 * ell * cfg.suboptimality / (eps * eps);
    let descent_refined = 8.0 * ell * cfg.suboptimality / (3.0 * eps * eps);
    let episode_budget = cfg.max_episodes as f64 * cfg.episode_len as f64;

    Ok(RunTrace {
        samples: tracer.samples,
        episodes,
        descent_steps: ledger.descent_steps,
        episode_steps: ledger.episode_steps,
        check_grad_evals: ledger.check_grad_evals,
        grad_evals: ledger.grad_evals,
        grad_samples: ledger.grad_samples,
        hvp_evals: ledger.hvp_evals,
        hvp_charge: ledger.hvp_charge,
        value_evals: ledger.value_evals,
        sosp_checks: ledger.sosp_checks,
        terminal_point: x,
        terminal_f,
        terminal_grad_norm,
        terminal_status: status,
        final_min_eig_est,
        theory_bound_coarse: descent_coarse + episode_budget,
        theory_bound_refined: descent_refined + episode_budget,
        stochastic: None,
    })
}

#[allow(clippy::too_many_arguments)]
fn take_descent_step(
    p: &Problem,
    cfg: &PsdConfig,
    x: &mut [f64],
    g: &[f64],
    gnorm: f64,
    iter: u64,
    tracer: &mut Tracer,
    grads_exact: bool,
) {
    if iter.is_multiple_of(tracer.stride) {
        // Instrumentation read; not charged to the ledger.
        tracer.maybe_sample(iter, Phase::Descent, p.value(x), gnorm, None);
    }
    #[cfg(debug_assertions)]
    let f_before = if grads_exact { p.value(x) } else { f64::NAN };
    axpy(-cfg.step_size, g, x);
    #[cfg(debug_assertions)]
    {
        // Universal descent guarantee: with η = 1/(2ℓ) and a valid ℓ, every
        // exact-gradient step decreases f by at least (3/(8ℓ))‖∇f‖².
        if grads_exact && cfg.step_size == 1.0 / (2.0 * cfg.grad_lipschitz) {
            let f_after = p.value(x);
            let bound = f_before - 3.0 / (8.0 * cfg.grad_lipschitz) * gnorm * gnorm
                + 1e-12 * (1.0 + f_before.abs());
            debug_assert!(
                f_after <= bound,
                "descent step violated the guaranteed decrease: f {f_before} -> {f_after}, \
                 ‖∇f‖ = {gnorm} (is ℓ = {} valid here?)",
                cfg.grad_lipschitz
            );
        }
    }
    let _ = grads_exact;
}

fn exact_gnorm_for_check<E: GradEngine>(
    engine: &mut E,
    x: &[f64],
    driving_gnorm: f64,
    ledger: &mut Ledger,
) -> f64 {
    if engine.is_exact() {
        driving_gnorm
    } else {
        let p = engine.problem();
        let g = p.grad(x);
        ledger.grad_evals += 1;
        ledger.grad_samples += 1;
        ledger.check_grad_evals += 1;
        norm(&g)
    }
}
