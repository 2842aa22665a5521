//! Stochastic-gradient variant: mini-batch descent with a noise-aware
//! trigger.
//!
//! Descent and trigger decisions use batch means of noisy gradients with
//! per-sample variance `σ²`. Two guards keep the stochastic run faithful to
//! the exact one: the batch size is large enough that a false trigger
//! (taking the escape branch while `‖∇f‖ > ε` still holds) has probability
//! at most `δ_fp` per test, and the trigger threshold is inflated from `ε`
//! to `ε·√(1 + 2σ²/(Bε²))` so batch noise cannot hide a large true
//! gradient. Stationarity checks always use exact oracles. With `σ² = 0`
//! the schedule collapses to the exact algorithm (`B = 1`, threshold `ε`)
//! and produces bit-identical trajectories under the same seed.

use rand_chacha::ChaCha8Rng;

use crate::error::{ParamError, RunError};
use crate::oracle::NoisyGradModel;
use crate::psd::{run_driver, CheckMode, NoisyEngine, PsdConfig};
use crate::trace::{Phase, RunTrace, StochasticExtras, TerminalStatus};
use crate::vecmath::{ceil_tol, norm};
use std::io::{self, Write};

/// Default per-test false-trigger probability `δ_fp = 2e⁻² ≈ 0.2707`, the
/// value at which the batch formula's constant `2·ln(2/δ_fp)` is exactly 4.
pub const DEFAULT_FALSE_TRIGGER_PROB: f64 = 0.270_670_566_473_225_4;

/// Mini-batch size `B = max{1, ⌈(2σ²/ε²)·ln(2/δ_fp)⌉}` keeping the
/// false-trigger probability per gradient test at most `δ_fp`.
pub fn batch_size(sigma2: f64, epsilon: f64, delta_fp: f64) -> u64 {
    assert!(
        sigma2 >= 0.0 && sigma2.is_finite(),
        "noise variance must be finite and ≥ 0, got {sigma2}"
    );
    assert!(
        epsilon > 0.0 && epsilon.is_finite(),
        "gradient tolerance must be finite and > 0, got {epsilon}"
    );
    assert!(
        delta_fp > 0.0 && delta_fp < 1.0,
        "false-trigger probability must lie in (0, 1), got {delta_fp}"
    );
    let raw = ceil_tol(2.0 * sigma2 / (epsilon * epsilon) * (2.0 / delta_fp).ln());
    if raw < 1.0 {
        1
    } else {
        raw as u64
    }
}

/// Configuration for a stochastic-gradient run: the exact-run schedule plus
/// the noise model's variance and the derived batch/trigger constants.
#[derive(Clone, Debug, PartialEq)]
pub struct PsgdConfig {
    /// Schedule of the underlying exact algorithm (steps, episodes, caps).
    pub base: PsdConfig,
    /// Per-sample gradient noise variance `σ²` (total across coordinates).
    pub sigma2: f64,
    /// Per-test false-trigger probability bound `δ_fp`.
    pub false_trigger_prob: f64,
    /// Derived mini-batch size `B`.
    pub batch: u64,
    /// Derived trigger threshold `ε·√(1 + 2σ²/(Bε²))` on `‖ĝ‖`; equals `ε`
    /// exactly when `σ² = 0`.
    pub trigger_threshold: f64,
    /// Run escape episodes on exact gradients instead of batch means
    /// (ablation switch; default `false`).
    pub exact_episode_grads: bool,
}

impl PsgdConfig {
    /// Derive the batch size and trigger threshold for a given noise level.
    pub fn new(base: PsdConfig, sigma2: f64, delta_fp: f64) -> Result<Self, ParamError> {
        if !(sigma2 >= 0.0 && sigma2.is_finite()) {
            return Err(ParamError::invalid(
                "sigma2",
                format!("noise variance must be finite and ≥ 0, got {sigma2}"),
            ));
        }
        if !(delta_fp > 0.0 && delta_fp < 1.0) {
            return Err(ParamError::invalid(
                "delta_fp",
                format!("false-trigger probability must lie in (0, 1), got {delta_fp}"),
            ));
        }
        let batch = batch_size(sigma2, base.grad_tol, delta_fp);
        let eps = base.grad_tol;
        // Same expression as the run driver's noisy trigger, kept bitwise
        // identical so the recorded threshold matches the one applied.
        let trigger_threshold = eps * (1.0 + 2.0 * sigma2 / (batch as f64 * eps * eps)).sqrt();
        Ok(PsgdConfig {
            base,
            sigma2,
            false_trigger_prob: delta_fp,
            batch,
            trigger_threshold,
            exact_episode_grads: false,
        })
    }

    /// Convenience constructor using [`DEFAULT_FALSE_TRIGGER_PROB`].
    pub fn with_default_false_trigger(base: PsdConfig, sigma2: f64) -> Result<Self, ParamError> {
        Self::new(base, sigma2, DEFAULT_FALSE_TRIGGER_PROB)
    }

    /// Switch escape episodes to exact gradients (ablation).
    pub fn with_exact_episode_grads(mut self, on: bool) -> Self {
        self.exact_episode_grads = on;
        self
    }
}

/// What the driving loop does with a batch gradient estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TriggerDecision {
    /// `‖ĝ‖` is above the noise-aware threshold: take a descent step.
    Descend,
    /// `‖ĝ‖` is at or below the threshold (including `ĝ = 0`): verify with
    /// an exact gradient and possibly start an escape episode.
    MaybeEscape,
}

/// Noise-aware trigger rule: descend iff `‖ĝ‖` strictly exceeds the
/// inflated threshold.
pub fn noise_aware_trigger(g_hat: &[f64], cfg: &PsgdConfig) -> TriggerDecision {
    if norm(g_hat) > cfg.trigger_threshold {
        TriggerDecision::Descend
    } else {
        TriggerDecision::MaybeEscape
    }
}

/// Run the stochastic-gradient algorithm. The model's own RNG drives the
/// gradient noise; `rng` drives the algorithm's randomness (episode
/// perturbations, eigenvalue-check seeds) exactly as in the exact run.
///
/// Errors with [`ParamError::Invalid`] if the model's noise variance
/// disagrees with the config's.
pub fn run_psgd(
    model: &mut NoisyGradModel,
    cfg: &PsgdConfig,
    x0: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<RunTrace, RunError> {
    if model.sigma2() != cfg.sigma2 {
        return Err(ParamError::invalid(
            "sigma2",
            format!(
                "model carries σ² = {} but the config was derived for σ² = {}",
                model.sigma2(),
                cfg.sigma2
            ),
        )
        .into());
    }
    let sigma2 = cfg.sigma2;
    let mut engine = NoisyEngine {
        model,
        batch: cfg.batch,
        exact_episodes: cfg.exact_episode_grads,
    };
    let mut trace = run_driver(&mut engine, &cfg.base, CheckMode::Lanczos, x0, rng)?;
    // Exact driving gradients spend one check eval per trigger event; noisy
    // ones spend two (the trigger gradient plus its exact verification).
    let per_trigger = if sigma2 == 0.0 { 1 } else { 2 };
    trace.stochastic = Some(StochasticExtras {
        batch: cfg.batch,
        trigger_threshold: cfg.trigger_threshold,
        maybe_escape_events: trace.check_grad_evals / per_trigger,
    });
    Ok(trace)
}

/// Write a stochastic run's trajectory as CSV with the standard columns
/// plus `batch_size,trigger_threshold,triggered`. The first two repeat the
/// run constants; `triggered` is `true` on rows recorded inside post-trigger
/// activity (escape-episode rows, and the terminal row of a run that ended
/// at a verified stationary point).
pub fn write_stochastic_trace_csv<W: Write>(trace: &RunTrace, w: &mut W) -> io::Result<()> {
    let extras = trace.stochastic.as_ref().expect("stochastic run trace");
    writeln!(
        w,
        "iter,phase,f,grad_norm,episode_id,batch_size,trigger_threshold,triggered"
    )?;
    let last_iter = trace.samples.last().map(|s| s.iter);
    for s in &trace.samples {
        let terminal_sosp =
            Some(s.iter) == last_iter && trace.terminal_status == TerminalStatus::Sosp;
        let triggered = s.phase == Phase::Episode || terminal_sosp;
        let id = s
            .episode_id
            .map_or(String::new(), |id| id.to_string());
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            s.iter,
            s.phase,
            s.f,
            s.grad_norm,
            id,
            extras.batch,
            extras.trigger_threshold,
            triggered
        )?;
    }
    Ok(())
}
