//! Run records: what an optimizer run did, with exact evaluation accounting.
//!
//! [`RunTrace`] is a plain immutable record produced at the end of a run. It
//! separates the cost ledger into buckets that add up exactly:
//!
//! * `descent_steps` — gradient steps taken in the descent phase,
//! * `episode_steps` — gradient steps taken inside escape episodes,
//! * `check_grad_evals` — gradients evaluated only to test the phase
//!   condition `‖∇f‖ ≤ ε` at stationarity checks (no step taken),
//! * `hvp_charge` — gradient-equivalents charged for curvature-check HVPs
//!   (1 per analytic HVP, 2 per finite-difference HVP),
//!
//! so `total_grad_evals()` equals `descent_steps + episode_steps +
//! check_grad_evals + hvp_charge` as an identity, and the theory comparisons
//! that count only pure gradient steps can use the individual buckets.

use std::fmt;
use std::io::{self, Write};

/// Why a run stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalStatus {
    /// Second-order stationarity declared: small gradient and no curvature
    /// below the tolerance, per the randomized check.
    Sosp,
    /// The gradient-evaluation budget or iteration cap was hit first.
    BudgetExhausted,
    /// The maximum number of escape episodes was spent without reaching
    /// stationarity.
    EpisodeCap,
}

impl fmt::Display for TerminalStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TerminalStatus::Sosp => "sosp",
            TerminalStatus::BudgetExhausted => "budget_exhausted",
            TerminalStatus::EpisodeCap => "episode_cap",
        };
        f.write_str(s)
    }
}

/// Which phase an iteration belonged to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Descent,
    Episode,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Descent => "descent",
            Phase::Episode => "episode",
        })
    }
}

/// One sampled point of the trajectory (taken every `trace_stride`
/// iterations, plus always the final iterate).
#[derive(Clone, Debug, PartialEq)]
pub struct TraceSample {
    pub iter: u64,
    pub phase: Phase,
    pub f: f64,
    pub grad_norm: f64,
    /// Episode this sample belongs to, when `phase` is `Episode`.
    pub episode_id: Option<u64>,
}

/// Summary of one escape episode: perturb, run fixed-length gradient
/// descent, compare function values.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeRecord {
    pub episode_id: u64,
    /// f at the trigger point (before the perturbation).
    pub f_enter: f64,
    /// f after the episode's final gradient step.
    pub f_exit: f64,
    /// `f_enter − f_exit`, exactly.
    pub decrease: f64,
    /// Gradient steps actually taken (= configured episode length unless the
    /// optional early exit fired or a budget intervened).
    pub steps: u64,
    /// Whether `decrease` reached the per-episode target `ε²/(128ℓ)`.
    pub success: bool,
    /// Norm of the sampled perturbation `‖ξ‖ ≤ r`.
    pub perturbation_norm: f64,
    /// For probe-driven episodes: index of the probe direction that fired.
    pub probe_id: Option<u64>,
}

/// Extra ledger rows recorded only by the stochastic-gradient variant.
#[derive(Clone, Debug, PartialEq)]
pub struct StochasticExtras {
    /// Mini-batch size used for descent/trigger gradients.
    pub batch: u64,
    /// Noise-aware trigger threshold on `‖ĝ‖` (strictly above ε).
    pub trigger_threshold: f64,
    /// How many trigger evaluations fell at or below the threshold (i.e.
    /// routed to the stationarity-check/escape branch).
    pub maybe_escape_events: u64,
}

/// Immutable record of one optimizer run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunTrace {
    /// Periodic `(iter, phase, f, ‖∇f‖)` samples, ending with the final
    /// iterate.
    pub samples: Vec<TraceSample>,
    pub episodes: Vec<EpisodeRecord>,

    /// Gradient steps taken while `‖∇f‖ > ε` (descent phase).
    pub descent_steps: u64,
    /// Gradient steps taken inside escape episodes.
    pub episode_steps: u64,
    /// Gradients spent purely on phase-condition checks (no step taken).
    pub check_grad_evals: u64,
    /// Total gradient-oracle calls: `descent_steps + episode_steps +
    /// check_grad_evals` (stochastic runs count batched calls once here).
    pub grad_evals: u64,
    /// Total *sample* count for stochastic gradients (`calls × batch`);
    /// equals `grad_evals` for exact-gradient runs.
    pub grad_samples: u64,
    /// Raw Hessian-vector-product oracle applications.
    pub hvp_evals: u64,
    /// Gradient-equivalent charge for those HVPs (×1 analytic, ×2
    /// finite-difference).
    pub hvp_charge: u64,
    /// Function-value oracle calls (used by curvature probes).
    pub value_evals: u64,
    /// Number of randomized curvature checks performed.
    pub sosp_checks: u64,

    pub terminal_point: Vec<f64>,
    pub terminal_f: f64,
    pub terminal_grad_norm: f64,
    pub terminal_status: TerminalStatus,
    /// Minimum-eigenvalue estimate from the final curvature check, when one
    /// ran at the terminal point.
    pub final_min_eig_est: Option<f64>,

    /// Worst-case evaluation bound `4ℓΔf/ε² + M·T` for the configured run
    /// (the coarse descent-phase accounting).
    pub theory_bound_coarse: f64,
    /// Same bound with the refined descent constant: `8ℓΔf/(3ε²) + M·T`.
    pub theory_bound_refined: f64,

    /// Present only for stochastic-gradient runs.
    pub stochastic: Option<StochasticExtras>,
}

impl RunTrace {
    /// Headline iteration count: gradient *steps* taken (descent plus
    /// episode), excluding check-only evaluations.
    pub fn iterations(&self) -> u64 {
        self.descent_steps + self.episode_steps
    }

    /// Total gradient-equivalent work: every gradient-oracle call plus the
    /// HVP charge. Identity: `= descent_steps + episode_steps +
    /// check_grad_evals + hvp_charge`.
    pub fn total_grad_evals(&self) -> u64 {
        self.grad_evals + self.hvp_charge
    }

    /// Whether two runs followed the identical trajectory: same sampled
    /// path, episodes, step counts, and terminal state (floats compared
    /// bitwise). Ledger fields that don't affect the trajectory — sample
    /// counts, batch bookkeeping — are ignored, so an exact-gradient run and
    /// a zero-variance stochastic run can compare equal.
    pub fn same_trajectory(&self, other: &RunTrace) -> bool {
        self.samples == other.samples
            && self.episodes == other.episodes
            && self.descent_steps == other.descent_steps
            && self.episode_steps == other.episode_steps
            && self.terminal_point == other.terminal_point
            && self.terminal_f == other.terminal_f
            && self.terminal_status == other.terminal_status
    }

    /// Write the trajectory samples as CSV with columns
    /// `iter,phase,f,grad_norm,episode_id` (empty `episode_id` for descent
    /// rows).
    pub fn write_trace_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "iter,phase,f,grad_norm,episode_id")?;
        for s in &self.samples {
            match s.episode_id {
                Some(id) => {
                    writeln!(w, "{},{},{},{},{}", s.iter, s.phase, s.f, s.grad_norm, id)?
                }
                None => writeln!(w, "{},{},{},{},", s.iter, s.phase, s.f, s.grad_norm)?,
            }
        }
        Ok(())
    }

    /// Write the episode list as CSV with columns
    /// `episode_id,f_enter,f_exit,decrease,steps,success`.
    pub fn write_episodes_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "episode_id,f_enter,f_exit,decrease,steps,success")?;
        for e in &self.episodes {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.episode_id, e.f_enter, e.f_exit, e.decrease, e.steps, e.success
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_trace() -> RunTrace {
        RunTrace {
            samples: vec![
                TraceSample {
                    iter: 0,
                    phase: Phase::Descent,
                    f: 1.5,
                    grad_norm: 2.0,
                    episode_id: None,
                },
                TraceSample {
                    iter: 1,
                    phase: Phase::Episode,
                    f: 1.25,
                    grad_norm: 0.5,
                    episode_id: Some(0),
                },
            ],
            episodes: vec![EpisodeRecord {
                episode_id: 0,
                f_enter: 1.5,
                f_exit: 1.25,
                decrease: 0.25,
                steps: 1,
                success: true,
                perturbation_norm: 0.01,
                probe_id: None,
            }],
            descent_steps: 1,
            episode_steps: 1,
            check_grad_evals: 1,
            grad_evals: 3,
            grad_samples: 3,
            hvp_evals: 2,
            hvp_charge: 2,
            value_evals: 0,
            sosp_checks: 1,
            terminal_point: vec![0.1, 0.2],
            terminal_f: 1.25,
            terminal_grad_norm: 0.5,
            terminal_status: TerminalStatus::Sosp,
            final_min_eig_est: Some(0.3),
            theory_bound_coarse: 100.0,
            theory_bound_refined: 80.0,
            stochastic: None,
        }
    }

    #[test]
    fn ledger_identities_hold() {
        let t = tiny_trace();
        assert_eq!(t.iterations(), 2);
        assert_eq!(t.total_grad_evals(), 5);
        assert_eq!(
            t.total_grad_evals(),
            t.descent_steps + t.episode_steps + t.check_grad_evals + t.hvp_charge
        );
    }

    #[test]
    fn trace_csv_has_exact_layout() {
        let t = tiny_trace();
        let mut buf = Vec::new();
        t.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "iter,phase,f,grad_norm,episode_id\n0,descent,1.5,2,\n1,episode,1.25,0.5,0\n"
        );

        let mut buf = Vec::new();
        t.write_episodes_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text,
            "episode_id,f_enter,f_exit,decrease,steps,success\n0,1.5,1.25,0.25,1,true\n"
        );
    }

    #[test]
    fn same_trajectory_ignores_ledger_only_fields() {
        let a = tiny_trace();
        let mut b = tiny_trace();
        b.grad_samples = 999; // stochastic bookkeeping must not matter
        b.stochastic = Some(StochasticExtras {
            batch: 4,
            trigger_threshold: 0.1,
            maybe_escape_events: 2,
        });
        assert!(a.same_trajectory(&b));

        let mut c = tiny_trace();
        c.terminal_f = 1.2500000001;
        assert!(!a.same_trajectory(&c), "float drift must break identity");
    }
}
