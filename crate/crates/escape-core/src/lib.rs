//! Saddle-escaping first-order optimization with every constant explicit.
//!
//! The core loop ([`psd::run_psd`]) performs plain gradient descent while the
//! gradient is large, and when it stalls at a small-gradient point decides —
//! via a randomized Lanczos estimate of the smallest Hessian eigenvalue —
//! whether the point is an approximate second-order stationary point (SOSP)
//! or a strict saddle. Saddles are escaped with a uniform ball perturbation
//! followed by a fixed-length burst of gradient steps ("escape episode").
//! All schedule parameters (step size, curvature scale, perturbation radius,
//! episode count and length) derive from four problem constants: the
//! gradient-Lipschitz constant `ℓ`, the Hessian-Lipschitz constant `ρ`, an
//! initial suboptimality bound `Δf`, and the dimension.
//!
//! Two escape variants share the same driver:
//! * [`probe::run_psd_probe`] replaces the Lanczos check with cheap
//!   central-difference curvature probes along random unit directions and
//!   steps directly along a detected negative-curvature direction.
//! * [`psgd::run_psgd`] runs on mini-batch stochastic gradients with a
//!   variance-robust batch size and a noise-aware descend/escape trigger; at
//!   zero noise it reproduces the deterministic run exactly, trace for trace.
//!
//! Everything is deterministic given a seed: samplers, Lanczos start vectors,
//! perturbations, and batch noise all draw from caller-provided ChaCha8
//! streams, and reruns produce identical traces byte for byte.
//!
//! [`oracle`] supplies the built-in benchmark families (separable and coupled
//! quartics, Rosenbrock, seeded random quadratics) with analytic gradients
//! and Hessian-vector products plus audited Lipschitz metadata. [`stats`]
//! holds the small statistics kit (percentile-bootstrap median intervals,
//! exact Wilcoxon signed-rank test) used by the benchmark harness.

pub mod diagnostics;
pub mod eigs;
pub mod error;
pub mod oracle;
pub mod probe;
pub mod psd;
pub mod psgd;
pub mod stats;
pub mod trace;
pub mod vecmath;

pub use error::{EigsError, ParamError, RunError, StatsError};
pub use oracle::{NoisyGradModel, Problem};
pub use probe::{run_psd_probe, ProbeParams};
pub use psd::{derive_params, run_psd, PsdConfig};
pub use psgd::{run_psgd, PsgdConfig};
pub use stats::{bootstrap_median_ci, wilcoxon_signed_rank, StatsSummary};
pub use trace::{EpisodeRecord, RunTrace, TerminalStatus};
