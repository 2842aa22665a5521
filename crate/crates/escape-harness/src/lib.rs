//! Benchmark and verification harness for the `escape-core` optimizer.
//!
//! The library half hosts everything the `escape` binary does so that
//! integration tests can drive experiments in-process: run-configuration
//! parsing ([`config`]), canonical start points for each benchmark family
//! ([`starts`]), the perturbed-gradient-descent baseline ([`pgd`]), a uniform
//! method runner ([`methods`]), the four seeded experiments with CSV
//! artifacts ([`experiments`]), and the numerical verification suite for the
//! optimizer's analytical guarantees ([`lemma_checks`]).
//!
//! Every experiment is deterministic: seeds fan out to a worker pool, results
//! are re-sorted by seed before writing, and re-running a spec produces
//! byte-identical CSV files.

pub mod config;
pub mod experiments;
pub mod lemma_checks;
pub mod methods;
pub mod pgd;
pub mod starts;

pub use config::{ConfigError, RawConfig};
pub use experiments::{run_experiment, ExperimentKind, ExperimentSpec, HarnessError, ResultsTable};
pub use methods::{run_method, Method, MethodOutcome, ProblemFamily};
pub use pgd::{run_pgd, PgdOutcome, PgdParams};
