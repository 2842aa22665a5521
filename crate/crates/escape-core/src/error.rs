//! Error types shared across the crate.

use thiserror::Error;

/// Invalid constructor or configuration input.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParamError {
    /// A scalar or integer parameter violated its documented domain.
    #[error("invalid parameter `{name}`: {reason}")]
    Invalid { name: &'static str, reason: String },

    /// A vector had the wrong length for the problem dimension.
    #[error("dimension mismatch for `{what}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
}

impl ParamError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        ParamError::Invalid {
            name,
            reason: reason.into(),
        }
    }
}

/// Failure inside the Lanczos eigenvalue estimator.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EigsError {
    /// The initial random direction had zero norm twice in a row. With a
    /// working RNG this has probability zero; seeing it means the RNG stream
    /// or the dimension is broken.
    #[error("Lanczos start vector had zero norm twice (dim {dim})")]
    BreakdownAtStart { dim: usize },

    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Failure during an optimizer run.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    /// The objective or gradient became non-finite: the step size is too
    /// large for the region the iterates reached (divergence), or the
    /// problem's reported Lipschitz constants do not hold there.
    #[error("non-finite {what} at iteration {iteration} (divergence)")]
    NonFinite { what: &'static str, iteration: u64 },

    #[error(transparent)]
    Param(#[from] ParamError),

    #[error(transparent)]
    Eigs(#[from] EigsError),
}

/// Invalid input to a statistics routine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("empty sample list")]
    EmptySamples,

    /// The signed-rank test is undefined when every paired difference is
    /// zero: there is no evidence in either direction.
    #[error("all paired differences are zero; signed-rank test undefined")]
    AllZeroDifferences,

    /// Fewer than the minimum number of non-zero differences remain.
    #[error("need at least {needed} non-zero differences, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error(transparent)]
    Param(#[from] ParamError),
}
