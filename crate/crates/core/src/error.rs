//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible shapes between inputs (lengths, row/column counts).
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A matrix required to be symmetric is not, beyond tolerance.
    #[error("matrix `{name}` is not symmetric")]
    NotSymmetric { name: String },

    /// A matrix required to be positive definite failed its Cholesky factorization.
    #[error("matrix `{name}` is not positive definite")]
    NotPositiveDefinite { name: String },

    /// A natural-parameter matrix left the admissible domain (must be negative definite).
    #[error("matrix `{name}` is not negative definite")]
    NotNegativeDefinite { name: String },

    /// A constraint matrix does not have full row rank.
    #[error("matrix `{name}` is rank deficient")]
    RankDeficient { name: String },

    /// A probability vector violates positivity or normalization.
    #[error("invalid probability vector: {0}")]
    Probability(String),

    /// A scalar or structural parameter is out of its admissible range.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A non-finite value surfaced where a finite one is required.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A leapfrog trajectory produced non-finite state; the proposal must be rejected.
    #[error("divergent leapfrog trajectory")]
    DivergentTrajectory,

    /// The requested constraints cannot be met by any admissible distribution.
    #[error("infeasible views: {0}")]
    Infeasible(String),

    /// The entropy-pooling Newton solver exhausted its iteration budget.
    #[error(
        "entropy pooling did not converge after {iterations} iterations \
         (gradient norm {gradient_norm:.3e}, multiplier norm {theta_norm:.3e})"
    )]
    PoolNoConvergence {
        iterations: usize,
        gradient_norm: f64,
        theta_norm: f64,
    },

    /// The fixed-point recursion for implicit second-moment targets stalled.
    #[error("fixed-point recursion did not converge after {iterations} iterations (last step {last_delta:.3e})")]
    FixedPointNoConvergence { iterations: usize, last_delta: f64 },

    /// The sampler's acceptance rate collapsed during burn-in.
    #[error("HMC tuning failure: acceptance rate {acceptance_rate:.4} over burn-in")]
    HmcTuning { acceptance_rate: f64 },

    /// A failure inside one outer step of the iterative solver.
    #[error("iterative solver failed at outer step {step}: {source}")]
    IterativeStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    /// A computed result violated a numerical postcondition.
    #[error("numerical postcondition violated: {0}")]
    Numerics(String),
}

pub type Result<T> = std::result::Result<T, Error>;
