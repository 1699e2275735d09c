//! Minimum-relative-entropy (MRE) inference for normal and Monte Carlo
//! distributions.
//!
//! Given a base distribution and partial information expressed as
//! expectation-type constraints ("views"), the updated distribution is the
//! one closest to the base in relative entropy among all distributions
//! satisfying the views — always an exponential tilt of the base. This crate
//! provides:
//!
//! - [`analytic`]: closed-form updates when the base is multivariate normal
//!   and the views constrain linear combinations of means and covariances,
//!   including canonical-coordinate conversions, the uncorrelated-views
//!   shortcut, and a fixed-point recursion for non-central-moment views.
//! - [`pooling`]: discrete MRE ("entropy pooling") that reweights a fixed
//!   scenario set to satisfy the views exactly, via damped Newton on the
//!   convex dual.
//! - [`hmc`]: a Hamiltonian Monte Carlo sampler for unnormalized densities.
//! - [`iterative`]: the iterative solver for general bases known up to a
//!   constant, alternating HMC resampling with entropy pooling until the
//!   effective number of scenarios stabilizes near one.
//! - [`diagnostics`]: relative entropy (discrete and Gaussian), effective
//!   number of scenarios, and view residuals.
//!
//! All quantities are stored in plain decimal units (10% as `0.10`).
//!
//! ```
//! use mre_core::prelude::*;
//! use nalgebra::{DMatrix, DVector};
//!
//! // Tilt a uniform three-point distribution to a mean of 1.5.
//! let scenarios =
//!     WeightedScenarios::uniform(DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0])).unwrap();
//! let views = ExpectationViews::linear(
//!     DMatrix::from_row_slice(1, 1, &[1.0]),
//!     DVector::from_vec(vec![1.5]),
//! )
//! .unwrap();
//! let pooled = entropy_pool(&scenarios, &views, &PoolConfig::default()).unwrap();
//! assert!(pooled.residual_norm <= 1e-8);
//! ```

pub mod analytic;
pub mod case_study;
pub mod diagnostics;
pub mod error;
pub mod hmc;
pub mod iterative;
mod linalg;
pub mod pooling;
pub mod types;
pub mod views;

pub use error::{Error, Result};

/// Convenient re-exports of the main types and operations.
pub mod prelude {
    pub use crate::analytic::{
        canonical_to_normal, mu_shift, normal_log_partition, normal_to_canonical,
        sigma_pseudo_inverse, solve_moment_views, solve_noncentral_fixed_point,
        solve_uncorrelated, updated_covariance, updated_mean, FixedPointConfig, NormalMreSolution,
    };
    pub use crate::diagnostics::{
        ens, relative_entropy_discrete, relative_entropy_normal, view_residual,
    };
    pub use crate::error::{Error, Result};
    pub use crate::hmc::{leapfrog, sample, HmcConfig, HmcRun};
    pub use crate::iterative::{
        converged, run, update_numerator, IterativeConfig, IterativeResult, StepMoments,
    };
    pub use crate::pooling::{
        dual_gradient, dual_hessian, dual_objective, entropy_pool, is_feasible,
        tilt_probabilities, PoolConfig, PoolingResult,
    };
    pub use crate::types::{
        CanonicalNormal, ExpectationViews, IterationStep, IterationTrace, LogNumerator,
        MomentViews, NormalParams, TiltedDensity, WeightedScenarios,
    };
    pub use crate::views::expand_moment_views;
}
