//! Built-in seven-variable example: a homogeneous normal base (10% means,
//! 20% volatilities, 70% correlations) with a mean view on the third variable
//! and a -80% correlation view between the first two, re-expressed as
//! mean/covariance views under the convention that the views leave the first
//! and second moments of the first two variables unchanged.
//!
//! Used by the `case-study` CLI command and by the acceptance suite to
//! exercise both the analytic and the iterative solution paths on identical
//! inputs.

use nalgebra::{DMatrix, DVector};

use crate::types::{MomentViews, NormalParams};

pub const DIM: usize = 7;

/// The base distribution: mean 10%, volatility 20%, correlation 70%.
pub fn base() -> NormalParams {
    let mean = DVector::from_element(DIM, 0.10);
    let std = DVector::from_element(DIM, 0.20);
    let corr = DMatrix::from_fn(DIM, DIM, |i, j| if i == j { 1.0 } else { 0.70 });
    NormalParams::from_std_corr(mean, std, corr).expect("built-in base is well formed")
}

/// The views: E[X1] = E[X2] = 10%, E[X3] = 35%, Sd[X1] = Sd[X2] = 20%,
/// Corr[X1, X2] = -80%.
pub fn views() -> MomentViews {
    let mut gamma_mu = DMatrix::zeros(3, DIM);
    gamma_mu[(0, 0)] = 1.0;
    gamma_mu[(1, 1)] = 1.0;
    gamma_mu[(2, 2)] = 1.0;
    let mu_info = DVector::from_vec(vec![0.10, 0.10, 0.35]);

    let mut gamma_sigma = DMatrix::zeros(2, DIM);
    gamma_sigma[(0, 0)] = 1.0;
    gamma_sigma[(1, 1)] = 1.0;
    let var = 0.20 * 0.20;
    let sigma2_info = DMatrix::from_row_slice(2, 2, &[var, -0.80 * var, -0.80 * var, var]);

    MomentViews::new(gamma_mu, mu_info, gamma_sigma, sigma2_info)
        .expect("built-in views are well formed")
}
