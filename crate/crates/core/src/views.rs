//! Expansion of mean/covariance views into expectation views.
//!
//! Covariance statements are not expectation statements, so the numerical
//! pipeline rewrites `Cov[gamma_sigma X] = sigma2_info` through the first and
//! second non-central moments of `Y = gamma_sigma X`, pinning `E[Y]` to its
//! value under the base mean. Only the upper triangle of `E[Y Y']` is
//! emitted: the symmetric duplicates would make the dual Hessian singular.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::{ExpectationViews, MomentViews};

/// Indices `(i, j)` with `i <= j` of a `k x k` matrix, row-major.
fn upper_pairs(k: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(k * (k + 1) / 2);
    for i in 0..k {
        for j in i..k {
            pairs.push((i, j));
        }
    }
    pairs
}

/// Rewrite [`MomentViews`] as expectation constraints.
///
/// The feature map is `zeta(x) = (gamma_mu x, gamma_sigma x, upper(y y'))`
/// with `y = gamma_sigma x`, and the targets are
/// `(mu_info, gamma_sigma m, upper(sigma2_info + (gamma_sigma m)(gamma_sigma m)'))`
/// where `m` is the supplied base mean. The Jacobian is analytic.
pub fn expand_moment_views(mv: &MomentViews, base_mean: &DVector<f64>) -> Result<ExpectationViews> {
    let n = mv.dim();
    if base_mean.len() != n {
        return Err(Error::Dimension(format!(
            "base mean has length {}, views expect {n}",
            base_mean.len()
        )));
    }
    let k_mu = mv.k_mu();
    let k_sigma = mv.k_sigma();
    let pairs = upper_pairs(k_sigma);
    let k_total = k_mu + k_sigma + pairs.len();

    let mut targets = DVector::zeros(k_total);
    targets.rows_mut(0, k_mu).copy_from(mv.mu_info());
    if k_sigma > 0 {
        let eta = mv.gamma_sigma() * base_mean;
        targets.rows_mut(k_mu, k_sigma).copy_from(&eta);
        for (idx, &(i, j)) in pairs.iter().enumerate() {
            targets[k_mu + k_sigma + idx] = mv.sigma2_info()[(i, j)] + eta[i] * eta[j];
        }
    }

    let gamma_mu = mv.gamma_mu().clone();
    let gamma_sigma = mv.gamma_sigma().clone();
    let pairs_f = pairs.clone();
    let feature_map = move |x: &DVector<f64>| {
        let mut z = DVector::zeros(k_total);
        if k_mu > 0 {
            z.rows_mut(0, k_mu).copy_from(&(&gamma_mu * x));
        }
        if k_sigma > 0 {
            let y = &gamma_sigma * x;
            z.rows_mut(k_mu, k_sigma).copy_from(&y);
            for (idx, &(i, j)) in pairs_f.iter().enumerate() {
                z[k_mu + k_sigma + idx] = y[i] * y[j];
            }
        }
        z
    };

    let gamma_mu_j = mv.gamma_mu().clone();
    let gamma_sigma_j = mv.gamma_sigma().clone();
    let jacobian = move |x: &DVector<f64>| {
        let mut jac = DMatrix::zeros(k_total, n);
        if k_mu > 0 {
            jac.rows_mut(0, k_mu).copy_from(&gamma_mu_j);
        }
        if k_sigma > 0 {
            jac.rows_mut(k_mu, k_sigma).copy_from(&gamma_sigma_j);
            let y = &gamma_sigma_j * x;
            for (idx, &(i, j)) in pairs.iter().enumerate() {
                // d(y_i y_j)/dx = y_i * row_j + y_j * row_i
                for c in 0..n {
                    jac[(k_mu + k_sigma + idx, c)] =
                        y[i] * gamma_sigma_j[(j, c)] + y[j] * gamma_sigma_j[(i, c)];
                }
            }
        }
        jac
    };

    ExpectationViews::with_jacobian(targets, feature_map, jacobian)
}
