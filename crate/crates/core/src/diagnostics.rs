//! Distribution-agnostic diagnostics: discrete and Gaussian relative entropy,
//! the effective number of scenarios, and view residuals.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{ExpectationViews, NormalParams, WeightedScenarios};

fn check_pair(p_bar: &DVector<f64>, p: &DVector<f64>) -> Result<()> {
    if p_bar.len() != p.len() {
        return Err(Error::Dimension(format!(
            "probability vectors have lengths {} and {}",
            p_bar.len(),
            p.len()
        )));
    }
    if let Some(bad) = p.iter().find(|v| !(**v > 0.0)) {
        return Err(Error::Probability(format!(
            "base probabilities must be strictly positive, found {bad}"
        )));
    }
    if p_bar.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Probability(
            "updated probabilities must be finite and non-negative".into(),
        ));
    }
    let sum = linalg::kahan_sum(p_bar.iter().copied());
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::Probability(format!(
            "updated probabilities sum to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Discrete relative entropy `sum_j p_bar_j ln(p_bar_j / p_j)`.
///
/// Zero entries of `p_bar` contribute zero (the limit convention
/// `0 ln 0 = 0`), so probabilities that underflow do not poison the
/// diagnostics. The result is clamped at zero to absorb rounding noise; it is
/// zero exactly when the two vectors coincide.
pub fn relative_entropy_discrete(p_bar: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    check_pair(p_bar, p)?;
    let sum = linalg::kahan_sum(
        p_bar
            .iter()
            .zip(p.iter())
            .map(|(&pb, &pj)| if pb == 0.0 { 0.0 } else { pb * (pb / pj).ln() }),
    );
    Ok(sum.max(0.0))
}

/// Effective number of scenarios `exp(-relative_entropy_discrete(p_bar, p))`,
/// normalized to (0, 1]. Equals 1 exactly when `p_bar = p`.
pub fn ens(p_bar: &DVector<f64>, p: &DVector<f64>) -> Result<f64> {
    Ok((-relative_entropy_discrete(p_bar, p)?).exp())
}

/// Closed-form relative entropy between two multivariate normals,
/// `E(n1 || n0) = 1/2 [tr(S0^-1 S1) + (m0 - m1)' S0^-1 (m0 - m1) - n + ln det S0 / det S1]`.
pub fn relative_entropy_normal(n1: &NormalParams, n0: &NormalParams) -> Result<f64> {
    let n = n1.dim();
    if n0.dim() != n {
        return Err(Error::Dimension(format!(
            "distributions have dimensions {n} and {}",
            n0.dim()
        )));
    }
    let chol0 = linalg::cholesky_pd(n0.cov(), "n0.cov")?;
    let chol1 = linalg::cholesky_pd(n1.cov(), "n1.cov")?;
    let trace = chol0.solve(n1.cov()).trace();
    let d = n0.mean() - n1.mean();
    let quad = d.dot(&chol0.solve(&d));
    let ln_det_ratio = linalg::ln_det(&chol0) - linalg::ln_det(&chol1);
    Ok(0.5 * (trace + quad - n as f64 + ln_det_ratio))
}

/// Constraint residual `sum_j p_j zeta(x_j) - targets`; all zeros means the
/// views hold exactly under the scenario probabilities.
pub fn view_residual(ws: &WeightedScenarios, views: &ExpectationViews) -> Result<DVector<f64>> {
    let features = views.feature_matrix(ws.scenarios())?;
    Ok(features.transpose() * ws.probs() - views.targets())
}
