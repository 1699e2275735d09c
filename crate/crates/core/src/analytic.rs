//! Closed-form minimum-relative-entropy update for a normal base under
//! mean/covariance views, canonical-coordinate conversions, the
//! uncorrelated-views shortcut, and a fixed-point recursion for views on
//! non-central second moments.
//!
//! Every inverse is applied through a Cholesky factorization of the relevant
//! Gram matrix. Views that would push the update outside the family (an
//! indefinite updated covariance) fail loudly; nothing is projected or
//! clipped.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{CanonicalNormal, MomentViews, NormalParams};

/// Tolerance at which solver postconditions (constraint satisfaction,
/// stationarity) are enforced.
const POST_ATOL: f64 = 1e-10;

/// Solution of the analytic update: the updated distribution plus the
/// Lagrange multipliers that generate it as an exponential tilt of the base.
#[derive(Debug, Clone)]
pub struct NormalMreSolution {
    /// Updated normal distribution.
    pub updated: NormalParams,
    /// Multipliers of the mean views (length k_mu).
    pub theta_mu_info: DVector<f64>,
    /// Multipliers of the second-moment views (k_sigma x k_sigma, symmetric).
    pub theta_sigma_info: DMatrix<f64>,
    /// Optimal first moments of the covariance-view combinations,
    /// `gamma_sigma * updated mean`.
    pub eta_sigma_info: DVector<f64>,
    /// Mean after the covariance views alone (before mean views are applied).
    pub mu_shift: DVector<f64>,
}

/// Options for [`solve_noncentral_fixed_point`].
#[derive(Debug, Clone)]
pub struct FixedPointConfig {
    /// Stop when the sup-norm change of the implied first moments falls below this.
    pub tol: f64,
    /// Iteration budget.
    pub max_iter: usize,
    /// Relaxation factor applied to each update (1 = undamped).
    pub relaxation: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 1000,
            relaxation: 1.0,
        }
    }
}

/// Canonical coordinates of a normal: `theta_mu = cov^-1 mean`,
/// `theta_sigma = -1/2 cov^-1`.
pub fn normal_to_canonical(np: &NormalParams) -> Result<CanonicalNormal> {
    let chol = linalg::cholesky_pd(np.cov(), "cov")?;
    let theta_mu = chol.solve(np.mean());
    let mut theta_sigma = chol.inverse();
    theta_sigma *= -0.5;
    CanonicalNormal::new(theta_mu, linalg::symmetrize(&theta_sigma))
}

/// Moment coordinates from canonical ones: `cov = -1/2 theta_sigma^-1`,
/// `mean = cov * theta_mu`. Fails when `theta_sigma` is not negative
/// definite, i.e. when the coordinates do not describe a proper normal.
pub fn canonical_to_normal(cn: &CanonicalNormal) -> Result<NormalParams> {
    let neg = -cn.theta_sigma();
    let chol = linalg::cholesky_pd(&neg, "-theta_sigma").map_err(|_| Error::NotNegativeDefinite {
        name: "theta_sigma".into(),
    })?;
    let mut cov = chol.inverse();
    cov *= 0.5;
    let cov = linalg::symmetrize(&cov);
    let mean = &cov * cn.theta_mu();
    NormalParams::new(mean, cov)
}

/// Log-partition of the normal family in canonical coordinates:
/// `-1/4 theta_mu' theta_sigma^-1 theta_mu - 1/2 ln det(-2 theta_sigma)`.
pub fn normal_log_partition(cn: &CanonicalNormal) -> Result<f64> {
    let neg = -cn.theta_sigma();
    let chol = linalg::cholesky_pd(&neg, "-theta_sigma").map_err(|_| Error::NotNegativeDefinite {
        name: "theta_sigma".into(),
    })?;
    // theta_sigma^-1 = -neg^-1
    let solved = chol.solve(cn.theta_mu());
    let quad = 0.25 * cn.theta_mu().dot(&solved);
    let ln_det = {
        // ln det(-2 theta_sigma) = ln det(2 * neg)
        let n = cn.dim() as f64;
        n * 2.0_f64.ln() + linalg::ln_det(&chol)
    };
    Ok(quad - 0.5 * ln_det)
}

/// Right pseudo-inverse of `gamma` weighted by `cov`:
/// `gamma_dagger = cov gamma' (gamma cov gamma')^-1`, an n x k matrix with
/// `gamma * gamma_dagger = I_k`.
pub fn sigma_pseudo_inverse(cov: &DMatrix<f64>, gamma: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if gamma.ncols() != cov.nrows() {
        return Err(Error::Dimension(format!(
            "gamma has {} columns, cov is {}x{}",
            gamma.ncols(),
            cov.nrows(),
            cov.ncols()
        )));
    }
    let gram = gamma * cov * gamma.transpose();
    let chol = linalg::cholesky_pd(&gram, "gamma cov gamma'").map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::RankDeficient {
            name: "gamma".into(),
        },
        other => other,
    })?;
    // (gamma cov gamma')^-1 (gamma cov) solved column-block-wise, then transposed.
    let solved = chol.solve(&(gamma * cov));
    Ok(solved.transpose())
}

/// Updated covariance under covariance views:
/// `cov + dagger (sigma2_info - gamma cov gamma') dagger'`. Satisfies
/// `gamma_sigma result gamma_sigma' = sigma2_info` exactly and must stay
/// positive definite.
pub fn updated_covariance(base: &NormalParams, mv: &MomentViews) -> Result<DMatrix<f64>> {
    check_dims(base, mv)?;
    if mv.k_sigma() == 0 {
        return Ok(base.cov().clone());
    }
    let cov = updated_covariance_inner(base.cov(), mv.gamma_sigma(), mv.sigma2_info())?;
    let residual = (mv.gamma_sigma() * &cov * mv.gamma_sigma().transpose()) - mv.sigma2_info();
    if residual.amax() > POST_ATOL {
        return Err(Error::Numerics(format!(
            "covariance views violated by {:.3e}",
            residual.amax()
        )));
    }
    Ok(cov)
}

fn updated_covariance_inner(
    cov: &DMatrix<f64>,
    gamma_sigma: &DMatrix<f64>,
    sigma2_view: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let dagger = sigma_pseudo_inverse(cov, gamma_sigma)?;
    let gap = sigma2_view - gamma_sigma * cov * gamma_sigma.transpose();
    let updated = linalg::symmetrize(&(cov + &dagger * gap * dagger.transpose()));
    linalg::cholesky_pd(&updated, "updated covariance").map_err(|_| {
        Error::Infeasible("covariance views make the updated covariance indefinite".into())
    })?;
    Ok(updated)
}

/// Mean after the covariance views alone:
/// `mean + dagger (sigma2_info (gamma cov gamma')^-1 gamma mean - gamma mean)`.
pub fn mu_shift(base: &NormalParams, mv: &MomentViews) -> Result<DVector<f64>> {
    check_dims(base, mv)?;
    mu_shift_inner(base, mv.gamma_sigma(), mv.sigma2_info())
}

fn mu_shift_inner(
    base: &NormalParams,
    gamma_sigma: &DMatrix<f64>,
    sigma2_view: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if gamma_sigma.nrows() == 0 {
        return Ok(base.mean().clone());
    }
    let gram = gamma_sigma * base.cov() * gamma_sigma.transpose();
    let chol = linalg::cholesky_pd(&gram, "gamma_sigma cov gamma_sigma'")?;
    let gm = gamma_sigma * base.mean();
    let adjusted = sigma2_view * chol.solve(&gm) - &gm;
    let dagger = sigma_pseudo_inverse(base.cov(), gamma_sigma)?;
    let shifted = base.mean() + dagger * adjusted;

    // The combinations gamma_sigma * mu_shift equal sigma2_info (gram)^-1 gamma mean.
    let implied = gamma_sigma * &shifted;
    let expected = sigma2_view * chol.solve(&gm);
    if (implied - expected).amax() > POST_ATOL {
        return Err(Error::Numerics("mu_shift consistency check failed".into()));
    }
    Ok(shifted)
}

/// Updated mean: the covariance-view shift followed by the mean views applied
/// through the pseudo-inverse built from the *updated* covariance. Satisfies
/// `gamma_mu result = mu_info` exactly.
pub fn updated_mean(base: &NormalParams, mv: &MomentViews) -> Result<DVector<f64>> {
    check_dims(base, mv)?;
    let cov_updated = updated_covariance(base, mv)?;
    let shifted = mu_shift(base, mv)?;
    let mean = updated_mean_inner(&cov_updated, &shifted, mv.gamma_mu(), mv.mu_info())?;
    if mv.k_mu() > 0 {
        let residual = mv.gamma_mu() * &mean - mv.mu_info();
        if residual.amax() > POST_ATOL {
            return Err(Error::Numerics(format!(
                "mean views violated by {:.3e}",
                residual.amax()
            )));
        }
    }
    Ok(mean)
}

fn updated_mean_inner(
    cov_updated: &DMatrix<f64>,
    shifted: &DVector<f64>,
    gamma_mu: &DMatrix<f64>,
    mu_view: &DVector<f64>,
) -> Result<DVector<f64>> {
    if gamma_mu.nrows() == 0 {
        return Ok(shifted.clone());
    }
    let dagger = sigma_pseudo_inverse(cov_updated, gamma_mu)?;
    Ok(shifted + dagger * (mu_view - gamma_mu * shifted))
}

/// Full analytic solve under mean/covariance views.
///
/// Returns the updated distribution together with the Lagrange multipliers
/// `theta_mu_info = (gamma_mu cov_up gamma_mu')^-1 (mu_info - gamma_mu mu_shift)`
/// and `theta_sigma_info = 1/2 [(gamma_s cov gamma_s')^-1 - sigma2_info^-1]`.
/// The multipliers of the first-moment combinations of the covariance views
/// vanish at the optimum; this is verified through the canonical-coordinate
/// identity `cov_up^-1 mean_up = cov^-1 mean + gamma_mu' theta_mu_info`.
pub fn solve_moment_views(base: &NormalParams, mv: &MomentViews) -> Result<NormalMreSolution> {
    check_dims(base, mv)?;
    let cov_updated = updated_covariance(base, mv)?;
    let shifted = mu_shift(base, mv)?;
    let mean_updated = updated_mean_inner(&cov_updated, &shifted, mv.gamma_mu(), mv.mu_info())?;

    let theta_mu_info = if mv.k_mu() > 0 {
        let gram = mv.gamma_mu() * &cov_updated * mv.gamma_mu().transpose();
        let chol = linalg::cholesky_pd(&gram, "gamma_mu cov_up gamma_mu'")?;
        chol.solve(&(mv.mu_info() - mv.gamma_mu() * &shifted))
    } else {
        DVector::zeros(0)
    };
    let theta_sigma_info = theta_sigma_block(base.cov(), mv.gamma_sigma(), mv.sigma2_info())?;
    let eta_sigma_info = mv.gamma_sigma() * &mean_updated;

    let solution = NormalMreSolution {
        updated: NormalParams::new(mean_updated, cov_updated)?,
        theta_mu_info,
        theta_sigma_info,
        eta_sigma_info,
        mu_shift: shifted,
    };
    verify_solution(base, mv, &solution)?;
    Ok(solution)
}

fn theta_sigma_block(
    cov: &DMatrix<f64>,
    gamma_sigma: &DMatrix<f64>,
    sigma2_view: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if gamma_sigma.nrows() == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    let gram = gamma_sigma * cov * gamma_sigma.transpose();
    let gram_inv = linalg::cholesky_pd(&gram, "gamma_sigma cov gamma_sigma'")?.inverse();
    let view_inv = linalg::cholesky_pd(sigma2_view, "sigma2_info")?.inverse();
    Ok(linalg::symmetrize(&(0.5 * (gram_inv - view_inv))))
}

fn verify_solution(base: &NormalParams, mv: &MomentViews, sol: &NormalMreSolution) -> Result<()> {
    // Constraint satisfaction.
    if mv.k_mu() > 0 {
        let r = mv.gamma_mu() * sol.updated.mean() - mv.mu_info();
        if r.amax() > POST_ATOL {
            return Err(Error::Numerics(format!("mean views violated by {:.3e}", r.amax())));
        }
    }
    if mv.k_sigma() > 0 {
        let r = mv.gamma_sigma() * sol.updated.cov() * mv.gamma_sigma().transpose() - mv.sigma2_info();
        if r.amax() > POST_ATOL {
            return Err(Error::Numerics(format!(
                "covariance views violated by {:.3e}",
                r.amax()
            )));
        }
    }
    // Stationarity in canonical coordinates: the tilt of the mean block uses
    // the mean-view rows only. Scale-aware tolerance: the coordinates are
    // products of inverse covariances and can be large.
    let base_chol = linalg::cholesky_pd(base.cov(), "cov")?;
    let up_chol = linalg::cholesky_pd(sol.updated.cov(), "updated covariance")?;
    let lhs = up_chol.solve(sol.updated.mean());
    let mut rhs = base_chol.solve(base.mean());
    if mv.k_mu() > 0 {
        rhs += mv.gamma_mu().transpose() * &sol.theta_mu_info;
    }
    let scale = lhs.amax().max(rhs.amax()).max(1.0);
    if (lhs - rhs).amax() > POST_ATOL * scale {
        return Err(Error::Numerics(
            "stationarity of the covariance-view multipliers failed".into(),
        ));
    }
    Ok(())
}

/// Shortcut valid when the mean-view and covariance-view combinations are
/// uncorrelated under the base (`gamma_mu cov gamma_sigma' = 0`). The mean
/// update then uses the pseudo-inverse built from the *base* covariance plus
/// the correction induced by the covariance views; the result coincides with
/// [`solve_moment_views`].
pub fn solve_uncorrelated(base: &NormalParams, mv: &MomentViews) -> Result<NormalMreSolution> {
    check_dims(base, mv)?;
    if mv.k_mu() > 0 && mv.k_sigma() > 0 {
        let cross = mv.gamma_mu() * base.cov() * mv.gamma_sigma().transpose();
        if cross.amax() > 1e-10 {
            return Err(Error::Parameter(format!(
                "view combinations are correlated under the base (|cross| = {:.3e})",
                cross.amax()
            )));
        }
    }
    let cov_updated = updated_covariance(base, mv)?;
    let shifted = mu_shift(base, mv)?;

    let (mean_updated, theta_mu_info) = if mv.k_mu() > 0 {
        let dagger = sigma_pseudo_inverse(base.cov(), mv.gamma_mu())?;
        let gap = mv.mu_info() - mv.gamma_mu() * base.mean();
        let mean = &shifted + dagger * &gap;
        let gram = mv.gamma_mu() * base.cov() * mv.gamma_mu().transpose();
        let theta = linalg::cholesky_pd(&gram, "gamma_mu cov gamma_mu'")?.solve(&gap);
        (mean, theta)
    } else {
        (shifted.clone(), DVector::zeros(0))
    };

    let theta_sigma_info = theta_sigma_block(base.cov(), mv.gamma_sigma(), mv.sigma2_info())?;
    let eta_sigma_info = mv.gamma_sigma() * &mean_updated;
    let solution = NormalMreSolution {
        updated: NormalParams::new(mean_updated, cov_updated)?,
        theta_mu_info,
        theta_sigma_info,
        eta_sigma_info,
        mu_shift: shifted,
    };
    verify_solution(base, mv, &solution)?;
    Ok(solution)
}

/// Analytic solve under views on non-central moments:
/// `E[gamma_mu X] = eta_mu` and `E[gamma_sigma X X' gamma_sigma'] = eta_sigma_sigma`.
///
/// The first moments of the second-moment combinations are only implicit, so
/// they are found by the recursion `eta_sigma <- gamma_sigma * mean(eta_sigma)`.
/// When the rows of `gamma_sigma` lie in the row space of `gamma_mu` the
/// implied moments are deducible up front and the recursion finishes in one
/// iteration.
pub fn solve_noncentral_fixed_point(
    base: &NormalParams,
    gamma_mu: &DMatrix<f64>,
    eta_mu: &DVector<f64>,
    gamma_sigma: &DMatrix<f64>,
    eta_sigma_sigma: &DMatrix<f64>,
    config: &FixedPointConfig,
) -> Result<NormalMreSolution> {
    let n = base.dim();
    let k_mu = gamma_mu.nrows();
    let k_sigma = gamma_sigma.nrows();
    if k_sigma == 0 {
        return Err(Error::Parameter(
            "non-central solve requires at least one second-moment view".into(),
        ));
    }
    if gamma_sigma.ncols() != n || (k_mu > 0 && gamma_mu.ncols() != n) {
        return Err(Error::Dimension("view matrices do not match the base dimension".into()));
    }
    if eta_mu.len() != k_mu {
        return Err(Error::Dimension(format!(
            "eta_mu has length {}, expected {k_mu}",
            eta_mu.len()
        )));
    }
    if eta_sigma_sigma.nrows() != k_sigma || eta_sigma_sigma.ncols() != k_sigma {
        return Err(Error::Dimension("eta_sigma_sigma must be k_sigma x k_sigma".into()));
    }
    if !linalg::is_symmetric(eta_sigma_sigma, linalg::SYMMETRY_RTOL) {
        return Err(Error::NotSymmetric {
            name: "eta_sigma_sigma".into(),
        });
    }
    if config.tol <= 0.0 || config.max_iter == 0 || config.relaxation <= 0.0 || config.relaxation > 1.0 {
        return Err(Error::Parameter("invalid fixed-point configuration".into()));
    }
    if !(k_mu == 0 || linalg::has_full_row_rank(gamma_mu)) || !linalg::has_full_row_rank(gamma_sigma) {
        return Err(Error::RankDeficient {
            name: "gamma_mu/gamma_sigma".into(),
        });
    }

    // When gamma_sigma = A gamma_mu the implied moments are A eta_mu exactly.
    let mut eta_sigma = initial_eta_sigma(base, gamma_mu, eta_mu, gamma_sigma)?;
    let mut last_delta = f64::INFINITY;

    for _ in 0..config.max_iter {
        let sigma2_view = implied_sigma2(eta_sigma_sigma, &eta_sigma)?;
        let (cov_updated, shifted, mean_updated) =
            solve_at(base, gamma_mu, eta_mu, gamma_sigma, &sigma2_view)?;
        let eta_next = gamma_sigma * &mean_updated;
        last_delta = (&eta_next - &eta_sigma).amax();
        if last_delta < config.tol {
            let theta_mu_info = if k_mu > 0 {
                let gram = gamma_mu * &cov_updated * gamma_mu.transpose();
                linalg::cholesky_pd(&gram, "gamma_mu cov_up gamma_mu'")?
                    .solve(&(eta_mu - gamma_mu * &shifted))
            } else {
                DVector::zeros(0)
            };
            let theta_sigma_info = theta_sigma_block(base.cov(), gamma_sigma, &sigma2_view)?;

            // Residuals of the stated constraints.
            if k_mu > 0 {
                let r = gamma_mu * &mean_updated - eta_mu;
                if r.amax() > 1e-8 {
                    return Err(Error::Numerics(format!(
                        "first-moment residual {:.3e} after convergence",
                        r.amax()
                    )));
                }
            }
            let second = gamma_sigma * (&cov_updated + &mean_updated * mean_updated.transpose())
                * gamma_sigma.transpose();
            let r2 = (&second - eta_sigma_sigma).amax();
            if r2 > 1e-8 {
                return Err(Error::Numerics(format!(
                    "second-moment residual {r2:.3e} after convergence"
                )));
            }

            return Ok(NormalMreSolution {
                eta_sigma_info: gamma_sigma * &mean_updated,
                updated: NormalParams::new(mean_updated, cov_updated)?,
                theta_mu_info,
                theta_sigma_info,
                mu_shift: shifted,
            });
        }
        eta_sigma += config.relaxation * (eta_next - &eta_sigma);
    }

    Err(Error::FixedPointNoConvergence {
        iterations: config.max_iter,
        last_delta,
    })
}

fn initial_eta_sigma(
    base: &NormalParams,
    gamma_mu: &DMatrix<f64>,
    eta_mu: &DVector<f64>,
    gamma_sigma: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let k_mu = gamma_mu.nrows();
    if k_mu > 0 {
        let stacked = {
            let mut s = DMatrix::zeros(k_mu + gamma_sigma.nrows(), gamma_mu.ncols());
            s.rows_mut(0, k_mu).copy_from(gamma_mu);
            s.rows_mut(k_mu, gamma_sigma.nrows()).copy_from(gamma_sigma);
            s
        };
        let scale = stacked.amax();
        if linalg::rank(&stacked, scale) == linalg::rank(gamma_mu, scale) {
            // gamma_sigma = A gamma_mu with A = gamma_sigma gamma_mu' (gamma_mu gamma_mu')^-1
            let gram = gamma_mu * gamma_mu.transpose();
            let chol = linalg::cholesky_pd(&gram, "gamma_mu gamma_mu'")?;
            let a = chol.solve(&(gamma_mu * gamma_sigma.transpose())).transpose();
            return Ok(a * eta_mu);
        }
    }
    Ok(gamma_sigma * base.mean())
}

fn implied_sigma2(eta_sigma_sigma: &DMatrix<f64>, eta_sigma: &DVector<f64>) -> Result<DMatrix<f64>> {
    let outer = eta_sigma * eta_sigma.transpose();
    let sigma2 = linalg::symmetrize(&(eta_sigma_sigma - outer));
    linalg::cholesky_pd(&sigma2, "eta_sigma_sigma - eta eta'").map_err(|_| {
        Error::Infeasible(
            "implied covariance of the second-moment views lost positive definiteness".into(),
        )
    })?;
    Ok(sigma2)
}

fn solve_at(
    base: &NormalParams,
    gamma_mu: &DMatrix<f64>,
    eta_mu: &DVector<f64>,
    gamma_sigma: &DMatrix<f64>,
    sigma2_view: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, DVector<f64>)> {
    let cov_updated = updated_covariance_inner(base.cov(), gamma_sigma, sigma2_view)?;
    let shifted = mu_shift_inner(base, gamma_sigma, sigma2_view)?;
    let mean_updated = updated_mean_inner(&cov_updated, &shifted, gamma_mu, eta_mu)?;
    Ok((cov_updated, shifted, mean_updated))
}

fn check_dims(base: &NormalParams, mv: &MomentViews) -> Result<()> {
    if mv.dim() != base.dim() {
        return Err(Error::Dimension(format!(
            "views are on {} variables, base has {}",
            mv.dim(),
            base.dim()
        )));
    }
    Ok(())
}
