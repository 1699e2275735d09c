//! Discrete minimum-relative-entropy update of scenario probabilities
//! ("entropy pooling"): minimize the convex dual of the constrained problem
//! for the Lagrange multipliers, then tilt the probabilities exponentially.
//!
//! The dual is `psi(theta) - theta' targets` with
//! `psi(theta) = ln sum_j p_j exp(theta' zeta_j)`; its gradient is the tilted
//! feature mean minus the targets and its Hessian the tilted feature
//! covariance, so a damped Newton iteration converges quadratically at the
//! small view counts typical here.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics;
use crate::error::{Error, Result};
use crate::linalg;
use crate::types::{ExpectationViews, WeightedScenarios};

/// Newton solver options for [`entropy_pool`].
#[derive(Debug, Clone)]
pub struct PoolConfig {
    /// Sup-norm gradient tolerance.
    pub tol: f64,
    /// Newton iteration budget.
    pub max_iter: usize,
    /// Multiplier magnitude treated as divergence (infeasible targets).
    pub theta_cap: f64,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iter: 200,
            theta_cap: 1e3,
        }
    }
}

/// Outcome of a pooling solve.
#[derive(Debug, Clone)]
pub struct PoolingResult {
    /// Updated probabilities (strictly positive, summing to one).
    pub probs_updated: DVector<f64>,
    /// Lagrange multipliers of the views.
    pub theta_hat: DVector<f64>,
    /// Effective number of scenarios of the update, in (0, 1].
    pub ens_value: f64,
    /// Sup-norm of the view residual under the updated probabilities.
    pub residual_norm: f64,
    /// Newton iterations consumed.
    pub iterations: usize,
}

/// Exponential tilt `p_j exp(theta' zeta_j)`, renormalized. Computed with
/// max-subtraction so large scores cannot overflow; the output is strictly
/// positive and sums to one.
pub fn tilt_probabilities(
    p: &DVector<f64>,
    features: &DMatrix<f64>,
    theta: &DVector<f64>,
) -> Result<DVector<f64>> {
    let j = p.len();
    if features.nrows() != j {
        return Err(Error::Dimension(format!(
            "{} feature rows for {j} probabilities",
            features.nrows()
        )));
    }
    if features.ncols() != theta.len() {
        return Err(Error::Dimension(format!(
            "{} feature columns for {} multipliers",
            features.ncols(),
            theta.len()
        )));
    }
    if !features.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("features".into()));
    }
    if p.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Probability("base probabilities must be strictly positive".into()));
    }
    let scores = log_scores(p, features, theta);
    Ok(normalize_scores(&scores))
}

/// `ln p_j + theta' zeta_j` for every scenario.
fn log_scores(p: &DVector<f64>, features: &DMatrix<f64>, theta: &DVector<f64>) -> DVector<f64> {
    let mut scores = features * theta;
    for (s, pj) in scores.iter_mut().zip(p.iter()) {
        *s += pj.ln();
    }
    scores
}

fn normalize_scores(scores: &DVector<f64>) -> DVector<f64> {
    let m = scores.max();
    let mut w = scores.map(|s| (s - m).exp());
    let z = w.sum();
    w /= z;
    w
}

/// `ln sum_j exp(scores_j)` with max-subtraction.
fn log_sum_exp(scores: &DVector<f64>) -> f64 {
    let m = scores.max();
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// Dual objective `psi(theta) - theta' targets`; convex in `theta` and zero
/// at `theta = 0` when the targets vanish (since `psi(0) = 0`).
pub fn dual_objective(theta: &DVector<f64>, ws: &WeightedScenarios, views: &ExpectationViews) -> Result<f64> {
    let features = views.feature_matrix(ws.scenarios())?;
    check_theta(theta, &features)?;
    Ok(dual_objective_inner(theta, ws.probs(), &features, views.targets()))
}

fn dual_objective_inner(
    theta: &DVector<f64>,
    p: &DVector<f64>,
    features: &DMatrix<f64>,
    targets: &DVector<f64>,
) -> f64 {
    let scores = log_scores(p, features, theta);
    log_sum_exp(&scores) - theta.dot(targets)
}

/// Gradient of the dual: tilted feature mean minus targets. Coincides with
/// the view residual under the tilted probabilities.
pub fn dual_gradient(theta: &DVector<f64>, ws: &WeightedScenarios, views: &ExpectationViews) -> Result<DVector<f64>> {
    let features = views.feature_matrix(ws.scenarios())?;
    check_theta(theta, &features)?;
    let p_bar = tilt_probabilities(ws.probs(), &features, theta)?;
    Ok(features.transpose() * p_bar - views.targets())
}

/// Hessian of the dual: the feature covariance under the tilted
/// probabilities. Symmetric positive semidefinite.
pub fn dual_hessian(theta: &DVector<f64>, ws: &WeightedScenarios, views: &ExpectationViews) -> Result<DMatrix<f64>> {
    let features = views.feature_matrix(ws.scenarios())?;
    check_theta(theta, &features)?;
    let p_bar = tilt_probabilities(ws.probs(), &features, theta)?;
    Ok(linalg::weighted_row_cov(&features, &p_bar))
}

fn check_theta(theta: &DVector<f64>, features: &DMatrix<f64>) -> Result<()> {
    if theta.len() != features.ncols() {
        return Err(Error::Dimension(format!(
            "theta has length {}, features have {} columns",
            theta.len(),
            features.ncols()
        )));
    }
    if !theta.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("theta".into()));
    }
    Ok(())
}

/// Solve the discrete minimum-relative-entropy problem: find multipliers
/// `theta_hat` so the tilted probabilities satisfy the views exactly, by
/// damped Newton descent on the dual from `theta = 0`.
///
/// Near-singular Hessians are regularized Levenberg-style and steps are
/// backtracked on the objective. Targets outside the convex hull of the
/// features make the multipliers diverge; crossing `config.theta_cap` is
/// reported as infeasibility. [`is_feasible`] offers an exact hull pre-check.
pub fn entropy_pool(
    ws: &WeightedScenarios,
    views: &ExpectationViews,
    config: &PoolConfig,
) -> Result<PoolingResult> {
    if config.tol <= 0.0 || config.max_iter == 0 || config.theta_cap <= 0.0 {
        return Err(Error::Parameter("invalid pooling configuration".into()));
    }
    let features = views.feature_matrix(ws.scenarios())?;
    let p = ws.probs();
    let targets = views.targets();
    let k = views.n_views();

    let mut theta = DVector::zeros(k);
    let mut objective = dual_objective_inner(&theta, p, &features, targets);
    let mut iterations = 0;

    loop {
        let p_bar = tilt_probabilities(p, &features, &theta)?;
        let gradient = features.transpose() * &p_bar - targets;
        let grad_norm = gradient.amax();
        if grad_norm < config.tol {
            let residual_norm = grad_norm;
            let ens_value = diagnostics::ens(&p_bar, p)?;
            return Ok(PoolingResult {
                probs_updated: p_bar,
                theta_hat: theta,
                ens_value,
                residual_norm,
                iterations,
            });
        }
        if iterations >= config.max_iter {
            return Err(Error::PoolNoConvergence {
                iterations,
                gradient_norm: grad_norm,
                theta_norm: theta.amax(),
            });
        }
        iterations += 1;

        let hessian = linalg::weighted_row_cov(&features, &p_bar);
        let direction = newton_direction(&hessian, &gradient)?;

        // Backtracking Armijo line search on the dual objective. The slack
        // term keeps full Newton steps acceptable once the per-step decrease
        // drops below floating-point resolution of the objective.
        let slope = gradient.dot(&direction);
        let slack = 1e-12 * objective.abs().max(1.0);
        let mut step = 1.0;
        let mut candidate;
        let mut candidate_obj;
        loop {
            candidate = &theta + step * &direction;
            candidate_obj = dual_objective_inner(&candidate, p, &features, targets);
            if candidate_obj.is_finite() && candidate_obj <= objective + 1e-4 * step * slope + slack {
                break;
            }
            step *= 0.5;
            if step < 1e-12 {
                // The objective cannot decrease along the Newton direction;
                // treat as numerical stagnation.
                return Err(Error::PoolNoConvergence {
                    iterations,
                    gradient_norm: grad_norm,
                    theta_norm: theta.amax(),
                });
            }
        }
        theta = candidate;
        objective = candidate_obj;

        if theta.amax() > config.theta_cap {
            return Err(Error::Infeasible(format!(
                "multipliers diverged past {:.1e} (gradient norm {:.3e}); \
                 targets likely outside the feature hull",
                config.theta_cap, grad_norm
            )));
        }
    }
}

/// Newton direction `-(H + lambda I)^-1 g` with a Levenberg-style ramp on
/// `lambda` when the Hessian is near-singular.
fn newton_direction(hessian: &DMatrix<f64>, gradient: &DVector<f64>) -> Result<DVector<f64>> {
    let k = hessian.nrows();
    let scale = hessian.diagonal().amax().max(1e-300);
    let mut lambda = 0.0;
    for _ in 0..60 {
        let mut damped = hessian.clone();
        for i in 0..k {
            damped[(i, i)] += lambda;
        }
        if let Some(chol) = nalgebra::Cholesky::new(damped) {
            let d = -chol.solve(gradient);
            if d.iter().all(|v| v.is_finite()) {
                return Ok(d);
            }
        }
        lambda = if lambda == 0.0 { 1e-12 * scale } else { lambda * 10.0 };
    }
    Err(Error::Numerics("dual Hessian could not be regularized".into()))
}

/// Exact convex-hull pre-check: `true` when some probability vector over the
/// scenarios reproduces the targets (a phase-1 simplex feasibility solve).
///
/// Membership on the hull boundary also returns `true`, although the strictly
/// positive solution [`entropy_pool`] needs would not exist there.
pub fn is_feasible(ws: &WeightedScenarios, views: &ExpectationViews) -> Result<bool> {
    let features = views.feature_matrix(ws.scenarios())?;
    Ok(feasible_point(&features, views.targets()).is_some())
}

/// Phase-1 simplex: find `q >= 0` with `sum q = 1` and `F' q = targets`,
/// or report that none exists. Bland's rule keeps the pivoting cycle-free.
pub(crate) fn feasible_point(features: &DMatrix<f64>, targets: &DVector<f64>) -> Option<DVector<f64>> {
    let j = features.nrows();
    let k = features.ncols();
    let m = k + 1;

    // Equality system A q = b over q >= 0, with artificials to start.
    let mut a = DMatrix::zeros(m, j + m);
    let mut b = DVector::zeros(m);
    for r in 0..k {
        for c in 0..j {
            a[(r, c)] = features[(c, r)];
        }
        b[r] = targets[r];
    }
    for c in 0..j {
        a[(k, c)] = 1.0;
    }
    b[k] = 1.0;
    for r in 0..m {
        if b[r] < 0.0 {
            for c in 0..j {
                a[(r, c)] = -a[(r, c)];
            }
            b[r] = -b[r];
        }
        a[(r, j + r)] = 1.0;
    }

    // Minimize the sum of artificial variables.
    let mut basis: Vec<usize> = (j..j + m).collect();
    let mut tableau = a;
    let mut rhs = b;
    let scale = tableau.amax().max(1.0);
    let eps = 1e-11 * scale;

    for _ in 0..(20 * (j + m) * (j + m)) {
        // Reduced costs of the phase-1 objective (cost 1 on artificials).
        let mut entering = None;
        for col in 0..j + m {
            if basis.contains(&col) {
                continue;
            }
            let cost = if col >= j { 1.0 } else { 0.0 };
            let mut reduced = cost;
            for (row, &bc) in basis.iter().enumerate() {
                let basic_cost = if bc >= j { 1.0 } else { 0.0 };
                reduced -= basic_cost * tableau[(row, col)];
            }
            if reduced < -eps {
                entering = Some(col);
                break; // Bland: smallest index
            }
        }
        let Some(col) = entering else { break };

        // Ratio test, Bland tie-break on the leaving basic index.
        let mut leaving: Option<(usize, f64)> = None;
        for row in 0..m {
            let t = tableau[(row, col)];
            if t > eps {
                let ratio = rhs[row] / t;
                match leaving {
                    None => leaving = Some((row, ratio)),
                    Some((lrow, lratio)) => {
                        if ratio < lratio - eps
                            || ((ratio - lratio).abs() <= eps && basis[row] < basis[lrow])
                        {
                            leaving = Some((row, ratio));
                        }
                    }
                }
            }
        }
        let Some((pivot_row, _)) = leaving else {
            return None; // unbounded phase-1 cannot happen; defensive exit
        };

        // Pivot.
        let pivot = tableau[(pivot_row, col)];
        for c in 0..j + m {
            tableau[(pivot_row, c)] /= pivot;
        }
        rhs[pivot_row] /= pivot;
        for row in 0..m {
            if row != pivot_row {
                let factor = tableau[(row, col)];
                if factor != 0.0 {
                    for c in 0..j + m {
                        tableau[(row, c)] -= factor * tableau[(pivot_row, c)];
                    }
                    rhs[row] -= factor * rhs[pivot_row];
                }
            }
        }
        basis[pivot_row] = col;
    }

    // Feasible iff all artificials are (numerically) zero.
    let artificial_mass: f64 = basis
        .iter()
        .enumerate()
        .filter(|(_, &c)| c >= j)
        .map(|(row, _)| rhs[row])
        .sum();
    if artificial_mass > 1e-9 {
        return None;
    }
    let mut q = DVector::zeros(j);
    for (row, &c) in basis.iter().enumerate() {
        if c < j {
            q[c] = rhs[row].max(0.0);
        }
    }
    Some(q)
}
