//! Domain types shared by every solver.
//!
//! All types validate their invariants at construction and are immutable
//! afterwards, so they can be shared freely across threads. Callables held by
//! [`ExpectationViews`] and [`LogNumerator`] must be pure functions of their
//! argument.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Mean vector and covariance matrix of a multivariate normal distribution.
///
/// Values are stored in plain decimal units (10% is stored as `0.10`). The
/// covariance must be symmetric and positive definite; incompatible inputs
/// are rejected rather than repaired.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalParams {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
}

impl NormalParams {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::Parameter("mean must have positive length".into()));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::Dimension(format!(
                "cov is {}x{}, expected {n}x{n}",
                cov.nrows(),
                cov.ncols()
            )));
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("mean".into()));
        }
        if !linalg::is_symmetric(&cov, linalg::SYMMETRY_RTOL) {
            return Err(Error::NotSymmetric { name: "cov".into() });
        }
        linalg::cholesky_pd(&cov, "cov")?;
        Ok(Self { mean, cov })
    }

    /// Build from standard deviations and a correlation matrix.
    pub fn from_std_corr(mean: DVector<f64>, std: DVector<f64>, corr: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if std.len() != n || corr.nrows() != n || corr.ncols() != n {
            return Err(Error::Dimension(
                "mean, std, and corr must share one dimension".into(),
            ));
        }
        if std.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            return Err(Error::Parameter("standard deviations must be positive".into()));
        }
        let mut cov = corr;
        for i in 0..n {
            for j in 0..n {
                cov[(i, j)] *= std[i] * std[j];
            }
        }
        Self::new(mean, cov)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Per-coordinate standard deviations.
    pub fn std(&self) -> DVector<f64> {
        self.cov.diagonal().map(|v| v.sqrt())
    }

    /// Correlation matrix implied by the covariance.
    pub fn corr(&self) -> DMatrix<f64> {
        let s = self.std();
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| self.cov[(i, j)] / (s[i] * s[j]))
    }
}

/// Natural coordinates of a multivariate normal: `theta_mu = cov^-1 * mean`
/// and `theta_sigma = -1/2 * cov^-1` (kept in matrix form, not vectorized).
///
/// `theta_sigma` must be symmetric negative definite; that is exactly
/// membership in the admissible natural-parameter domain.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalNormal {
    theta_mu: DVector<f64>,
    theta_sigma: DMatrix<f64>,
}

impl CanonicalNormal {
    pub fn new(theta_mu: DVector<f64>, theta_sigma: DMatrix<f64>) -> Result<Self> {
        let n = theta_mu.len();
        if theta_sigma.nrows() != n || theta_sigma.ncols() != n {
            return Err(Error::Dimension(format!(
                "theta_sigma is {}x{}, expected {n}x{n}",
                theta_sigma.nrows(),
                theta_sigma.ncols()
            )));
        }
        if !linalg::is_symmetric(&theta_sigma, linalg::SYMMETRY_RTOL) {
            return Err(Error::NotSymmetric {
                name: "theta_sigma".into(),
            });
        }
        let negated = -&theta_sigma;
        if linalg::cholesky_pd(&negated, "-theta_sigma").is_err() {
            return Err(Error::NotNegativeDefinite {
                name: "theta_sigma".into(),
            });
        }
        Ok(Self {
            theta_mu,
            theta_sigma,
        })
    }

    pub fn dim(&self) -> usize {
        self.theta_mu.len()
    }

    pub fn theta_mu(&self) -> &DVector<f64> {
        &self.theta_mu
    }

    pub fn theta_sigma(&self) -> &DMatrix<f64> {
        &self.theta_sigma
    }
}

/// J joint scenarios with a probability vector: a Monte Carlo or generalized
/// categorical representation of a distribution. Row `j` of `scenarios` is
/// the j-th scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedScenarios {
    scenarios: DMatrix<f64>,
    probs: DVector<f64>,
}

/// Absolute tolerance on `sum(probs) - 1`.
const PROB_SUM_ATOL: f64 = 1e-12;

impl WeightedScenarios {
    pub fn new(scenarios: DMatrix<f64>, probs: DVector<f64>) -> Result<Self> {
        let j = scenarios.nrows();
        if j < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 scenarios, got {j}"
            )));
        }
        if scenarios.ncols() == 0 {
            return Err(Error::Parameter("scenarios must have at least 1 column".into()));
        }
        if probs.len() != j {
            return Err(Error::Dimension(format!(
                "{} probabilities for {j} scenarios",
                probs.len()
            )));
        }
        if !scenarios.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("scenarios".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p <= 0.0) {
            return Err(Error::Probability(
                "all probabilities must be strictly positive".into(),
            ));
        }
        let sum = linalg::kahan_sum(probs.iter().copied());
        if (sum - 1.0).abs() > PROB_SUM_ATOL {
            return Err(Error::Probability(format!(
                "probabilities sum to {sum}, expected 1"
            )));
        }
        Ok(Self { scenarios, probs })
    }

    /// Equal probabilities `1/J` for every scenario.
    pub fn uniform(scenarios: DMatrix<f64>) -> Result<Self> {
        let j = scenarios.nrows();
        if j < 2 {
            return Err(Error::Parameter(format!(
                "need at least 2 scenarios, got {j}"
            )));
        }
        let probs = DVector::from_element(j, 1.0 / j as f64);
        Self::new(scenarios, probs)
    }

    /// Same scenarios, different probabilities.
    pub fn with_probs(&self, probs: DVector<f64>) -> Result<Self> {
        Self::new(self.scenarios.clone(), probs)
    }

    pub fn n_scenarios(&self) -> usize {
        self.scenarios.nrows()
    }

    pub fn dim(&self) -> usize {
        self.scenarios.ncols()
    }

    pub fn scenarios(&self) -> &DMatrix<f64> {
        &self.scenarios
    }

    pub fn probs(&self) -> &DVector<f64> {
        &self.probs
    }

    /// Probability-weighted mean of the scenarios.
    pub fn weighted_mean(&self) -> DVector<f64> {
        linalg::weighted_row_mean(&self.scenarios, &self.probs)
    }

    /// Probability-weighted covariance of the scenarios.
    pub fn weighted_cov(&self) -> DMatrix<f64> {
        linalg::weighted_row_cov(&self.scenarios, &self.probs)
    }
}

type FeatureFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type JacobianFn = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// Expectation-type information constraints: a feature map `zeta` together
/// with targets so that the updated distribution must satisfy
/// `E[zeta(X)] = targets`.
///
/// The feature map must be a pure function. An analytic Jacobian can be
/// attached; when absent, [`ExpectationViews::jacobian_at`] falls back to
/// central finite differences.
#[derive(Clone)]
pub struct ExpectationViews {
    feature_map: FeatureFn,
    jacobian: Option<JacobianFn>,
    targets: DVector<f64>,
}

impl fmt::Debug for ExpectationViews {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ExpectationViews")
            .field("n_views", &self.targets.len())
            .field("targets", &self.targets)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

impl ExpectationViews {
    pub fn new<F>(targets: DVector<f64>, feature_map: F) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self::build(targets, Arc::new(feature_map), None)
    }

    pub fn with_jacobian<F, J>(targets: DVector<f64>, feature_map: F, jacobian: J) -> Result<Self>
    where
        F: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        J: Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self::build(targets, Arc::new(feature_map), Some(Arc::new(jacobian)))
    }

    /// Linear views `E[gamma * X] = targets`; the Jacobian is `gamma` itself.
    pub fn linear(gamma: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        if gamma.nrows() != targets.len() {
            return Err(Error::Dimension(format!(
                "gamma has {} rows but targets has length {}",
                gamma.nrows(),
                targets.len()
            )));
        }
        let g = gamma.clone();
        let gj = gamma;
        Self::build(
            targets,
            Arc::new(move |x: &DVector<f64>| &g * x),
            Some(Arc::new(move |_: &DVector<f64>| gj.clone())),
        )
    }

    fn build(targets: DVector<f64>, feature_map: FeatureFn, jacobian: Option<JacobianFn>) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::Parameter("views need at least one target".into()));
        }
        if !targets.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("view targets".into()));
        }
        Ok(Self {
            feature_map,
            jacobian,
            targets,
        })
    }

    /// Number of constraints.
    pub fn n_views(&self) -> usize {
        self.targets.len()
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    /// Evaluate the feature map at one point.
    pub fn features(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.feature_map)(x)
    }

    /// Jacobian of the feature map at `x` (rows index features), analytic when
    /// supplied, otherwise central finite differences.
    pub fn jacobian_at(&self, x: &DVector<f64>) -> DMatrix<f64> {
        if let Some(jac) = &self.jacobian {
            return jac(x);
        }
        let n = x.len();
        let k = self.n_views();
        let mut out = DMatrix::zeros(k, n);
        let mut xp = x.clone();
        for col in 0..n {
            let h = 1e-6 * x[col].abs().max(1.0);
            xp[col] = x[col] + h;
            let fp = self.features(&xp);
            xp[col] = x[col] - h;
            let fm = self.features(&xp);
            xp[col] = x[col];
            for row in 0..k {
                out[(row, col)] = (fp[row] - fm[row]) / (2.0 * h);
            }
        }
        out
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    /// Evaluate the feature map on every scenario row, producing a J x k matrix.
    pub fn feature_matrix(&self, scenarios: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let j = scenarios.nrows();
        let k = self.n_views();
        let mut features = DMatrix::zeros(j, k);
        let mut x = DVector::zeros(scenarios.ncols());
        for row in 0..j {
            for c in 0..scenarios.ncols() {
                x[c] = scenarios[(row, c)];
            }
            let z = self.features(&x);
            if z.len() != k {
                return Err(Error::Dimension(format!(
                    "feature map returned length {} but targets have length {k}",
                    z.len()
                )));
            }
            if !z.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("features at scenario {row}")));
            }
            for c in 0..k {
                features[(row, c)] = z[c];
            }
        }
        Ok(features)
    }
}

/// Information on linear combinations of means and covariances:
/// `E[gamma_mu X] = mu_info` and `Cov[gamma_sigma X] = sigma2_info`.
///
/// Either block may be empty (zero rows); non-empty blocks must have full row
/// rank and `sigma2_info` must be symmetric positive definite.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentViews {
    gamma_mu: DMatrix<f64>,
    mu_info: DVector<f64>,
    gamma_sigma: DMatrix<f64>,
    sigma2_info: DMatrix<f64>,
}

impl MomentViews {
    pub fn new(
        gamma_mu: DMatrix<f64>,
        mu_info: DVector<f64>,
        gamma_sigma: DMatrix<f64>,
        sigma2_info: DMatrix<f64>,
    ) -> Result<Self> {
        let k_mu = gamma_mu.nrows();
        let k_sigma = gamma_sigma.nrows();
        if k_mu == 0 && k_sigma == 0 {
            return Err(Error::Parameter("at least one view block must be non-empty".into()));
        }
        let n = if k_mu > 0 { gamma_mu.ncols() } else { gamma_sigma.ncols() };
        if n == 0 {
            return Err(Error::Parameter("view matrices must have at least one column".into()));
        }
        if k_mu > 0 && k_sigma > 0 && gamma_mu.ncols() != gamma_sigma.ncols() {
            return Err(Error::Dimension(format!(
                "gamma_mu has {} columns, gamma_sigma has {}",
                gamma_mu.ncols(),
                gamma_sigma.ncols()
            )));
        }
        if mu_info.len() != k_mu {
            return Err(Error::Dimension(format!(
                "mu_info has length {}, expected {k_mu}",
                mu_info.len()
            )));
        }
        if sigma2_info.nrows() != k_sigma || sigma2_info.ncols() != k_sigma {
            return Err(Error::Dimension(format!(
                "sigma2_info is {}x{}, expected {k_sigma}x{k_sigma}",
                sigma2_info.nrows(),
                sigma2_info.ncols()
            )));
        }
        for (m, name) in [(&gamma_mu, "gamma_mu"), (&gamma_sigma, "gamma_sigma")] {
            if !m.iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite(format!("matrix `{name}`")));
            }
            if !linalg::has_full_row_rank(m) {
                return Err(Error::RankDeficient { name: name.to_string() });
            }
        }
        if !mu_info.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("mu_info".into()));
        }
        if k_sigma > 0 {
            if !linalg::is_symmetric(&sigma2_info, linalg::SYMMETRY_RTOL) {
                return Err(Error::NotSymmetric {
                    name: "sigma2_info".into(),
                });
            }
            linalg::cholesky_pd(&sigma2_info, "sigma2_info")?;
        }
        Ok(Self {
            gamma_mu,
            mu_info,
            gamma_sigma,
            sigma2_info,
        })
    }

    /// Views on means only.
    pub fn mean_only(gamma_mu: DMatrix<f64>, mu_info: DVector<f64>) -> Result<Self> {
        let n = gamma_mu.ncols();
        Self::new(gamma_mu, mu_info, DMatrix::zeros(0, n), DMatrix::zeros(0, 0))
    }

    /// Views on covariances only.
    pub fn cov_only(gamma_sigma: DMatrix<f64>, sigma2_info: DMatrix<f64>) -> Result<Self> {
        let n = gamma_sigma.ncols();
        Self::new(DMatrix::zeros(0, n), DVector::zeros(0), gamma_sigma, sigma2_info)
    }

    pub fn dim(&self) -> usize {
        if self.gamma_mu.nrows() > 0 {
            self.gamma_mu.ncols()
        } else {
            self.gamma_sigma.ncols()
        }
    }

    pub fn k_mu(&self) -> usize {
        self.gamma_mu.nrows()
    }

    pub fn k_sigma(&self) -> usize {
        self.gamma_sigma.nrows()
    }

    pub fn gamma_mu(&self) -> &DMatrix<f64> {
        &self.gamma_mu
    }

    pub fn mu_info(&self) -> &DVector<f64> {
        &self.mu_info
    }

    pub fn gamma_sigma(&self) -> &DMatrix<f64> {
        &self.gamma_sigma
    }

    pub fn sigma2_info(&self) -> &DMatrix<f64> {
        &self.sigma2_info
    }
}

type LogFn = Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// An unnormalized log-density ("numerator") with its gradient and a
/// reasonable starting point for samplers.
#[derive(Clone)]
pub struct LogNumerator {
    value: LogFn,
    gradient: GradFn,
    initial_point: DVector<f64>,
}

impl fmt::Debug for LogNumerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LogNumerator")
            .field("dim", &self.initial_point.len())
            .finish()
    }
}

impl LogNumerator {
    /// Wrap arbitrary callables; the sampler starts at the origin unless
    /// [`LogNumerator::with_initial_point`] overrides it.
    pub fn new<V, G>(dim: usize, value: V, gradient: G) -> Self
    where
        V: Fn(&DVector<f64>) -> f64 + Send + Sync + 'static,
        G: Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            initial_point: DVector::zeros(dim),
        }
    }

    pub fn with_initial_point(mut self, x0: DVector<f64>) -> Self {
        self.initial_point = x0;
        self
    }

    /// The log-density of `normal` up to its normalizing constant,
    /// `-1/2 (x - mean)' cov^-1 (x - mean)`, with exact gradient. The sampler
    /// starting point defaults to the mean.
    pub fn from_normal(normal: &NormalParams) -> Result<Self> {
        let chol = linalg::cholesky_pd(normal.cov(), "cov")?;
        let mean = normal.mean().clone();
        let mean_g = mean.clone();
        let chol_g = chol.clone();
        let value = move |x: &DVector<f64>| {
            let d = x - &mean;
            let s = chol.solve(&d);
            -0.5 * d.dot(&s)
        };
        let gradient = move |x: &DVector<f64>| {
            let d = x - &mean_g;
            -chol_g.solve(&d)
        };
        Ok(Self::new(normal.dim(), value, gradient).with_initial_point(normal.mean().clone()))
    }

    pub fn dim(&self) -> usize {
        self.initial_point.len()
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.gradient)(x)
    }

    pub fn initial_point(&self) -> &DVector<f64> {
        &self.initial_point
    }
}

/// An exponentially tilted unnormalized density
/// `ln g(x) + theta' zeta(x)` with its gradient. With `theta = 0` it
/// coincides with the base numerator.
#[derive(Clone)]
pub struct TiltedDensity {
    numerator: LogNumerator,
    theta: DVector<f64>,
    views: ExpectationViews,
    zero_tilt: bool,
}

impl fmt::Debug for TiltedDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TiltedDensity")
            .field("dim", &self.numerator.dim())
            .field("theta", &self.theta)
            .finish()
    }
}

impl TiltedDensity {
    pub fn new(numerator: LogNumerator, theta: DVector<f64>, views: ExpectationViews) -> Result<Self> {
        if theta.len() != views.n_views() {
            return Err(Error::Dimension(format!(
                "theta has length {}, views have {}",
                theta.len(),
                views.n_views()
            )));
        }
        if !theta.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("theta".into()));
        }
        let zero_tilt = theta.iter().all(|v| *v == 0.0);
        Ok(Self {
            numerator,
            theta,
            views,
            zero_tilt,
        })
    }

    /// Untilted density (`theta = 0`).
    pub fn base(numerator: LogNumerator, views: ExpectationViews) -> Self {
        let k = views.n_views();
        Self::new(numerator, DVector::zeros(k), views).expect("zero theta always valid")
    }

    pub fn dim(&self) -> usize {
        self.numerator.dim()
    }

    pub fn theta(&self) -> &DVector<f64> {
        &self.theta
    }

    pub fn views(&self) -> &ExpectationViews {
        &self.views
    }

    pub fn numerator(&self) -> &LogNumerator {
        &self.numerator
    }

    /// Unnormalized log-density `ln g(x) + theta' zeta(x)`. May return
    /// non-finite values; see [`TiltedDensity::log_density`] for the checked
    /// variant.
    pub fn log_density_raw(&self, x: &DVector<f64>) -> f64 {
        let base = self.numerator.value(x);
        if self.zero_tilt {
            return base;
        }
        base + self.theta.dot(&self.views.features(x))
    }

    /// Checked unnormalized log-density.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let u = self.log_density_raw(x);
        if !u.is_finite() {
            return Err(Error::NonFinite(format!("log-density at x = {x:?}")));
        }
        Ok(u)
    }

    /// Gradient `grad ln g(x) + J_zeta(x)' theta`, unchecked.
    pub fn gradient_raw(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut g = self.numerator.gradient(x);
        if !self.zero_tilt {
            let jac = self.views.jacobian_at(x);
            g.gemv_tr(1.0, &jac, &self.theta, 1.0);
        }
        g
    }

    /// Checked gradient of the unnormalized log-density.
    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        let g = self.gradient_raw(x);
        if !g.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite(format!("log-density gradient at x = {x:?}")));
        }
        Ok(g)
    }
}

/// One recorded step of the iterative solver.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationStep {
    /// Effective number of scenarios of the pooled probabilities, in (0, 1].
    pub ens: f64,
    /// Distance of the pooled mean from the reference (or raw sample) mean.
    pub mean_error: f64,
    /// Frobenius distance of the pooled covariance from the reference (or raw
    /// sample) covariance.
    pub cov_error: f64,
    /// Euclidean norm of the multiplier increment applied this step.
    pub delta_theta_norm: f64,
}

/// Per-step diagnostics of an iterative run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationTrace {
    steps: Vec<IterationStep>,
}

impl IterationTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, step: IterationStep) -> Result<()> {
        if !(step.ens > 0.0 && step.ens <= 1.0) {
            return Err(Error::Parameter(format!(
                "trace ens must lie in (0, 1], got {}",
                step.ens
            )));
        }
        if step.mean_error < 0.0 || step.cov_error < 0.0 || step.delta_theta_norm < 0.0 {
            return Err(Error::Parameter("trace errors must be non-negative".into()));
        }
        self.steps.push(step);
        Ok(())
    }

    pub fn steps(&self) -> &[IterationStep] {
        &self.steps
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn last(&self) -> Option<&IterationStep> {
        self.steps.last()
    }
}
