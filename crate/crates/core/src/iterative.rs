//! Iterative minimum-relative-entropy solver for general bases known up to a
//! normalizing constant.
//!
//! Each outer step draws fresh uniformly weighted scenarios from the current
//! tilted numerator, entropy-pools them against the views to obtain
//! incremental multipliers and exact-constraint probabilities, folds the
//! increment into the accumulated multipliers, and retilts the numerator.
//! The loop stops once the pooled probabilities stay close enough to uniform
//! (effective number of scenarios above `1 - delta`), i.e. once the sampler
//! itself is already drawing from (nearly) the updated distribution.

use nalgebra::{DMatrix, DVector};

use crate::diagnostics::ens;
use crate::error::{Error, Result};
use crate::hmc::{self, HmcConfig};
use crate::pooling::{self, PoolConfig};
use crate::types::{
    ExpectationViews, IterationStep, IterationTrace, LogNumerator, NormalParams, TiltedDensity,
    WeightedScenarios,
};

/// Outer-loop settings.
#[derive(Debug, Clone)]
pub struct IterativeConfig {
    /// Scenarios drawn per outer step.
    pub n_scenarios: usize,
    /// Convergence margin: stop when ens exceeds `1 - delta`.
    pub delta: f64,
    /// Outer iteration budget.
    pub max_outer: usize,
    /// Sampler settings; `n_samples` is overridden by `n_scenarios` and the
    /// seed is offset by the step index so steps are independent yet
    /// reproducible.
    pub hmc: HmcConfig,
    /// Inner entropy-pooling settings.
    pub pool: PoolConfig,
    /// Optional reference moments; when set, per-step mean/covariance errors
    /// in the trace are measured against them, otherwise against the raw
    /// (pre-pooling) moments of the same scenario set.
    pub reference: Option<NormalParams>,
}

impl IterativeConfig {
    pub fn new(n_scenarios: usize, hmc: HmcConfig) -> Self {
        Self {
            n_scenarios,
            delta: 0.01,
            max_outer: 10,
            hmc,
            pool: PoolConfig::default(),
            reference: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_scenarios < 2 {
            return Err(Error::Parameter("n_scenarios must be at least 2".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Parameter("delta must lie in (0, 1)".into()));
        }
        if self.max_outer == 0 {
            return Err(Error::Parameter("max_outer must be at least 1".into()));
        }
        Ok(())
    }
}

/// Weighted first and second moments of one outer step's pooled scenarios.
#[derive(Debug, Clone)]
pub struct StepMoments {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// Final state of an iterative run.
#[derive(Debug, Clone)]
pub struct IterativeResult {
    /// Scenario set of the last step with its pooled probabilities; satisfies
    /// the views exactly.
    pub scenarios: WeightedScenarios,
    /// Accumulated Lagrange multipliers.
    pub theta_info_hat: DVector<f64>,
    /// The tilted numerator after the last multiplier update.
    pub final_numerator: TiltedDensity,
    /// Per-step diagnostics.
    pub trace: IterationTrace,
    /// Whether the ens threshold was reached within `max_outer` steps.
    pub converged: bool,
    /// Pooled moments per step, for plotting and cross-validation.
    pub step_moments: Vec<StepMoments>,
}

/// Retilt the base numerator with accumulated multipliers:
/// log value `ln g(x) + theta_hat' zeta(x)` with the matching gradient.
/// Successive updates compose additively in the exponent.
pub fn update_numerator(
    base: &LogNumerator,
    theta_hat: &DVector<f64>,
    views: &ExpectationViews,
) -> Result<TiltedDensity> {
    TiltedDensity::new(base.clone(), theta_hat.clone(), views.clone())
}

/// Convergence rule: ens of the pooled probabilities against the sampling
/// probabilities exceeds `1 - delta`.
pub fn converged(p_bar: &DVector<f64>, p: &DVector<f64>, delta: f64) -> Result<bool> {
    Ok(ens(p_bar, p)? > 1.0 - delta)
}

/// `true` when the first and second halves of a chain disagree badly on any
/// coordinate: the signature of a drifting (non-stationary) chain, which in
/// this loop means an estimated multiplier increment has pushed the tilted
/// numerator out of the integrable domain.
fn looks_drifting(draws: &WeightedScenarios) -> bool {
    let scenarios = draws.scenarios();
    let j = scenarios.nrows();
    let half = j / 2;
    if half < 10 {
        return false;
    }
    for c in 0..scenarios.ncols() {
        let col = scenarios.column(c);
        let (mut m1, mut m2) = (0.0, 0.0);
        for r in 0..half {
            m1 += col[r];
        }
        for r in half..j {
            m2 += col[r];
        }
        m1 /= half as f64;
        m2 /= (j - half) as f64;
        let mean = (m1 * half as f64 + m2 * (j - half) as f64) / j as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / j as f64;
        if (m1 - m2).abs() > 0.5 * var.sqrt() + 1e-12 {
            return true;
        }
    }
    false
}

/// Run the iterative solver.
///
/// Infeasible views surface as pooling errors tagged with the outer step;
/// exhausting `max_outer` returns the last state with `converged = false`
/// rather than an error, so callers can inspect the trace.
///
/// Multiplier increments are estimated from finite samples, so an
/// aggressive increment can occasionally leave the current numerator
/// non-integrable; the next chain then drifts instead of mixing. When the
/// drift check trips, the previous increment is halved and the step's
/// scenarios are redrawn (with a shifted seed) before pooling.
pub fn run(
    base: &LogNumerator,
    views: &ExpectationViews,
    config: &IterativeConfig,
) -> Result<IterativeResult> {
    config.validate()?;
    let k = views.n_views();
    let mut theta_hat = DVector::zeros(k);
    let mut numerator = update_numerator(base, &theta_hat, views)?;
    let mut trace = IterationTrace::new();
    let mut step_moments = Vec::new();
    let mut last: Option<(WeightedScenarios, DVector<f64>)> = None;
    let mut last_increment = DVector::zeros(k);
    let x0 = base.initial_point().clone();

    const MAX_BACKOFFS: usize = 6;

    for step in 1..=config.max_outer {
        let mut attempt = 0usize;
        let draws = loop {
            let hmc_config = HmcConfig {
                n_samples: config.n_scenarios,
                seed: config
                    .hmc
                    .seed
                    .wrapping_add(step as u64)
                    .wrapping_add(attempt as u64 * 1_000_003),
                ..config.hmc.clone()
            };
            let run = hmc::sample(&numerator, &hmc_config, &x0).map_err(|e| Error::IterativeStep {
                step,
                source: Box::new(e),
            })?;
            if !looks_drifting(&run.scenarios) {
                break run.scenarios;
            }
            attempt += 1;
            if step == 1 || attempt > MAX_BACKOFFS || last_increment.amax() == 0.0 {
                return Err(Error::IterativeStep {
                    step,
                    source: Box::new(Error::Numerics(
                        "sampler drifted; the tilted numerator appears non-integrable".into(),
                    )),
                });
            }
            let backoff = 0.5 * &last_increment;
            theta_hat -= &backoff;
            last_increment = backoff;
            numerator = update_numerator(base, &theta_hat, views)?;
        };

        let pooled =
            pooling::entropy_pool(&draws, views, &config.pool).map_err(|e| Error::IterativeStep {
                step,
                source: Box::new(e),
            })?;

        theta_hat += &pooled.theta_hat;
        last_increment = pooled.theta_hat.clone();
        numerator = update_numerator(base, &theta_hat, views)?;

        let pooled_scenarios = draws.with_probs(pooled.probs_updated.clone())?;
        let mean = pooled_scenarios.weighted_mean();
        let cov = pooled_scenarios.weighted_cov();
        let (mean_error, cov_error) = match &config.reference {
            Some(reference) => (
                (&mean - reference.mean()).norm(),
                (&cov - reference.cov()).norm(),
            ),
            None => (
                (&mean - draws.weighted_mean()).norm(),
                (&cov - draws.weighted_cov()).norm(),
            ),
        };
        trace.push(IterationStep {
            ens: pooled.ens_value,
            mean_error,
            cov_error,
            delta_theta_norm: pooled.theta_hat.norm(),
        })?;
        step_moments.push(StepMoments { mean, cov });
        let done = pooled.ens_value > 1.0 - config.delta;
        last = Some((pooled_scenarios, pooled.probs_updated));

        if done {
            let (scenarios, _) = last.take().expect("step just recorded");
            return Ok(IterativeResult {
                scenarios,
                theta_info_hat: theta_hat,
                final_numerator: numerator,
                trace,
                converged: true,
                step_moments,
            });
        }
    }

    let (scenarios, _) = last.take().expect("max_outer >= 1 guarantees one step");
    Ok(IterativeResult {
        scenarios,
        theta_info_hat: theta_hat,
        final_numerator: numerator,
        trace,
        converged: false,
        step_moments,
    })
}
