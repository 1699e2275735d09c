//! Hamiltonian Monte Carlo for unnormalized densities.
//!
//! A single chain with identity mass matrix, full momentum refresh, leapfrog
//! integration, and a Metropolis correction. Draws are emitted with uniform
//! probabilities, ready for entropy pooling. Runs are deterministic given the
//! configured seed.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::types::{TiltedDensity, WeightedScenarios};

/// Sampler settings.
#[derive(Debug, Clone)]
pub struct HmcConfig {
    /// Leapfrog step size (initial value when adaptation is on).
    pub step_size: f64,
    /// Maximum leapfrog steps per proposal. Each iteration draws the actual
    /// count uniformly from `[ceil(n_leapfrog / 2), n_leapfrog]`; fixed-length
    /// trajectories resonate on near-Gaussian targets and mix poorly.
    pub n_leapfrog: usize,
    /// Number of draws to return.
    pub n_samples: usize,
    /// Iterations discarded before collection.
    pub n_burnin: usize,
    /// Keep every `thin`-th draw after burn-in.
    pub thin: usize,
    /// RNG seed; identical seeds give bit-identical output.
    pub seed: u64,
    /// Acceptance rate targeted by step-size adaptation.
    pub target_accept: f64,
    /// Adapt the step size by dual averaging during burn-in, then freeze it.
    pub adapt: bool,
}

impl HmcConfig {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self {
            step_size: 0.1,
            n_leapfrog: 20,
            n_samples,
            n_burnin: 1000,
            thin: 1,
            seed,
            target_accept: 0.8,
            adapt: true,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::Parameter("step_size must be positive".into()));
        }
        if self.n_leapfrog == 0 {
            return Err(Error::Parameter("n_leapfrog must be at least 1".into()));
        }
        if self.n_samples == 0 {
            return Err(Error::Parameter("n_samples must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Parameter("thin must be at least 1".into()));
        }
        if !(self.target_accept > 0.0 && self.target_accept < 1.0) {
            return Err(Error::Parameter("target_accept must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Chain output: uniformly weighted draws plus realized tuning diagnostics.
#[derive(Debug, Clone)]
pub struct HmcRun {
    /// The draws, one scenario per row, each with probability 1/J.
    pub scenarios: WeightedScenarios,
    /// Acceptance rate over the collection phase.
    pub acceptance_rate: f64,
    /// Step size in force after burn-in.
    pub step_size: f64,
}

/// Minimum tolerated burn-in acceptance rate before tuning is declared broken.
const MIN_ACCEPT_RATE: f64 = 0.05;

/// One leapfrog trajectory from `(position, momentum)`.
///
/// The integrator is volume-preserving and time-reversible: integrating the
/// result with negated momentum retraces the trajectory. Non-finite states
/// abort with [`Error::DivergentTrajectory`], which samplers treat as a
/// rejected proposal.
pub fn leapfrog(
    td: &TiltedDensity,
    position: &DVector<f64>,
    momentum: &DVector<f64>,
    step_size: f64,
    n_steps: usize,
) -> Result<(DVector<f64>, DVector<f64>)> {
    if position.len() != td.dim() || momentum.len() != td.dim() {
        return Err(Error::Dimension(format!(
            "state has lengths {}/{}, density expects {}",
            position.len(),
            momentum.len(),
            td.dim()
        )));
    }
    let mut x = position.clone();
    let mut p = momentum.clone();
    if leapfrog_raw(td, &mut x, &mut p, step_size, n_steps) {
        Ok((x, p))
    } else {
        Err(Error::DivergentTrajectory)
    }
}

/// In-place leapfrog; returns `false` on a non-finite trajectory.
fn leapfrog_raw(
    td: &TiltedDensity,
    x: &mut DVector<f64>,
    p: &mut DVector<f64>,
    step_size: f64,
    n_steps: usize,
) -> bool {
    let grad = td.gradient_raw(x);
    if !all_finite(&grad) {
        return false;
    }
    p.axpy(0.5 * step_size, &grad, 1.0);
    for step in 0..n_steps {
        x.axpy(step_size, p, 1.0);
        let grad = td.gradient_raw(x);
        if !all_finite(&grad) || !all_finite(x) {
            return false;
        }
        let scale = if step + 1 == n_steps {
            0.5 * step_size
        } else {
            step_size
        };
        p.axpy(scale, &grad, 1.0);
    }
    all_finite(p)
}

fn all_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Draw `config.n_samples` scenarios from the unnormalized density.
///
/// The Hamiltonian is `-log_density(x) + ||momentum||^2 / 2`; momentum is
/// fully refreshed every iteration. When `config.adapt` is set, the step size
/// follows dual averaging toward `config.target_accept` during burn-in and is
/// frozen afterwards. An acceptance rate below 5% over burn-in aborts with a
/// tuning error.
pub fn sample(td: &TiltedDensity, config: &HmcConfig, x0: &DVector<f64>) -> Result<HmcRun> {
    config.validate()?;
    if x0.len() != td.dim() {
        return Err(Error::Dimension(format!(
            "x0 has length {}, density expects {}",
            x0.len(),
            td.dim()
        )));
    }
    let mut x = x0.clone();
    let mut log_density = td.log_density(&x)?;

    let mut rng = ChaCha12Rng::seed_from_u64(config.seed);
    let mut step_size = config.step_size;

    // Dual-averaging state (Nesterov-style primal averaging on ln eps).
    let da_mu = (10.0 * config.step_size).ln();
    let mut da_h = 0.0;
    let mut da_log_eps_bar = config.step_size.ln();
    const DA_GAMMA: f64 = 0.05;
    const DA_T0: f64 = 10.0;
    const DA_KAPPA: f64 = 0.75;

    if config.n_burnin > 0 {
        let mut accepts = 0usize;
        for t in 1..=config.n_burnin {
            let (alpha, accepted) =
                hmc_step(td, &mut x, &mut log_density, step_size, config.n_leapfrog, &mut rng);
            if accepted {
                accepts += 1;
            }
            if config.adapt {
                let t_f = t as f64;
                da_h += (config.target_accept - alpha - da_h) / (t_f + DA_T0);
                let log_eps = da_mu - t_f.sqrt() / DA_GAMMA * da_h;
                step_size = log_eps.exp().clamp(1e-10, 1e3);
                let w = t_f.powf(-DA_KAPPA);
                da_log_eps_bar = w * log_eps + (1.0 - w) * da_log_eps_bar;
            }
        }
        let rate = accepts as f64 / config.n_burnin as f64;
        if rate < MIN_ACCEPT_RATE {
            return Err(Error::HmcTuning {
                acceptance_rate: rate,
            });
        }
        if config.adapt {
            step_size = da_log_eps_bar.exp().clamp(1e-10, 1e3);
        }
    }

    let dim = td.dim();
    let mut draws = DMatrix::zeros(config.n_samples, dim);
    let mut accepts = 0usize;
    let total = config.n_samples * config.thin;
    let mut kept = 0usize;
    for t in 1..=total {
        let (_, accepted) =
            hmc_step(td, &mut x, &mut log_density, step_size, config.n_leapfrog, &mut rng);
        if accepted {
            accepts += 1;
        }
        if t % config.thin == 0 {
            draws.row_mut(kept).copy_from(&x.transpose());
            kept += 1;
        }
    }
    debug_assert_eq!(kept, config.n_samples);

    Ok(HmcRun {
        scenarios: WeightedScenarios::uniform(draws)?,
        acceptance_rate: accepts as f64 / total as f64,
        step_size,
    })
}

/// One proposal/accept cycle. Returns the Metropolis statistic and whether
/// the proposal was accepted.
fn hmc_step(
    td: &TiltedDensity,
    x: &mut DVector<f64>,
    log_density: &mut f64,
    step_size: f64,
    n_leapfrog: usize,
    rng: &mut ChaCha12Rng,
) -> (f64, bool) {
    let dim = x.len();
    let momentum = DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let h0 = -*log_density + 0.5 * momentum.norm_squared();
    let min_steps = n_leapfrog.div_ceil(2);
    let steps = rng.random_range(min_steps..=n_leapfrog);

    let mut x_new = x.clone();
    let mut p_new = momentum;
    let mut alpha = 0.0;
    let mut u_new = f64::NEG_INFINITY;
    if leapfrog_raw(td, &mut x_new, &mut p_new, step_size, steps) {
        u_new = td.log_density_raw(&x_new);
        if u_new.is_finite() {
            let h1 = -u_new + 0.5 * p_new.norm_squared();
            alpha = (h0 - h1).exp().min(1.0);
        }
    }

    let accepted = rng.random::<f64>() < alpha;
    if accepted {
        x.copy_from(&x_new);
        *log_density = u_new;
    }
    (alpha, accepted)
}
