//! Acceptance suite: one test per release criterion, each printing a
//! PASS line on success. Stochastic criteria run with fixed seeds, so the
//! suite is deterministic. Run with `cargo test --test acceptance`.

mod common;

use std::time::Instant;

use common::*;
use mre_core::case_study;
use mre_core::prelude::*;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Published reference values for the built-in case study, in decimals.
const CS_MEAN: [f64; 7] = [0.10, 0.10, 0.35, 0.1729, 0.1729, 0.1729, 0.1729];
const CS_STD: [f64; 7] = [0.20, 0.20, 0.1402, 0.1402, 0.1402, 0.1402, 0.1402];
const CS_CORR_12: f64 = -0.80;
const CS_CORR_1X: f64 = 0.1175;
const CS_CORR_XX: f64 = 0.3894;
/// Half a basis point: printed reference values carry two decimals in percent.
const CS_TOL: f64 = 0.00005;

#[test]
fn criterion_1_analytic_case_study() {
    let started = Instant::now();
    let solution = solve_moment_views(&case_study::base(), &case_study::views()).unwrap();

    let mean = solution.updated.mean();
    let std = solution.updated.std();
    let corr = solution.updated.corr();
    for i in 0..7 {
        assert!(
            (mean[i] - CS_MEAN[i]).abs() <= CS_TOL,
            "mean[{i}] = {} vs {}",
            mean[i],
            CS_MEAN[i]
        );
        assert!(
            (std[i] - CS_STD[i]).abs() <= CS_TOL,
            "std[{i}] = {} vs {}",
            std[i],
            CS_STD[i]
        );
    }
    assert!((corr[(0, 1)] - CS_CORR_12).abs() <= 1e-10, "corr12 {}", corr[(0, 1)]);
    for j in 2..7 {
        assert!((corr[(0, j)] - CS_CORR_1X).abs() <= CS_TOL);
        assert!((corr[(1, j)] - CS_CORR_1X).abs() <= CS_TOL);
        for i in 2..j {
            assert!((corr[(i, j)] - CS_CORR_XX).abs() <= CS_TOL);
        }
    }
    assert!(started.elapsed().as_secs_f64() < 1.0, "analytic solve too slow");
    println!("[acceptance] criterion 1 (analytic case study): PASS");
}

fn iterative_case_study(n_scenarios: usize, seed: u64) -> (IterativeResult, NormalParams) {
    let base = case_study::base();
    let mv = case_study::views();
    let analytic = solve_moment_views(&base, &mv).unwrap();
    let views = expand_moment_views(&mv, base.mean()).unwrap();
    let numerator = LogNumerator::from_normal(&base).unwrap();
    let config = IterativeConfig {
        reference: Some(analytic.updated.clone()),
        ..IterativeConfig::new(n_scenarios, HmcConfig::new(n_scenarios, seed))
    };
    let result = run(&numerator, &views, &config).unwrap();
    (result, analytic.updated)
}

#[test]
fn criterion_2_iterative_case_study() {
    let started = Instant::now();
    let (result, _) = iterative_case_study(100_000, 1234);
    assert!(result.converged, "did not converge: {:?}", result.trace);
    let steps = result.trace.steps();
    assert!(steps.len() <= 5, "needed {} outer steps", steps.len());
    assert!(steps[0].ens <= 0.25, "first-step ens {}", steps[0].ens);
    let last = steps.last().unwrap();
    assert!(last.ens >= 0.99, "final ens {}", last.ens);
    assert!(last.mean_error <= 5e-3, "final mean error {}", last.mean_error);
    assert!(last.cov_error <= 5e-3, "final cov error {}", last.cov_error);
    for w in steps.windows(2) {
        assert!(
            w[1].mean_error <= 2.0 * w[0].mean_error,
            "mean errors not non-increasing within noise: {:?}",
            steps
        );
        assert!(
            w[1].cov_error <= 2.0 * w[0].cov_error,
            "cov errors not non-increasing within noise: {:?}",
            steps
        );
    }

    // Desk-scale variant.
    let (small, _) = iterative_case_study(20_000, 1234);
    assert!(small.converged);
    assert!(small.trace.last().unwrap().ens >= 0.98);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "runtime {elapsed:?} exceeds budget");
    println!(
        "[acceptance] criterion 2 (iterative case study, {} steps, ens {:.4}, {elapsed:?}): PASS",
        steps.len(),
        last.ens
    );
}

/// Random small pooling instance whose target is generated from a known
/// strictly interior probability vector (returned last, for oracle use).
fn random_pool_instance(
    rng: &mut rand_chacha::ChaCha12Rng,
    j: usize,
    k: usize,
) -> (WeightedScenarios, ExpectationViews, DMatrix<f64>, DVector<f64>) {
    let scenarios = randn_matrix(rng, j, k);
    let probs = random_probs(rng, j);
    let interior = random_probs(rng, j);
    let gamma = DMatrix::identity(k, k);
    let targets = scenarios.transpose() * &interior;
    let ws = WeightedScenarios::new(scenarios.clone(), probs).unwrap();
    let views = ExpectationViews::linear(gamma, targets).unwrap();
    (ws, views, scenarios, interior)
}

#[test]
fn criterion_3_discrete_oracle_equivalence() {
    // Closed form for the three-scenario mean-1.5 tilt: the mean constraint
    // is quadratic in w = e^theta with root w = (1 + sqrt(13)) / 2.
    let ws = WeightedScenarios::uniform(DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0])).unwrap();
    let views = ExpectationViews::linear(
        DMatrix::from_row_slice(1, 1, &[1.0]),
        DVector::from_vec(vec![1.5]),
    )
    .unwrap();
    let pooled = entropy_pool(&ws, &views, &PoolConfig::default()).unwrap();
    let w = (1.0 + 13.0_f64.sqrt()) / 2.0;
    let z = 1.0 + w + w * w;
    let expected = [1.0 / z, w / z, w * w / z];
    assert!((pooled.theta_hat[0] - w.ln()).abs() <= 1e-6);
    for (a, e) in pooled.probs_updated.iter().zip(expected.iter()) {
        assert!((a - e).abs() <= 1e-6);
    }

    // 50 random instances against a derivative-free primal search over the
    // feasible slice of the simplex.
    let mut rng = rng(90210);
    for trial in 0..50 {
        let k = 1 + (trial % 2);
        let j = (k + 3) + (trial % 4);
        let (ws, views, features, q0) = random_pool_instance(&mut rng, j, k);
        let pooled = entropy_pool(&ws, &views, &PoolConfig::default()).unwrap();
        let pooled_entropy = relative_entropy_discrete(&pooled.probs_updated, ws.probs()).unwrap();

        // Feasible set {q > 0, sum q = 1, F' q = targets} parametrized as
        // q0 + N z, with q0 the interior point the instance was built from.
        let mut constraint = DMatrix::zeros(k + 1, j);
        for c in 0..j {
            constraint[(0, c)] = 1.0;
            for r in 0..k {
                constraint[(r + 1, c)] = features[(c, r)];
            }
        }
        let basis = null_basis(&constraint);
        assert!(basis.ncols() >= 2, "degenerate instance");
        let p = ws.probs().clone();
        let objective = |z: &DVector<f64>| -> f64 {
            let q = &q0 + &basis * z;
            if q.iter().any(|v| *v <= 1e-12) {
                return f64::INFINITY;
            }
            q.iter()
                .zip(p.iter())
                .map(|(qi, pi)| qi * (qi / pi).ln())
                .sum()
        };
        let brute = compass_minimize(&objective, basis.ncols(), 0.5, 1e-7);
        assert!(
            (pooled_entropy - brute).abs() <= 1e-6,
            "trial {trial}: pooled {pooled_entropy} vs brute {brute}"
        );
    }
    println!("[acceptance] criterion 3 (discrete oracle equivalence): PASS");
}

#[test]
fn criterion_4_duality_and_calculus() {
    // (a) Dual gradient and Hessian against finite differences on 100
    // random instances.
    let mut rng = rng(41);
    for trial in 0..100 {
        let k = 1 + (trial % 3);
        let j = 4 + (trial % 12);
        let scenarios = randn_matrix(&mut rng, j, k);
        let ws = WeightedScenarios::new(scenarios, random_probs(&mut rng, j)).unwrap();
        let views = ExpectationViews::linear(
            DMatrix::identity(k, k),
            randn_vector(&mut rng, k) * 0.3,
        )
        .unwrap();
        let theta = randn_vector(&mut rng, k) * 0.7;

        let grad = dual_gradient(&theta, &ws, &views).unwrap();
        let hess = dual_hessian(&theta, &ws, &views).unwrap();
        let h = 1e-6;
        for i in 0..k {
            let mut up = theta.clone();
            up[i] += h;
            let mut dn = theta.clone();
            dn[i] -= h;
            let fd = (dual_objective(&up, &ws, &views).unwrap()
                - dual_objective(&dn, &ws, &views).unwrap())
                / (2.0 * h);
            let scale = grad[i].abs().max(1.0);
            assert!(
                (fd - grad[i]).abs() <= 1e-6 * scale,
                "trial {trial}: gradient entry {i}: fd {fd} vs {}",
                grad[i]
            );
            let gd_up = dual_gradient(&up, &ws, &views).unwrap();
            let gd_dn = dual_gradient(&dn, &ws, &views).unwrap();
            for l in 0..k {
                let fd2 = (gd_up[l] - gd_dn[l]) / (2.0 * h);
                let scale = hess[(l, i)].abs().max(1.0);
                assert!(
                    (fd2 - hess[(l, i)]).abs() <= 1e-4 * scale,
                    "trial {trial}: hessian entry ({l},{i})"
                );
            }
        }
        // Hessian of the dual is a covariance: symmetric PSD.
        let eig = hess.symmetric_eigenvalues();
        assert!(eig.min() >= -1e-10 * eig.amax().max(1.0));
    }

    // (b) For the normal parametric family indexed by the first moments of
    // the covariance-view combinations, the gradient of the relative entropy
    // equals the corresponding multipliers (the link function), and its
    // Hessian is positive semidefinite.
    let mut rng2 = common::rng(42);
    for _ in 0..8 {
        let n = 3;
        let base = NormalParams::new(randn_vector(&mut rng2, n) * 0.1, random_spd(&mut rng2, n, 0.05))
            .unwrap();
        let gamma_mu = randn_matrix(&mut rng2, 1, n);
        let gamma_sigma = randn_matrix(&mut rng2, 2, n);
        let g_s_cov = &gamma_sigma * base.cov() * gamma_sigma.transpose();
        let sigma2_info = &g_s_cov * 1.3;
        let mu_info = &gamma_mu * base.mean() + DVector::from_element(1, 0.05);
        let mv = MomentViews::new(
            gamma_mu.clone(),
            mu_info.clone(),
            gamma_sigma.clone(),
            sigma2_info,
        )
        .unwrap();

        let cov_up = updated_covariance(&base, &mv).unwrap();
        let shifted = mu_shift(&base, &mv).unwrap();
        let stacked = {
            let mut s = DMatrix::zeros(3, n);
            s.rows_mut(0, 1).copy_from(&gamma_mu);
            s.rows_mut(1, 2).copy_from(&gamma_sigma);
            s
        };
        let gram = &stacked * &cov_up * stacked.transpose();
        let chol = nalgebra::Cholesky::new(gram).expect("stacked gram is PD");

        // theta components and the family member at given eta_sigma.
        let member = |eta: &DVector<f64>| -> (DVector<f64>, NormalParams) {
            let mut t = DVector::zeros(3);
            t[0] = mu_info[0];
            t[1] = eta[0];
            t[2] = eta[1];
            let theta = chol.solve(&(&t - &stacked * &shifted));
            let mean = &shifted + &cov_up * stacked.transpose() * &theta;
            let theta_sigma = DVector::from_vec(vec![theta[1], theta[2]]);
            (theta_sigma, NormalParams::new(mean, cov_up.clone()).unwrap())
        };
        let entropy = |eta: &DVector<f64>| -> f64 {
            let (_, np) = member(eta);
            relative_entropy_normal(&np, &base).unwrap()
        };

        let probes = [
            &gamma_sigma * base.mean(),
            &gamma_sigma * base.mean() + DVector::from_vec(vec![0.07, -0.04]),
        ];
        let h = 1e-5;
        for eta in &probes {
            let (theta_sigma, _) = member(eta);
            let mut hess = DMatrix::zeros(2, 2);
            for i in 0..2 {
                let mut up = eta.clone();
                up[i] += h;
                let mut dn = eta.clone();
                dn[i] -= h;
                let fd = (entropy(&up) - entropy(&dn)) / (2.0 * h);
                let scale = theta_sigma[i].abs().max(1.0);
                assert!(
                    (fd - theta_sigma[i]).abs() <= 1e-5 * scale,
                    "entropy gradient {fd} vs multiplier {}",
                    theta_sigma[i]
                );
                for l in 0..2 {
                    let (ts_up, _) = member(&up);
                    let (ts_dn, _) = member(&dn);
                    hess[(l, i)] = (ts_up[l] - ts_dn[l]) / (2.0 * h);
                }
            }
            let eig = hess.symmetric_eigenvalues();
            assert!(eig.min() >= -1e-8 * eig.amax().max(1.0), "entropy Hessian not PSD");
        }
    }
    println!("[acceptance] criterion 4 (duality and calculus): PASS");
}

#[test]
fn criterion_5_exact_constraint_satisfaction() {
    let mut rng = rng(5150);
    for trial in 0..30 {
        let k = 1 + (trial % 2);
        let j = (k + 3) + (trial % 5);
        let (ws, views, _, _) = random_pool_instance(&mut rng, j, k);
        let pooled = entropy_pool(&ws, &views, &PoolConfig::default()).unwrap();
        assert!(pooled.residual_norm <= 1e-8);
        let reweighted = ws.with_probs(pooled.probs_updated).unwrap();
        let residual = view_residual(&reweighted, &views).unwrap();
        assert!(residual.amax() <= 1e-8, "trial {trial}: residual {}", residual.amax());
    }

    // Iterative pipeline version.
    let normal = NormalParams::new(DVector::zeros(1), DMatrix::from_element(1, 1, 1.0)).unwrap();
    let numerator = LogNumerator::from_normal(&normal).unwrap();
    let views = ExpectationViews::linear(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_vec(vec![0.8]),
    )
    .unwrap();
    let config = IterativeConfig::new(
        5_000,
        HmcConfig {
            n_burnin: 300,
            ..HmcConfig::new(5_000, 99)
        },
    );
    let result = run(&numerator, &views, &config).unwrap();
    let residual = view_residual(&result.scenarios, &views).unwrap();
    assert!(residual.amax() <= 1e-8);
    println!("[acceptance] criterion 5 (exact constraint satisfaction): PASS");
}

#[test]
fn criterion_6_base_invariance() {
    // Discrete composition: pooling from an exponentially pre-tilted base
    // yields the same probabilities, and the multipliers compose additively.
    let mut rng = rng(606);
    let tight = PoolConfig {
        tol: 1e-12,
        ..PoolConfig::default()
    };
    for trial in 0..25 {
        let k = 1 + (trial % 2);
        let j = (k + 4) + (trial % 6);
        let (ws, views, _, _) = random_pool_instance(&mut rng, j, k);
        let features = views.feature_matrix(ws.scenarios()).unwrap();
        let theta0 = randn_vector(&mut rng, k) * 0.6;

        let direct = entropy_pool(&ws, &views, &tight).unwrap();
        let tilted_probs = tilt_probabilities(ws.probs(), &features, &theta0).unwrap();
        let tilted_ws = ws.with_probs(tilted_probs).unwrap();
        let second = entropy_pool(&tilted_ws, &views, &tight).unwrap();

        assert!(
            (&direct.probs_updated - &second.probs_updated).amax() <= 1e-10,
            "trial {trial}: probabilities differ by {}",
            (&direct.probs_updated - &second.probs_updated).amax()
        );
        let composed = &theta0 + &second.theta_hat;
        assert!(
            (&direct.theta_hat - &composed).amax() <= 1e-8,
            "trial {trial}: multipliers do not compose"
        );
    }

    // Iterative version: a run started from a pre-tilted numerator reaches
    // the same distribution, with multipliers offset by the pre-tilt.
    let theta0 = 0.3;
    let views = ExpectationViews::linear(
        DMatrix::from_element(1, 1, 1.0),
        DVector::from_vec(vec![1.0]),
    )
    .unwrap();
    let plain = LogNumerator::new(
        1,
        |x: &DVector<f64>| -0.5 * x[0] * x[0],
        |x: &DVector<f64>| DVector::from_vec(vec![-x[0]]),
    );
    let pretilted = LogNumerator::new(
        1,
        move |x: &DVector<f64>| -0.5 * x[0] * x[0] + theta0 * x[0],
        move |x: &DVector<f64>| DVector::from_vec(vec![-x[0] + theta0]),
    )
    .with_initial_point(DVector::from_vec(vec![theta0]));

    let config = |seed| {
        IterativeConfig::new(
            30_000,
            HmcConfig {
                n_burnin: 500,
                ..HmcConfig::new(30_000, seed)
            },
        )
    };
    let run_plain = run(&plain, &views, &config(61)).unwrap();
    let run_tilted = run(&pretilted, &views, &config(62)).unwrap();
    assert!(run_plain.converged && run_tilted.converged);

    // Constrained mean is pinned for both; compare the free moment (the
    // variance) within 3 combined autocorrelation-adjusted standard errors.
    let var = |r: &IterativeResult| r.scenarios.weighted_cov()[(0, 0)];
    let se = |r: &IterativeResult| {
        let m = r.scenarios.weighted_mean()[0];
        let squares: Vec<f64> = r
            .scenarios
            .scenarios()
            .column(0)
            .iter()
            .map(|x| (x - m).powi(2))
            .collect();
        weighted_mean_se(&squares, r.scenarios.probs())
    };
    let combined_se = (se(&run_plain).powi(2) + se(&run_tilted).powi(2)).sqrt();
    assert!(
        (var(&run_plain) - var(&run_tilted)).abs() <= 3.0 * combined_se,
        "variances differ: {} vs {} (se {combined_se})",
        var(&run_plain),
        var(&run_tilted)
    );
    // Multipliers differ by the pre-tilt. Both runs tilt a unit-variance
    // Gaussian, so the multiplier is the mean shift; its standard error is
    // the mean's standard error over the final cloud.
    let se_theta = |r: &IterativeResult| {
        let col: Vec<f64> = r.scenarios.scenarios().column(0).iter().copied().collect();
        weighted_mean_se(&col, r.scenarios.probs())
    };
    let se_comb = (se_theta(&run_plain).powi(2) + se_theta(&run_tilted).powi(2)).sqrt();
    let diff = run_plain.theta_info_hat[0] - (theta0 + run_tilted.theta_info_hat[0]);
    assert!(
        diff.abs() <= 3.0 * se_comb,
        "multiplier offset {diff} exceeds 3 se {se_comb}"
    );
    println!("[acceptance] criterion 6 (base invariance): PASS");
}

#[test]
fn criterion_7_analytic_vs_numerical_cross_validation() {
    let mut rng = rng(777);
    for trial in 0..20 {
        let n = 2 + (trial % 3);
        let base =
            NormalParams::new(randn_vector(&mut rng, n) * 0.1, random_spd(&mut rng, n, 0.04))
                .unwrap();
        let gamma_mu = randn_matrix(&mut rng, 1, n);
        let gamma_sigma = randn_matrix(&mut rng, 1, n);
        let mu_scale = (&gamma_mu * base.cov() * gamma_mu.transpose())[(0, 0)].sqrt();
        let mu_info = &gamma_mu * base.mean()
            + DVector::from_element(1, rng.random_range(-0.4..0.4) * mu_scale);
        let sigma2_info = (&gamma_sigma * base.cov() * gamma_sigma.transpose())
            * rng.random_range(0.6..1.5);
        let mv = MomentViews::new(gamma_mu, mu_info, gamma_sigma, sigma2_info).unwrap();

        let analytic = solve_moment_views(&base, &mv).unwrap();
        let views = expand_moment_views(&mv, base.mean()).unwrap();
        let numerator = LogNumerator::from_normal(&base).unwrap();
        let config = IterativeConfig {
            reference: Some(analytic.updated.clone()),
            max_outer: 8,
            ..IterativeConfig::new(
                15_000,
                HmcConfig {
                    n_burnin: 400,
                    ..HmcConfig::new(15_000, 7000 + trial as u64)
                },
            )
        };
        let result = run(&numerator, &views, &config).unwrap();
        assert!(result.converged, "trial {trial} did not converge");

        // ens improves monotonically up to Monte Carlo slack.
        let steps = result.trace.steps();
        for w in steps.windows(2) {
            assert!(w[1].ens > w[0].ens - 0.02, "ens not improving: {steps:?}");
        }

        let ws = &result.scenarios;
        let mean = ws.weighted_mean();
        let cov = ws.weighted_cov();
        let probs = ws.probs();
        for i in 0..n {
            let col: Vec<f64> = ws.scenarios().column(i).iter().copied().collect();
            let se = weighted_mean_se(&col, probs);
            let diff = (mean[i] - analytic.updated.mean()[i]).abs();
            assert!(
                diff <= 3.0 * se + 1e-9,
                "trial {trial}: mean[{i}] off by {diff} (3se = {})",
                3.0 * se
            );
        }
        for i in 0..n {
            for l in i..n {
                let products: Vec<f64> = (0..ws.n_scenarios())
                    .map(|r| {
                        (ws.scenarios()[(r, i)] - mean[i]) * (ws.scenarios()[(r, l)] - mean[l])
                    })
                    .collect();
                let se = weighted_mean_se(&products, probs);
                let diff = (cov[(i, l)] - analytic.updated.cov()[(i, l)]).abs();
                assert!(
                    diff <= 3.0 * se + 1e-9,
                    "trial {trial}: cov[({i},{l})] off by {diff} (3se = {})",
                    3.0 * se
                );
            }
        }
    }
    println!("[acceptance] criterion 7 (analytic vs numerical cross-validation): PASS");
}

#[test]
fn criterion_8_hmc_sanity() {
    // Moment recovery with autocorrelation-adjusted standard errors.
    let check_moments = |normal: &NormalParams, seed: u64| {
        let numerator = LogNumerator::from_normal(normal).unwrap();
        let n = normal.dim();
        let views = ExpectationViews::linear(
            DMatrix::from_fn(1, n, |_, c| if c == 0 { 1.0 } else { 0.0 }),
            DVector::zeros(1),
        )
        .unwrap();
        let td = TiltedDensity::base(numerator, views);
        let run = sample(&td, &HmcConfig::new(100_000, seed), normal.mean()).unwrap();
        let ws = run.scenarios;
        let mean = ws.weighted_mean();
        let probs = ws.probs();
        for i in 0..n {
            let col: Vec<f64> = ws.scenarios().column(i).iter().copied().collect();
            let se = weighted_mean_se(&col, probs);
            assert!(
                (mean[i] - normal.mean()[i]).abs() <= 3.0 * se,
                "mean[{i}] {} vs {} (3se {})",
                mean[i],
                normal.mean()[i],
                3.0 * se
            );
        }
        let cov = ws.weighted_cov();
        for i in 0..n {
            for l in i..n {
                let products: Vec<f64> = (0..ws.n_scenarios())
                    .map(|r| {
                        (ws.scenarios()[(r, i)] - mean[i]) * (ws.scenarios()[(r, l)] - mean[l])
                    })
                    .collect();
                let se = weighted_mean_se(&products, probs);
                assert!(
                    (cov[(i, l)] - normal.cov()[(i, l)]).abs() <= 3.0 * se,
                    "cov ({i},{l}): {} vs {} (3se {})",
                    cov[(i, l)],
                    normal.cov()[(i, l)],
                    3.0 * se
                );
            }
        }
    };
    let std1 = NormalParams::new(DVector::zeros(1), DMatrix::identity(1, 1)).unwrap();
    check_moments(&std1, 88);
    let rho = NormalParams::new(
        DVector::zeros(2),
        DMatrix::from_row_slice(2, 2, &[1.0, 0.7, 0.7, 1.0]),
    )
    .unwrap();
    check_moments(&rho, 89);

    // Reversibility and second-order energy error of the integrator.
    let numerator = LogNumerator::from_normal(&rho).unwrap();
    let views = ExpectationViews::linear(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::zeros(1),
    )
    .unwrap();
    let td = TiltedDensity::base(numerator, views);
    let mut rng = rng(51);
    for _ in 0..5 {
        let x0 = randn_vector(&mut rng, 2);
        let p0 = randn_vector(&mut rng, 2);
        let (x1, p1) = leapfrog(&td, &x0, &p0, 0.12, 25).unwrap();
        let (x2, p2) = leapfrog(&td, &x1, &(-p1), 0.12, 25).unwrap();
        assert!((x2 - &x0).amax() <= 1e-8);
        assert!((-p2 - &p0).amax() <= 1e-8);
    }
    let hamiltonian = |x: &DVector<f64>, p: &DVector<f64>| {
        -td.log_density(x).unwrap() + 0.5 * p.norm_squared()
    };
    let x0 = DVector::from_vec(vec![1.1, -0.4]);
    let p0 = DVector::from_vec(vec![0.5, 0.2]);
    let h0 = hamiltonian(&x0, &p0);
    let energy_err = |eps: f64, n: usize| {
        let (x, p) = leapfrog(&td, &x0, &p0, eps, n).unwrap();
        (hamiltonian(&x, &p) - h0).abs()
    };
    let ratio = energy_err(0.08, 20) / energy_err(0.04, 40);
    assert!(
        (3.0..=5.0).contains(&ratio),
        "energy error ratio {ratio}, expected about 4"
    );
    println!("[acceptance] criterion 8 (HMC sanity): PASS");
}

#[test]
fn criterion_9_uncorrelated_shortcut() {
    let mut rng = rng(909);
    for trial in 0..20 {
        let n = 3 + (trial % 3);
        let base =
            NormalParams::new(randn_vector(&mut rng, n) * 0.2, random_spd(&mut rng, n, 0.05))
                .unwrap();
        let gamma_mu = randn_matrix(&mut rng, 1, n);
        // Build gamma_sigma inside the null space of gamma_mu * cov so the
        // view combinations are uncorrelated under the base.
        let cross = &gamma_mu * base.cov();
        let basis = null_basis(&cross);
        let coeffs = randn_vector(&mut rng, basis.ncols());
        let direction = &basis * coeffs;
        let gamma_sigma = DMatrix::from_row_slice(1, n, direction.as_slice());
        assert!((&gamma_mu * base.cov() * gamma_sigma.transpose()).amax() <= 1e-10);

        let mu_info = &gamma_mu * base.mean() + DVector::from_element(1, 0.1);
        let sigma2_info = (&gamma_sigma * base.cov() * gamma_sigma.transpose()) * 1.4;
        let mv = MomentViews::new(gamma_mu, mu_info, gamma_sigma, sigma2_info).unwrap();

        let shortcut = solve_uncorrelated(&base, &mv).unwrap();
        let general = solve_moment_views(&base, &mv).unwrap();
        assert!(
            (shortcut.updated.mean() - general.updated.mean()).amax() <= 1e-10,
            "trial {trial}: means differ"
        );
        assert!(
            (shortcut.updated.cov() - general.updated.cov()).amax() <= 1e-10,
            "trial {trial}: covariances differ"
        );
    }

    // The covariance views shift the mean even with orthogonal combinations:
    // dropping the correction term (the older, uncorrected update) gives a
    // visibly different mean.
    let base = NormalParams::new(
        DVector::from_vec(vec![0.1, 0.1]),
        DMatrix::identity(2, 2),
    )
    .unwrap();
    let mv = MomentViews::new(
        DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
        DVector::from_vec(vec![0.3]),
        DMatrix::from_row_slice(1, 2, &[0.0, 1.0]),
        DMatrix::from_element(1, 1, 4.0),
    )
    .unwrap();
    let solution = solve_uncorrelated(&base, &mv).unwrap();
    let uncorrected = {
        let dagger = sigma_pseudo_inverse(base.cov(), mv.gamma_mu()).unwrap();
        base.mean() + dagger * (mv.mu_info() - mv.gamma_mu() * base.mean())
    };
    let correction = solution.updated.mean() - &uncorrected;
    assert!(
        correction.amax() > 0.01,
        "correction term unexpectedly small: {correction:?}"
    );
    // The corrected mean is the one consistent with the general solver.
    let general = solve_moment_views(&base, &mv).unwrap();
    assert!((solution.updated.mean() - general.updated.mean()).amax() <= 1e-10);
    assert!((&uncorrected - general.updated.mean()).amax() > 0.01);
    println!("[acceptance] criterion 9 (uncorrelated shortcut): PASS");
}
