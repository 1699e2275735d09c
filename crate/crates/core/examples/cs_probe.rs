use mre_core::prelude::*;
use mre_core::case_study;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let base = case_study::base();
    let mv = case_study::views();
    let analytic = solve_moment_views(&base, &mv).unwrap();
    println!("analytic mean: {:?}", analytic.updated.mean().as_slice());
    println!("analytic std:  {:?}", analytic.updated.std().as_slice());
    let c = analytic.updated.corr();
    println!("corr12={:.6} corr13={:.6} corr34={:.6}", c[(0,1)], c[(0,2)], c[(2,3)]);
    println!("analytic in {:?}", t0.elapsed());

    let views = expand_moment_views(&mv, base.mean()).unwrap();
    let numerator = LogNumerator::from_normal(&base).unwrap();
    let t1 = Instant::now();
    let cfg = IterativeConfig {
        reference: Some(analytic.updated.clone()),
        ..IterativeConfig::new(100_000, HmcConfig::new(100_000, 1234))
    };
    let result = run(&numerator, &views, &cfg).unwrap();
    println!("iterative in {:?} converged={} steps={}", t1.elapsed(), result.converged, result.trace.len());
    for (i, s) in result.trace.steps().iter().enumerate() {
        println!("step {}: ens={:.4} mean_err={:.3e} cov_err={:.3e} dtheta={:.3e}",
            i + 1, s.ens, s.mean_error, s.cov_error, s.delta_theta_norm);
    }
    println!("theta_hat: {:?}", result.theta_info_hat.as_slice());
    let resid = view_residual(&result.scenarios, &views).unwrap();
    println!("final residual inf-norm: {:.3e}", resid.amax());
}
