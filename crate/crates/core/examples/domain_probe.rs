use mre_core::prelude::*;
use mre_core::case_study;
use nalgebra::{DMatrix, DVector};

fn quad_form(theta: &DVector<f64>, base: &NormalParams) -> DMatrix<f64> {
    // features layout: 3 means, 2 linear sigma combos, then upper-tri quads (0,0),(0,1),(1,1)
    let n = base.dim();
    let chol = nalgebra::Cholesky::new(base.cov().clone()).unwrap();
    let mut m = chol.inverse(); m *= -0.5; // base theta_sigma
    let t11 = theta[5]; let t12 = theta[6]; let t22 = theta[7];
    m[(0,0)] += t11; m[(1,1)] += t22;
    m[(0,1)] += t12/2.0; m[(1,0)] += t12/2.0;
    let _ = n;
    m
}

fn main() {
    let base = case_study::base();
    let mv = case_study::views();
    let views = expand_moment_views(&mv, base.mean()).unwrap();
    let numerator = LogNumerator::from_normal(&base).unwrap();
    let td = TiltedDensity::base(numerator.clone(), views.clone());
    let cfg = HmcConfig::new(100_000, 1235);
    let run = sample(&td, &cfg, base.mean()).unwrap();
    println!("step1 acc={:.3} eps={:.3}", run.acceptance_rate, run.step_size);
    let pooled = entropy_pool(&run.scenarios, &views, &PoolConfig::default()).unwrap();
    println!("step1 ens={:.4} iters={} theta={:?}", pooled.ens_value, pooled.iterations,
        pooled.theta_hat.iter().map(|v| format!("{:.2}", v)).collect::<Vec<_>>());

    // analytic multipliers for comparison
    let analytic = solve_moment_views(&base, &mv).unwrap();
    println!("analytic theta_mu={:?} theta_ss={:?}",
        analytic.theta_mu_info.as_slice(),
        analytic.theta_sigma_info.as_slice());

    let m = quad_form(&pooled.theta_hat, &base);
    let eig = m.symmetric_eigenvalues();
    println!("step1 tilted quadratic eigenvalues: {:?}", eig.as_slice());
    let m_true = quad_form(&DVector::from_vec(vec![4.953,4.953,14.757,0.0,0.0,-10.2124,-89.8693,-10.2124]), &base);
    println!("true tilted quadratic eigenvalues: {:?}", m_true.symmetric_eigenvalues().as_slice());
}
