use mre_core::prelude::*;
use mre_core::case_study;
use std::time::Instant;

fn main() {
    let base = case_study::base();
    let mv = case_study::views();
    let analytic = solve_moment_views(&base, &mv).unwrap();
    let views = expand_moment_views(&mv, base.mean()).unwrap();
    let numerator = LogNumerator::from_normal(&base).unwrap();
    for (j, seeds) in [(100_000usize, vec![1234u64, 42, 7, 2024]), (20_000, vec![1234, 42, 7, 2024])] {
        for seed in seeds {
            let t = Instant::now();
            let cfg = IterativeConfig {
                reference: Some(analytic.updated.clone()),
                ..IterativeConfig::new(j, HmcConfig::new(j, seed))
            };
            match run(&numerator, &views, &cfg) {
                Ok(r) => {
                    let s = r.trace.steps();
                    println!("j={j} seed={seed}: conv={} steps={} ens={} final merr={:.2e} cerr={:.2e} ({:?})",
                        r.converged, s.len(),
                        s.iter().map(|x| format!("{:.3}", x.ens)).collect::<Vec<_>>().join(","),
                        s.last().unwrap().mean_error, s.last().unwrap().cov_error, t.elapsed());
                }
                Err(e) => println!("j={j} seed={seed}: ERROR {e}"),
            }
        }
    }
}
