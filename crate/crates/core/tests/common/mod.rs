//! Shared helpers for the integration suites: seeded RNG, random SPD
//! matrices, autocorrelation-adjusted standard errors, a derivative-free
//! compass minimizer, and null-space bases.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(seed)
}

pub fn randn(rng: &mut ChaCha12Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn randn_vector(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| randn(rng))
}

pub fn randn_matrix(rng: &mut ChaCha12Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| randn(rng))
}

/// Random symmetric positive definite matrix with a bounded condition number.
pub fn random_spd(rng: &mut ChaCha12Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let b = randn_matrix(rng, n, n);
    let mut s = &b * b.transpose() / n as f64;
    for i in 0..n {
        s[(i, i)] += 0.3;
    }
    s * scale
}

/// Strictly positive probability vector.
pub fn random_probs(rng: &mut ChaCha12Rng, j: usize) -> DVector<f64> {
    let mut p = DVector::from_fn(j, |_, _| rng.random_range(0.1..1.0));
    let sum = p.sum();
    p /= sum;
    p
}

/// Integrated autocorrelation time by Geyer's initial-positive-sequence rule,
/// clamped below at one so the derived standard errors stay conservative.
pub fn autocorr_time(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 10 {
        return 1.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c0 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let rho = |t: usize| -> f64 {
        let mut c = 0.0;
        for i in 0..n - t {
            c += (xs[i] - mean) * (xs[i + t] - mean);
        }
        c / (n as f64 * c0)
    };
    let mut sum_pairs = 0.0;
    let mut t = 0usize;
    while t + 1 < n.min(2000) {
        let gamma = rho(t) + rho(t + 1);
        if gamma <= 0.0 {
            break;
        }
        sum_pairs += gamma;
        t += 2;
    }
    (2.0 * sum_pairs - 1.0).max(1.0)
}

/// Standard error of the probability-weighted mean of one coordinate,
/// adjusted by the chain's integrated autocorrelation time.
pub fn weighted_mean_se(values: &[f64], probs: &DVector<f64>) -> f64 {
    let tau = autocorr_time(values);
    let mean: f64 = values.iter().zip(probs.iter()).map(|(x, p)| x * p).sum();
    let var_of_mean: f64 = values
        .iter()
        .zip(probs.iter())
        .map(|(x, p)| (p * (x - mean)).powi(2))
        .sum();
    (tau * var_of_mean).sqrt()
}

/// Derivative-free compass (pattern) search: minimize `f` from the origin,
/// halving the step radius whenever no axis move improves. Independent of
/// any gradient or duality machinery, so it can serve as an oracle.
pub fn compass_minimize(
    f: &dyn Fn(&DVector<f64>) -> f64,
    dim: usize,
    initial_radius: f64,
    min_radius: f64,
) -> f64 {
    let mut z = DVector::zeros(dim);
    let mut fz = f(&z);
    let mut radius = initial_radius;
    let mut budget = 2_000_000usize;
    while radius > min_radius && budget > 0 {
        let mut improved = false;
        'axes: for i in 0..dim {
            for sign in [1.0, -1.0] {
                let mut cand = z.clone();
                cand[i] += sign * radius;
                let fc = f(&cand);
                budget = budget.saturating_sub(1);
                if fc < fz {
                    z = cand;
                    fz = fc;
                    improved = true;
                    break 'axes;
                }
            }
        }
        if !improved {
            radius *= 0.5;
        }
    }
    fz
}

/// Orthonormal columns spanning the null space of `a`.
pub fn null_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let ata = a.transpose() * a;
    let eig = nalgebra::SymmetricEigen::new(ata);
    let max_ev = eig.eigenvalues.amax().max(1e-300);
    let mut cols = Vec::new();
    for i in 0..n {
        if eig.eigenvalues[i] < 1e-10 * max_ev {
            cols.push(eig.eigenvectors.column(i).clone_owned());
        }
    }
    let mut basis = DMatrix::zeros(n, cols.len());
    for (i, c) in cols.iter().enumerate() {
        basis.column_mut(i).copy_from(c);
    }
    basis
}
