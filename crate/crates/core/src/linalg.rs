//! Small linear-algebra helpers used by the solvers.
//!
//! All inverses go through factorizations (Cholesky for positive definite
//! matrices); nothing here forms an explicit inverse unless the downstream
//! formula genuinely consumes an inverse matrix.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative tolerance for symmetry checks on covariance-like matrices.
pub(crate) const SYMMETRY_RTOL: f64 = 1e-12;

/// Ratio threshold below which a singular value counts as zero.
pub(crate) const RANK_RTOL: f64 = 1e-10;

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut s = m.clone();
    s += m.transpose();
    s *= 0.5;
    s
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, rtol: f64) -> bool {
    if m.nrows() != m.ncols() {
        return false;
    }
    let scale = m.amax().max(1e-300);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > rtol * scale {
                return false;
            }
        }
    }
    true
}

/// Cholesky factorization after symmetrization; fails loudly when the matrix
/// is not positive definite. No eigenvalue clipping is performed.
pub(crate) fn cholesky_pd(m: &DMatrix<f64>, name: &str) -> Result<Cholesky<f64, Dyn>> {
    if m.nrows() != m.ncols() {
        return Err(Error::Dimension(format!(
            "`{name}` must be square, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite(format!("matrix `{name}`")));
    }
    Cholesky::new(symmetrize(m)).ok_or_else(|| Error::NotPositiveDefinite {
        name: name.to_string(),
    })
}

/// Log-determinant from a Cholesky factor.
pub(crate) fn ln_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// `true` when every singular value is above `RANK_RTOL` times the largest.
pub(crate) fn has_full_row_rank(m: &DMatrix<f64>) -> bool {
    if m.nrows() == 0 {
        return true;
    }
    if m.nrows() > m.ncols() {
        return false;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let max = sv.max();
    max > 0.0 && sv.min() > RANK_RTOL * max
}

/// Rank of a matrix with the same relative singular-value cutoff.
pub(crate) fn rank(m: &DMatrix<f64>, scale: f64) -> usize {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0;
    }
    let sv = m.clone().svd(false, false).singular_values;
    let cutoff = RANK_RTOL * scale.max(sv.max());
    sv.iter().filter(|s| **s > cutoff).count()
}

/// Compensated (Kahan) sum; keeps probability normalization checks sharp
/// even for hundreds of thousands of entries.
pub(crate) fn kahan_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Weighted mean of the rows of `scenarios` (J x n) under `probs` (length J).
pub(crate) fn weighted_row_mean(scenarios: &DMatrix<f64>, probs: &DVector<f64>) -> DVector<f64> {
    scenarios.transpose() * probs
}

/// Weighted covariance of the rows of `scenarios` under `probs`.
pub(crate) fn weighted_row_cov(scenarios: &DMatrix<f64>, probs: &DVector<f64>) -> DMatrix<f64> {
    let n = scenarios.ncols();
    let mean = weighted_row_mean(scenarios, probs);
    let mut cov = DMatrix::zeros(n, n);
    let mut centered = DVector::zeros(n);
    for (j, row) in scenarios.row_iter().enumerate() {
        for i in 0..n {
            centered[i] = row[i] - mean[i];
        }
        cov.syger(probs[j], &centered, &centered, 1.0);
    }
    // syger only writes the lower triangle; mirror it.
    for i in 0..n {
        for j in (i + 1)..n {
            cov[(i, j)] = cov[(j, i)];
        }
    }
    cov
}
