use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::BetheHessian;
use crate::{Error, Result};

/// The `count` smallest eigenvalues, ascending, by full dense decomposition.
pub fn dense_eigenvalues(h: &BetheHessian, count: usize) -> Vec<f64> {
    let mut values: Vec<f64> = h.to_dense().symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    values.truncate(count);
    values
}

/// Lowest eigenpair of the Jacobi-scaled matrix `S H S`, `S = diag(H_ii)^-1/2`.
///
/// `S H S` is congruent to `H`, so `mu` has the sign of `lambda_1(H)` and
/// both vanish together. `mu` is computed to absolute accuracy of a few
/// `eps` even when the entries of `H` span many orders of magnitude, but
/// near a root of `lambda_1(H)` it can be far smaller than that. The
/// Rayleigh quotient of `x = S w`, evaluated by
/// [`BetheHessian::quadratic_form`], then carries the information: it is an
/// upper bound on `lambda_1(H)` and, with an accurate `w`, equal to it up to
/// `rayleigh_error`.
#[derive(Clone, Debug)]
pub struct ScaledLowest {
    pub mu: f64,
    /// `mu_2 - mu_1` of the scaled matrix.
    pub gap: f64,
    pub rayleigh: f64,
    /// Error estimate of `rayleigh` as an approximation of `lambda_1(H)`:
    /// rounding in the quadratic form plus the eigenvector error
    /// `eps |SHS| / gap` entering quadratically.
    pub rayleigh_error: f64,
    /// Unit-norm `S w`.
    pub vector: Vec<f64>,
}

fn scaled(h: &BetheHessian) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let diag = h.diagonal();
    if let Some(d) = diag.iter().find(|&&d| !(d > 0.0)) {
        return Err(Error::Precondition(format!(
            "Jacobi scaling needs a positive diagonal, found {d}"
        )));
    }
    let s: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut m = DMatrix::identity(diag.len(), diag.len());
    for &(i, j, v) in h.off_diagonal() {
        let x = v * s[i] * s[j];
        m[(i, j)] += x;
        m[(j, i)] += x;
    }
    Ok((m, s))
}

/// Smallest eigenvalue of `S H S` without eigenvectors.
pub(crate) fn scaled_lowest_value(h: &BetheHessian) -> Result<f64> {
    let (m, _) = scaled(h)?;
    Ok(m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min))
}

pub fn scaled_lowest(h: &BetheHessian) -> Result<ScaledLowest> {
    const EPS: f64 = 1e-15;
    let (m, s) = scaled(h)?;
    let norm = m.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mu = eig.eigenvalues[order[0]];
    let gap = order.get(1).map_or(f64::INFINITY, |&k| eig.eigenvalues[k] - mu);
    let w = eig.eigenvectors.column(order[0]);
    let mut x = DVector::from_fn(s.len(), |i, _| s[i] * w[i]);
    let norm_sq = x.norm_squared();
    let (q, scale) = h.quadratic_form(x.as_slice());
    let dw = (EPS * norm / gap).min(1.0);
    let rayleigh_error = (4.0 * EPS * scale + norm * dw * dw) / norm_sq;
    x /= norm_sq.sqrt();
    Ok(ScaledLowest {
        mu,
        gap,
        rayleigh: q / norm_sq,
        rayleigh_error,
        vector: x.iter().copied().collect(),
    })
}
