//! Dense symmetric positive-definite solves used for embedding recovery.

use crate::autodiff::{gemm, Array};
use crate::error::{Error, Result};
use crate::math;

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
pub fn cholesky(a: &Array) -> Result<Array> {
    let n = a.rows();
    if a.shape().len() != 2 || a.cols() != n {
        return Err(Error::shape("cholesky", a.shape(), &[n, n]));
    }
    let mut l = Array::zeros(&[n, n]);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = math::sqrt(diag);
        l.set(j, j, ljj);
        for i in j + 1..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L Lᵀ X = B` in place of `B` (`[n, m]`).
pub fn cholesky_solve(l: &Array, b: &Array) -> Result<Array> {
    let n = l.rows();
    if b.rows() != n {
        return Err(Error::shape("cholesky_solve", l.shape(), b.shape()));
    }
    let m = b.cols();
    let mut x = b.clone();
    for col in 0..m {
        // forward: L y = b
        for i in 0..n {
            let mut s = x.get(i, col);
            for k in 0..i {
                s -= l.get(i, k) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
        // backward: Lᵀ x = y
        for i in (0..n).rev() {
            let mut s = x.get(i, col);
            for k in i + 1..n {
                s -= l.get(k, i) * x.get(k, col);
            }
            x.set(i, col, s / l.get(i, i));
        }
    }
    Ok(x)
}

/// `(MᵀM + ridge·I)⁻¹ Mᵀ`, a `d × n` left inverse of the `n × d` matrix `M`.
pub fn ridge_pseudo_inverse(m: &Array, ridge: f64) -> Result<Array> {
    if m.shape().len() != 2 || m.rows() == 0 || m.cols() == 0 {
        return Err(Error::shape("ridge_pseudo_inverse", m.shape(), &[]));
    }
    if !(ridge >= 0.0) {
        return Err(Error::InvalidConfig(alloc::format!("ridge must be >= 0, got {ridge}")));
    }
    let d = m.cols();
    let mut gram = Array::zeros(&[d, d]);
    gemm(true, false, 1.0, m, m, 0.0, &mut gram);
    for i in 0..d {
        let v = gram.get(i, i) + ridge;
        gram.set(i, i, v);
    }
    let l = cholesky(&gram)?;
    cholesky_solve(&l, &m.transpose())
}

/// Scale-invariant default ridge `1e-6 · trace(MᵀM) / d`.
pub fn default_ridge(m: &Array) -> f64 {
    let d = m.cols().max(1) as f64;
    let trace: f64 = m.data().iter().map(|x| x * x).sum();
    1e-6 * trace / d
}

/// Largest absolute deviation of `a` from the identity.
pub fn max_identity_error(a: &Array) -> f64 {
    let mut err: f64 = 0.0;
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let target = if i == j { 1.0 } else { 0.0 };
            err = err.max((a.get(i, j) - target).abs());
        }
    }
    err
}
