//! Thin bridge between ndarray storage and faer factorizations.

use faer::{Mat, MatRef};
use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub(crate) fn faer_from_ndarray(a: ArrayView2<'_, f64>) -> Mat<f64> {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

pub(crate) fn ndarray_from_faer(m: MatRef<'_, f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(i, j)| m[(i, j)])
}

/// Full symmetric eigendecomposition, eigenvalues ascending.
pub(crate) fn sym_eig(mat: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = mat
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|_| Error::EigNoConvergence {
            mode: 0,
            residual: f64::NAN,
        })?;
    let n = mat.nrows();
    let mut vals = Vec::with_capacity(n);
    for i in 0..n {
        vals.push(evd.S()[i]);
    }
    Ok((vals, evd.U().to_owned()))
}

/// Thin SVD `a = U diag(s) V^T` with singular values descending.
pub(crate) fn thin_svd(a: ArrayView2<'_, f64>) -> Result<(Array2<f64>, Vec<f64>, Array2<f64>)> {
    let m = faer_from_ndarray(a);
    let svd = m.thin_svd().map_err(|_| Error::EigNoConvergence {
        mode: 0,
        residual: f64::NAN,
    })?;
    let k = a.nrows().min(a.ncols());
    let mut s = Vec::with_capacity(k);
    for i in 0..k {
        s.push(svd.S()[i]);
    }
    debug_assert!(s.windows(2).all(|w| w[0] >= w[1] - 1e-12 * s[0].abs()));
    Ok((
        ndarray_from_faer(svd.U().as_ref()),
        s,
        ndarray_from_faer(svd.V().as_ref()),
    ))
}
