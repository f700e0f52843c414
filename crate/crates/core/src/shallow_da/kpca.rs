//! Kernel PCA on the doubly-centred Gram matrix.

use nalgebra::{DMatrix, DVector};

use super::kernel::{gram, KernelSpec};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;

/// Components whose eigenvalue falls below this fraction of the largest are dropped.
pub const KPCA_RELATIVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct KpcaModel {
    pub basis: Matrix,
    /// Eigenvectors scaled by `1/sqrt(eigenvalue)`, one column per component.
    pub alphas: Matrix,
    pub eigenvalues: DVector<f64>,
    pub kernel: KernelSpec,
    /// Column means of the training Gram matrix.
    pub gram_col_means: DVector<f64>,
    pub gram_total_mean: f64,
}

impl KpcaModel {
    pub fn dim(&self) -> usize {
        self.alphas.ncols()
    }
}

pub fn kpca_fit(x: &Matrix, kernel: &KernelSpec, dim: usize) -> Result<KpcaModel> {
    kernel.validate()?;
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("KPCA needs at least one row".into()));
    }
    if dim == 0 || dim > n {
        return Err(Error::shape(format!("KPCA dimension {dim} outside [1, {n}]")));
    }
    let k = gram(x, x, kernel)?;
    let col_means = k.row_mean().transpose();
    let total = col_means.mean();
    let kc = DMatrix::from_fn(n, n, |i, j| k[(i, j)] - col_means[i] - col_means[j] + total);
    let (vals, vecs) = sym_eigen_desc(&kc)?;

    let scale = k.diagonal().iter().map(|v| v.abs()).sum::<f64>() / n as f64;
    let top = vals[0];
    if !(top > KPCA_RELATIVE_TOL * scale.max(f64::MIN_POSITIVE)) {
        return Err(Error::DegenerateData(
            "centred Gram matrix has no positive eigenvalue".into(),
        ));
    }
    let kept = (0..dim).take_while(|&c| vals[c] >= KPCA_RELATIVE_TOL * top).count();
    let mut alphas = vecs.columns(0, kept).into_owned();
    for c in 0..kept {
        alphas.column_mut(c).scale_mut(1.0 / vals[c].sqrt());
    }
    if alphas.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("KPCA coefficients are not finite".into()));
    }
    Ok(KpcaModel {
        basis: x.clone(),
        alphas,
        eigenvalues: vals.rows(0, kept).into_owned(),
        kernel: *kernel,
        gram_col_means: col_means,
        gram_total_mean: total,
    })
}

pub fn kpca_transform(model: &KpcaModel, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != model.basis.ncols() {
        return Err(Error::shape(format!(
            "KPCA model expects {} features, got {}",
            model.basis.ncols(),
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Ok(Matrix::zeros(0, model.dim()));
    }
    let mut kx = gram(x, &model.basis, &model.kernel)?;
    let row_means = kx.column_mean();
    for i in 0..kx.nrows() {
        for j in 0..kx.ncols() {
            kx[(i, j)] += model.gram_total_mean - row_means[i] - model.gram_col_means[j];
        }
    }
    Ok(kx * &model.alphas)
}
