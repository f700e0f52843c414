//! Transfer component analysis.
//!
//! With `K` the Gram matrix over `Xs ∪ Xt`, `L = e eᵀ` the MMD coefficient
//! matrix (`e_i = 1/n_s` on source rows, `-1/n_t` on target rows) and
//! `H = I - 11ᵀ/n`, the transfer components are the leading eigenvectors of
//! `(K L K + μ I)⁻¹ K H K`. Because `K L K = (Ke)(Ke)ᵀ` is rank one, the
//! regularized inverse square root has a closed form, and the generalized
//! problem reduces to the symmetric eigenproblem of
//! `A^{-1/2} (K H K) A^{-1/2}` with `W = A^{-1/2} V`.

use nalgebra::DVector;

use super::kernel::{gram, KernelSpec};
use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::linalg::{fix_sign, sym_eigen_desc};

#[derive(Debug, Clone, PartialEq)]
pub struct TcaModel {
    pub basis: Matrix,
    pub projection: Matrix,
    pub eigenvalues: DVector<f64>,
    pub kernel: KernelSpec,
    pub mu_reg: f64,
}

impl TcaModel {
    pub fn dim(&self) -> usize {
        self.projection.ncols()
    }
}

pub fn tca_fit(xs: &Matrix, xt: &Matrix, kernel: &KernelSpec, dim: usize, mu_reg: f64) -> Result<TcaModel> {
    kernel.validate()?;
    if !(mu_reg.is_finite() && mu_reg > 0.0) {
        return Err(Error::config("mu_reg", "must be a positive real"));
    }
    let (ns, nt) = (xs.nrows(), xt.nrows());
    if ns == 0 || nt == 0 {
        return Err(Error::EmptyInput("TCA needs nonempty source and target samples".into()));
    }
    if xs.ncols() != xt.ncols() {
        return Err(Error::shape("source and target feature dimensions differ"));
    }
    let n = ns + nt;
    if dim == 0 || dim > n {
        return Err(Error::shape(format!("TCA dimension {dim} outside [1, {n}]")));
    }
    let mut basis = Matrix::zeros(n, xs.ncols());
    basis.rows_mut(0, ns).copy_from(xs);
    basis.rows_mut(ns, nt).copy_from(xt);

    let k = gram(&basis, &basis, kernel)?;
    let e = DVector::from_fn(n, |i, _| if i < ns { 1.0 / ns as f64 } else { -1.0 / nt as f64 });
    let ke = &k * &e;

    // A = (Ke)(Ke)ᵀ + μI has eigenvalue μ + |Ke|² along Ke and μ elsewhere,
    // so A^{-1/2} = cI + coef·uuᵀ with u = Ke/|Ke|.
    let norm2 = ke.norm_squared();
    let c = 1.0 / mu_reg.sqrt();
    let (u, coef) = if norm2 > 0.0 {
        (&ke / norm2.sqrt(), 1.0 / (mu_reg + norm2).sqrt() - c)
    } else {
        (DVector::zeros(n), 0.0)
    };

    // HK removes column means of K, and K H K = (HK)ᵀ(HK).
    let col_means = k.row_mean();
    let mut hk = k;
    for j in 0..n {
        let m = col_means[j];
        hk.column_mut(j).add_scalar_mut(-m);
    }
    // B = HK·A^{-1/2}; the eigenproblem is on BᵀB = A^{-1/2} K H K A^{-1/2}.
    let hku = &hk * &u;
    let mut b = hk * c;
    b.ger(coef, &hku, &u, 1.0);
    let s = b.transpose() * &b;
    let (vals, vecs) = sym_eigen_desc(&s)?;

    let v = vecs.columns(0, dim);
    let mut projection = v * c;
    projection.ger(coef, &u, &(v.transpose() * &u), 1.0);
    for col in 0..dim {
        let mut w = projection.column(col).into_owned();
        fix_sign(&mut w);
        projection.set_column(col, &w);
    }
    if projection.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("TCA projection is not finite".into()));
    }
    Ok(TcaModel {
        basis,
        projection,
        eigenvalues: vals.rows(0, dim).into_owned(),
        kernel: *kernel,
        mu_reg,
    })
}

/// `gram(X, basis) · projection`.
pub fn tca_transform(model: &TcaModel, x: &Matrix) -> Result<Matrix> {
    if x.ncols() != model.basis.ncols() {
        return Err(Error::shape(format!(
            "TCA model expects {} features, got {}",
            model.basis.ncols(),
            x.ncols()
        )));
    }
    if x.nrows() == 0 {
        return Ok(Matrix::zeros(0, model.dim()));
    }
    Ok(gram(x, &model.basis, &model.kernel)? * &model.projection)
}
