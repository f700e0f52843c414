use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::exec::Exec;

/// Kernel choice. `Rbf` is `exp(-gamma * ||x - y||^2)`; the "Gaussian"
/// kernel is the same family and is expressed through `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    Linear,
    Rbf { gamma: f64 },
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::Linear => Ok(()),
            KernelSpec::Rbf { gamma } if gamma.is_finite() && gamma > 0.0 => Ok(()),
            KernelSpec::Rbf { .. } => Err(Error::config("gamma", "RBF gamma must be a positive real")),
        }
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            KernelSpec::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
        }
    }
}

/// Row-major copy of a matrix's rows.
pub(crate) fn rows_of(x: &Matrix) -> Vec<Vec<f64>> {
    (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
}

/// Gram matrix `G[i][j] = k(x_i, y_j)` using the default execution mode.
pub fn gram(x: &Matrix, y: &Matrix, k: &KernelSpec) -> Result<Matrix> {
    gram_with(x, y, k, Exec::current())
}

pub fn gram_with(x: &Matrix, y: &Matrix, k: &KernelSpec, exec: Exec) -> Result<Matrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::shape(format!(
            "kernel inputs have {} and {} features",
            x.ncols(),
            y.ncols()
        )));
    }
    k.validate()?;
    let xr = rows_of(x);
    let yr = rows_of(y);
    let rows: Vec<Vec<f64>> = exec.map(xr.len(), |i| yr.iter().map(|yj| k.eval(&xr[i], yj)).collect());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Matrix::from_row_slice(x.nrows(), y.nrows(), &flat))
}

/// Median heuristic bandwidth `1 / (2 * median^2)` over pairwise Euclidean
/// distances. Inputs above 2000 rows are thinned by a fixed stride.
pub fn median_gamma(x: &Matrix) -> Result<f64> {
    if x.nrows() < 2 {
        return Err(Error::DegenerateData("median heuristic needs at least 2 rows".into()));
    }
    let stride = x.nrows().div_ceil(2000);
    let rows: Vec<Vec<f64>> = rows_of(x).into_iter().step_by(stride).collect();
    let mut d: Vec<f64> = Vec::with_capacity(rows.len() * (rows.len() - 1) / 2);
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let s: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d.push(s.sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len().is_multiple_of(2) {
        0.5 * (d[mid - 1] + d[mid])
    } else {
        d[mid]
    };
    if !(median > 0.0) {
        return Err(Error::DegenerateData("all rows coincide; no RBF bandwidth".into()));
    }
    Ok(1.0 / (2.0 * median * median))
}

/// Biased (V-statistic) squared MMD:
/// `mean(K_ss) - 2 mean(K_st) + mean(K_tt)`.
pub fn mmd_sq(xs: &Matrix, xt: &Matrix, k: &KernelSpec) -> Result<f64> {
    if xs.nrows() == 0 || xt.nrows() == 0 {
        return Err(Error::EmptyInput("MMD needs two nonempty samples".into()));
    }
    let kss = gram(xs, xs, k)?.mean();
    let ktt = gram(xt, xt, k)?.mean();
    // both cross orders are summed so that mmd_sq(a, b) == mmd_sq(b, a)
    // bit for bit despite floating-point summation order
    let kst = gram(xs, xt, k)?.mean() + gram(xt, xs, k)?.mean();
    Ok((kss + ktt) - kst)
}
