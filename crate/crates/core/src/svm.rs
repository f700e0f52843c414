//! Kernel support-vector classifier trained by sequential minimal
//! optimization, with one-vs-rest for more than two classes.
//!
//! The binary solver works on the dual
//! `min ½ αᵀQα − Σα  s.t. 0 ≤ α ≤ C, yᵀα = 0` with `Q_ij = y_i y_j k(x_i, x_j)`.
//! Working pairs are chosen by maximal violation for the first index and the
//! second-order gain for the second; the solver stops when the violation gap
//! `max_{I_up} −y∇ − min_{I_low} −y∇` drops below `tol`, which bounds every
//! KKT residual by `tol`.

use serde::{Deserialize, Serialize};

use crate::dataset::Matrix;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::shallow_da::{gram, KernelSpec};

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    /// Iteration budget, in units of `50 * n` solver steps.
    pub max_passes: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        SvmConfig {
            c: 1.0,
            tol: 1e-3,
            max_passes: 20,
        }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(Error::config("c", "box constraint must be a positive real"));
        }
        if !(self.tol.is_finite() && self.tol > 0.0) {
            return Err(Error::config("tol", "must be a positive real"));
        }
        if self.max_passes == 0 {
            return Err(Error::config("max_passes", "must be at least 1"));
        }
        Ok(())
    }
}

/// Dual solution of one binary problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the binary dual for a precomputed Gram matrix and labels in {−1, +1}.
pub fn solve_binary(k: &Matrix, y: &[f64], c: f64, tol: f64, max_iter: usize) -> Result<BinarySolution> {
    let n = y.len();
    if k.nrows() != n || k.ncols() != n {
        return Err(Error::shape("Gram matrix does not match label count"));
    }
    if y.iter().any(|v| *v != 1.0 && *v != -1.0) {
        return Err(Error::DegenerateLabels("binary labels must be ±1".into()));
    }
    if !y.contains(&1.0) || !y.contains(&-1.0) {
        return Err(Error::DegenerateLabels("binary problem needs both signs".into()));
    }
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let is_upper = |a: f64| a >= c;
    let is_lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iter {
        // first index: maximal violation among I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = usize::MAX;
        for t in 0..n {
            let in_up = if y[t] > 0.0 {
                !is_upper(alpha[t])
            } else {
                !is_lower(alpha[t])
            };
            if in_up && -y[t] * grad[t] >= gmax {
                gmax = -y[t] * grad[t];
                i_sel = t;
            }
        }
        if i_sel == usize::MAX {
            converged = true;
            break;
        }
        let i = i_sel;
        // second index: best second-order decrease among I_low
        let mut gmin = f64::INFINITY;
        let mut best_obj = f64::INFINITY;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let in_low = if y[t] > 0.0 {
                !is_lower(alpha[t])
            } else {
                !is_upper(alpha[t])
            };
            if !in_low {
                continue;
            }
            let v = -y[t] * grad[t];
            gmin = gmin.min(v);
            let diff = gmax - v;
            if diff > 0.0 {
                let mut quad = k[(i, i)] + k[(t, t)] - 2.0 * k[(i, t)];
                if quad <= 0.0 {
                    quad = TAU;
                }
                let obj = -(diff * diff) / quad;
                if obj <= best_obj {
                    best_obj = obj;
                    j_sel = t;
                }
            }
        }
        if gmax - gmin < tol || j_sel == usize::MAX {
            converged = true;
            break;
        }
        let j = j_sel;
        iterations += 1;

        let (old_i, old_j) = (alpha[i], alpha[j]);
        let mut quad = k[(i, i)] + k[(j, j)] - 2.0 * k[(i, j)];
        if quad <= 0.0 {
            quad = TAU;
        }
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * k[(i, t)] * di + y[j] * k[(j, t)] * dj);
        }
    }

    // bias: average over free multipliers, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if is_upper(alpha[t]) {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if is_lower(alpha[t]) {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else {
        0.5 * (ub + lb)
    };
    if !rho.is_finite() || alpha.iter().any(|a| !a.is_finite()) {
        return Err(Error::Numeric("SMO produced non-finite multipliers".into()));
    }
    Ok(BinarySolution {
        alpha,
        bias: -rho,
        iterations,
        converged,
    })
}

/// Largest KKT residual of a binary solution:
/// `α=0 ⇒ y f ≥ 1`, `0<α<C ⇒ y f = 1`, `α=C ⇒ y f ≤ 1`.
pub fn kkt_violation(k: &Matrix, y: &[f64], sol: &BinarySolution, c: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        let f: f64 = (0..n).map(|j| sol.alpha[j] * y[j] * k[(i, j)]).sum::<f64>() + sol.bias;
        let margin = y[i] * f;
        let a = sol.alpha[i];
        let v = if a <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if a >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Residual of the equality constraint `Σ α_i y_i`.
pub fn dual_balance(y: &[f64], sol: &BinarySolution) -> f64 {
    y.iter().zip(&sol.alpha).map(|(y, a)| y * a).sum()
}

#[derive(Debug, Clone, PartialEq)]
struct Machine {
    support: Matrix,
    coef: Vec<f64>,
    bias: f64,
}

impl Machine {
    fn from_solution(x: &Matrix, y: &[f64], sol: &BinarySolution) -> Machine {
        let idx: Vec<usize> = (0..y.len()).filter(|&i| sol.alpha[i] > 0.0).collect();
        Machine {
            support: x.select_rows(&idx),
            coef: idx.iter().map(|&i| sol.alpha[i] * y[i]).collect(),
            bias: sol.bias,
        }
    }

    fn decision(&self, x: &Matrix, kernel: &KernelSpec) -> Result<Vec<f64>> {
        if self.support.nrows() == 0 {
            return Ok(vec![self.bias; x.nrows()]);
        }
        let g = gram(x, &self.support, kernel)?;
        Ok((0..x.nrows())
            .map(|i| g.row(i).iter().zip(&self.coef).map(|(k, a)| k * a).sum::<f64>() + self.bias)
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: Vec<usize>,
    kernel: KernelSpec,
    config: SvmConfig,
    /// One machine for two classes (positive = second class), else one per class.
    machines: Vec<Machine>,
}

impl SvmModel {
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn n_support(&self) -> usize {
        self.machines.iter().map(|m| m.support.nrows()).sum()
    }

    /// Per-class decision values, one column per entry of [`classes`](Self::classes).
    pub fn decision_values(&self, x: &Matrix) -> Result<Matrix> {
        let dim = self.machines[0].support.ncols();
        if x.ncols() != dim {
            return Err(Error::shape(format!("SVM expects {dim} features, got {}", x.ncols())));
        }
        let mut out = Matrix::zeros(x.nrows(), self.classes.len());
        if x.nrows() == 0 {
            return Ok(out);
        }
        if self.classes.len() == 2 {
            let f = self.machines[0].decision(x, &self.kernel)?;
            for (i, v) in f.into_iter().enumerate() {
                out[(i, 0)] = -v;
                out[(i, 1)] = v;
            }
        } else {
            for (c, m) in self.machines.iter().enumerate() {
                for (i, v) in m.decision(x, &self.kernel)?.into_iter().enumerate() {
                    out[(i, c)] = v;
                }
            }
        }
        Ok(out)
    }

    /// Fingerprint input: every stored parameter in a fixed order.
    pub fn parameter_values(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for m in &self.machines {
            v.extend(m.support.iter());
            v.extend(&m.coef);
            v.push(m.bias);
        }
        v
    }
}

pub fn svm_train(x: &Matrix, labels: &[usize], kernel: &KernelSpec, config: &SvmConfig) -> Result<SvmModel> {
    config.validate()?;
    kernel.validate()?;
    let n = x.nrows();
    if labels.len() != n {
        return Err(Error::shape("label count differs from row count"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite feature value".into()));
    }
    let mut classes: Vec<usize> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();
    if classes.len() < 2 || n < 2 {
        return Err(Error::DegenerateLabels(format!(
            "SVM needs at least two classes, found {}",
            classes.len()
        )));
    }
    let k = gram(x, x, kernel)?;
    let max_iter = config.max_passes.saturating_mul(50).saturating_mul(n.max(100));
    let problem = |positive: usize| -> Result<Machine> {
        let y: Vec<f64> = labels.iter().map(|&l| if l == positive { 1.0 } else { -1.0 }).collect();
        let sol = solve_binary(&k, &y, config.c, config.tol, max_iter)?;
        Ok(Machine::from_solution(x, &y, &sol))
    };
    let machines = if classes.len() == 2 {
        vec![problem(classes[1])?]
    } else {
        Exec::current()
            .map(classes.len(), |c| problem(classes[c]))
            .into_iter()
            .collect::<Result<Vec<_>>>()?
    };
    Ok(SvmModel {
        classes,
        kernel: *kernel,
        config: *config,
        machines,
    })
}

/// Argmax of the per-class decision values; ties go to the smaller class id.
pub fn svm_predict(model: &SvmModel, x: &Matrix) -> Result<Vec<usize>> {
    let d = model.decision_values(x)?;
    Ok((0..d.nrows())
        .map(|i| {
            let mut best = 0;
            for c in 1..d.ncols() {
                if d[(i, c)] > d[(i, best)] {
                    best = c;
                }
            }
            model.classes[best]
        })
        .collect())
}
