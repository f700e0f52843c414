use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, KernelChoice, MethodGrid, MethodKind, MethodSpec};
use super::{accuracy, aggregate};
use crate::dataset::{stratified_split_labels, DomainDataset, Fold, Matrix};
use crate::deep_da::{train_adda, train_dann, train_plain, AddaModel, Classifier, DannModel, DeepArch};
use crate::error::{Error, Result};
use crate::exec::{derive_seed, Exec};
use crate::normalize::{apply_strategy, NormStrategy};
use crate::shallow_da::{kpca_fit, kpca_transform, tca_fit, tca_transform};
use crate::svm::{svm_predict, svm_train, SvmConfig};

/// Outcome of one (fold, strategy, method) job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: String,
    pub strategy: NormStrategy,
    pub method: MethodKind,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    pub selected: Option<MethodSpec>,
    pub val_accuracy: Option<f64>,
    /// SHA-256 over every fitted parameter.
    pub model_digest: Option<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub wall_clock_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub strategy: NormStrategy,
    pub method: MethodKind,
    /// Accuracies of the folds that succeeded, in fold order.
    pub fold_accuracies: Vec<f64>,
    /// Mean and population std over folds; absent when any fold failed.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// `fold: message` for each failed fold.
    pub failures: Vec<String>,
    pub wall_clock_s: f64,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        !self.failures.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub fold_names: Vec<String>,
    /// One per (strategy, method), strategies outermost, both in config order.
    pub cells: Vec<CellResult>,
    /// One per (fold, strategy, method), folds outermost.
    pub details: Vec<FoldResult>,
}

impl ExperimentReport {
    pub fn cell(&self, strategy: NormStrategy, method: MethodKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.strategy == strategy && c.method == method)
    }

    pub fn any_failed(&self) -> bool {
        self.cells.iter().any(CellResult::failed)
    }
}

/// Normalized data of one (fold, strategy) pair. Test labels are kept apart
/// and only used for scoring.
#[derive(Debug, Clone)]
pub struct FoldData {
    pub x_train: Matrix,
    pub y_train: Vec<usize>,
    pub x_test: Matrix,
    pub n_classes: usize,
}

impl FoldData {
    pub fn new(x_train: Matrix, y_train: Vec<usize>, x_test: Matrix) -> Self {
        let n_classes = y_train.iter().max().map_or(0, |m| m + 1);
        FoldData {
            x_train,
            y_train,
            x_test,
            n_classes,
        }
    }
}

/// Fitted method ready to label test rows.
#[derive(Debug, Clone)]
pub struct FittedMethod {
    pub spec: MethodSpec,
    pub predictions: Vec<usize>,
    pub val_accuracy: Option<f64>,
    pub parameters: Vec<f64>,
}

impl FittedMethod {
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for v in &self.parameters {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Index and score of the best grid point. Failed or non-finite points rank
/// last; ties go to the first point in grid order.
pub fn select_best<T>(points: &[T], eval: impl Fn(usize, &T) -> Result<f64> + Sync + Send) -> Result<(usize, f64)>
where
    T: Sync,
{
    if points.is_empty() {
        return Err(Error::config("grid", "no grid points"));
    }
    let scores = Exec::current().map(points.len(), |i| eval(i, &points[i]));
    let mut best: Option<(usize, f64)> = None;
    let mut failures = Vec::new();
    for (i, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) if v.is_finite() => {
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            Ok(v) => failures.push(format!("point {i}: non-finite score {v}")),
            Err(e) => failures.push(format!("point {i}: {e}")),
        }
    }
    best.ok_or(Error::GridExhausted(failures))
}

pub(crate) fn vstack(a: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn svm_fit_predict(
    xs: &Matrix,
    ys: &[usize],
    x_eval: &Matrix,
    kernel: &KernelChoice,
    svm: &SvmConfig,
) -> Result<(Vec<usize>, Vec<f64>)> {
    let k = kernel.resolve(xs)?;
    let model = svm_train(xs, ys, &k, svm)?;
    Ok((svm_predict(&model, x_eval)?, model.parameter_values()))
}

/// Divides every embedding column by its standard deviation over the pooled
/// source and target embeddings, so the SVM's `C` means the same thing
/// whatever the eigenvalue scale of the components.
fn rescale_embedding(zs: &mut Matrix, zt: &Matrix, ze: &mut Matrix) {
    let pooled = vstack(zs, zt);
    let n = pooled.nrows() as f64;
    for j in 0..pooled.ncols() {
        let col = pooled.column(j);
        let mean = col.mean();
        let sd = (col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
        if sd > 0.0 && sd.is_finite() {
            zs.column_mut(j).unscale_mut(sd);
            ze.column_mut(j).unscale_mut(sd);
        }
    }
}

/// Fits a shallow method on labelled `xs` with unlabelled target `xt` and
/// labels `x_eval`.
fn shallow_fit(
    spec: &MethodSpec,
    xs: &Matrix,
    ys: &[usize],
    xt: &Matrix,
    x_eval: &Matrix,
) -> Result<(Vec<usize>, Vec<f64>)> {
    match spec {
        MethodSpec::NoDaSvm { kernel, svm } => svm_fit_predict(xs, ys, x_eval, kernel, svm),
        MethodSpec::TcaSvm {
            da_kernel,
            dim,
            mu_reg,
            kernel,
            svm,
        } => {
            let k = da_kernel.resolve(&vstack(xs, xt))?;
            let tca = tca_fit(xs, xt, &k, *dim, *mu_reg)?;
            let mut zs = tca_transform(&tca, xs)?;
            let mut ze = tca_transform(&tca, x_eval)?;
            rescale_embedding(&mut zs, &tca_transform(&tca, xt)?, &mut ze);
            let (pred, mut params) = svm_fit_predict(&zs, ys, &ze, kernel, svm)?;
            params.extend(tca.projection.iter());
            Ok((pred, params))
        }
        MethodSpec::KpcaSvm {
            da_kernel,
            dim,
            kernel,
            svm,
        } => {
            let pooled = vstack(xs, xt);
            let k = da_kernel.resolve(&pooled)?;
            let kpca = kpca_fit(&pooled, &k, *dim)?;
            let mut zs = kpca_transform(&kpca, xs)?;
            let mut ze = kpca_transform(&kpca, x_eval)?;
            rescale_embedding(&mut zs, &kpca_transform(&kpca, xt)?, &mut ze);
            let (pred, mut params) = svm_fit_predict(&zs, ys, &ze, kernel, svm)?;
            params.extend(kpca.alphas.iter());
            Ok((pred, params))
        }
        _ => Err(Error::config(
            "method",
            format!("{} is not a shallow method", spec.kind()),
        )),
    }
}

enum DeepModel {
    Plain(Classifier),
    Dann(DannModel),
    Adda(AddaModel),
}

impl DeepModel {
    fn predict(&self, x: &Matrix) -> Result<Vec<usize>> {
        match self {
            DeepModel::Plain(m) => m.predict(x),
            DeepModel::Dann(m) => m.predict(x),
            DeepModel::Adda(m) => m.predict_target(x),
        }
    }

    fn parameters(&self) -> Vec<f64> {
        match self {
            DeepModel::Plain(m) => m.parameter_values(),
            DeepModel::Dann(m) => m.parameter_values(),
            DeepModel::Adda(m) => m.parameter_values(),
        }
    }
}

/// Trains a deep method with the given seed; returns the model and its best
/// source-side validation accuracy.
fn deep_fit(spec: &MethodSpec, data: &FoldData, seed: u64) -> Result<(DeepModel, f64)> {
    let n_in = data.x_train.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &["init"]));
    let (xs, ys, xt) = (&data.x_train, &data.y_train, &data.x_test);
    match spec {
        MethodSpec::NoDaAnn { arch, train } => {
            let cfg = crate::deep_da::TrainConfig { seed, ..train.clone() };
            let m = Classifier::new(arch, n_in, data.n_classes, &mut rng)?;
            let (m, r) = train_plain(m, xs, ys, &cfg)?;
            Ok((DeepModel::Plain(m), r.best_val_accuracy))
        }
        MethodSpec::Dann { arch, train, lambda } => {
            let cfg = crate::deep_da::TrainConfig { seed, ..train.clone() };
            let m = DannModel::new(arch, n_in, data.n_classes, *lambda, &mut rng)?;
            let (m, r) = train_dann(m, xs, ys, xt, &cfg)?;
            Ok((DeepModel::Dann(m), r.best_val_accuracy))
        }
        MethodSpec::Adda { arch, train, adda } => {
            let cfg = crate::deep_da::TrainConfig { seed, ..train.clone() };
            let m = AddaModel::new(arch, n_in, data.n_classes, &mut rng)?;
            let (m, r) = train_adda(m, xs, ys, xt, &cfg, adda)?;
            Ok((DeepModel::Adda(m), r.source.best_val_accuracy))
        }
        _ => Err(Error::config("method", format!("{} is not a deep method", spec.kind()))),
    }
}

fn point_seed(seed: u64, i: usize) -> u64 {
    derive_seed(seed, &["point", &i.to_string()])
}

/// Grid search plus final fit for one method on one fold.
///
/// Deep points are scored by the best source hold-out accuracy reached during
/// training, and the winning model is used as is. Shallow points are scored on
/// a stratified hold-out of the training rows, then the winner is refitted on
/// all training rows. A single-point grid skips scoring.
pub fn grid_search(points: &[MethodSpec], data: &FoldData, val_fraction: f64, seed: u64) -> Result<FittedMethod> {
    if points.is_empty() {
        return Err(Error::config("grid", "no grid points"));
    }
    if points[0].kind().is_deep() {
        let models = Exec::current().map(points.len(), |i| deep_fit(&points[i], data, point_seed(seed, i)));
        let (best, val) = select_best(&models, |_, m| match m {
            Ok((_, v)) => Ok(*v),
            Err(e) => Err(Error::Propagated(e.to_string())),
        })?;
        let model = match models.into_iter().nth(best) {
            Some(Ok((m, _))) => m,
            _ => unreachable!("selected point trained successfully"),
        };
        return Ok(FittedMethod {
            spec: points[best].clone(),
            predictions: model.predict(&data.x_test)?,
            val_accuracy: Some(val),
            parameters: model.parameters(),
        });
    }

    let (best, val) = if points.len() == 1 {
        (0, None)
    } else {
        let all: Vec<usize> = (0..data.y_train.len()).collect();
        let (inner, held) = stratified_split_labels(&data.y_train, &all, val_fraction, derive_seed(seed, &["val"]))?;
        let xs = data.x_train.select_rows(&inner);
        let ys: Vec<usize> = inner.iter().map(|&i| data.y_train[i]).collect();
        let xv = data.x_train.select_rows(&held);
        let yv: Vec<usize> = held.iter().map(|&i| data.y_train[i]).collect();
        let (i, v) = select_best(points, |_, p| {
            let (pred, _) = shallow_fit(p, &xs, &ys, &data.x_test, &xv)?;
            accuracy(&pred, &yv)
        })?;
        (i, Some(v))
    };
    let (predictions, parameters) =
        shallow_fit(&points[best], &data.x_train, &data.y_train, &data.x_test, &data.x_test)?;
    Ok(FittedMethod {
        spec: points[best].clone(),
        predictions,
        val_accuracy: val,
        parameters,
    })
}

/// Deep method whose grid decides the shared architecture: DANN when
/// configured, else the first deep method listed.
fn architecture_source(cfg: &ExperimentConfig) -> Option<&MethodGrid> {
    cfg.grid(MethodKind::Dann)
        .or_else(|| cfg.methods.iter().find(|m| m.kind().is_deep()))
}

fn cell_seed(cfg: &ExperimentConfig, fold: &str, strategy: NormStrategy, method: MethodKind) -> u64 {
    derive_seed(cfg.seed, &[fold, strategy.name(), method.name()])
}

struct Selection {
    arch: DeepArch,
    kind: MethodKind,
    fitted: FittedMethod,
    seconds: f64,
}

/// Runs the experiment described by `cfg`, honouring `cfg.jobs`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    Exec::with_jobs(cfg.jobs, || {
        let ds = cfg.load_dataset()?;
        let folds = cfg.folds(&ds)?;
        run_on_folds(cfg, &ds, &folds)
    })
}

/// Runs every (fold, strategy, method) cell on an already loaded dataset.
pub fn run_on_folds(cfg: &ExperimentConfig, ds: &DomainDataset, folds: &[Fold]) -> Result<ExperimentReport> {
    cfg.validate()?;
    if folds.is_empty() {
        return Err(Error::Protocol("no folds".into()));
    }
    let exec = Exec::current();
    let n_strat = cfg.strategies.len();
    let n_pairs = folds.len() * n_strat;

    let prepared: Vec<Result<FoldData>> = exec.map(n_pairs, |p| {
        let fold = &folds[p / n_strat];
        let strategy = cfg.strategies[p % n_strat];
        let (x_train, x_test) = apply_strategy(ds, fold, strategy, cfg.eps)?;
        Ok(FoldData::new(x_train, ds.select_labels(&fold.train_idx), x_test))
    });

    let arch_grid = architecture_source(cfg);
    let selections: Vec<Option<Result<Selection>>> = exec.map(n_pairs, |p| {
        let grid = arch_grid?;
        let fold = &folds[p / n_strat];
        let strategy = cfg.strategies[p % n_strat];
        Some(prepared[p].as_ref().map_err(clone_err).and_then(|data| {
            let start = Instant::now();
            let seed = cell_seed(cfg, &fold.name, strategy, grid.kind());
            let fitted = grid_search(&grid.expand(None, cfg.val_fraction), data, cfg.val_fraction, seed)?;
            let arch = fitted.spec.arch().cloned().expect("deep spec has an architecture");
            Ok(Selection {
                arch,
                kind: grid.kind(),
                fitted,
                seconds: start.elapsed().as_secs_f64(),
            })
        }))
    });

    let n_methods = cfg.methods.len();
    let details: Vec<FoldResult> = exec.map(n_pairs * n_methods, |c| {
        let p = c / n_methods;
        let fold = &folds[p / n_strat];
        let strategy = cfg.strategies[p % n_strat];
        let grid = &cfg.methods[c % n_methods];
        let method = grid.kind();
        let start = Instant::now();
        let mut extra = 0.0;
        let outcome = prepared[p].as_ref().map_err(clone_err).and_then(|data| {
            if !method.is_deep() {
                let seed = cell_seed(cfg, &fold.name, strategy, method);
                return grid_search(&grid.expand(None, cfg.val_fraction), data, cfg.val_fraction, seed);
            }
            let sel = selections[p]
                .as_ref()
                .expect("deep methods imply an architecture source")
                .as_ref()
                .map_err(clone_err)?;
            if sel.kind == method {
                extra = sel.seconds;
                return Ok(sel.fitted.clone());
            }
            let seed = cell_seed(cfg, &fold.name, strategy, method);
            grid_search(
                &grid.expand(Some(&sel.arch), cfg.val_fraction),
                data,
                cfg.val_fraction,
                seed,
            )
        });
        let actual = ds.select_labels(&fold.test_idx);
        let scored = outcome.and_then(|f| accuracy(&f.predictions, &actual).map(|a| (f, a)));
        let (accuracy, error, selected, val_accuracy, model_digest) = match scored {
            Ok((f, a)) => (Some(a), None, Some(f.spec.clone()), f.val_accuracy, Some(f.digest())),
            Err(e) => {
                let e = Error::Cell {
                    fold: fold.name.clone(),
                    strategy: strategy.name().into(),
                    method: method.name().into(),
                    source: Box::new(e),
                };
                (None, Some(e.to_string()), None, None, None)
            }
        };
        FoldResult {
            fold: fold.name.clone(),
            strategy,
            method,
            accuracy,
            error,
            selected,
            val_accuracy,
            model_digest,
            n_train: fold.train_idx.len(),
            n_test: fold.test_idx.len(),
            wall_clock_s: start.elapsed().as_secs_f64() + extra,
        }
    });

    let mut cells = Vec::with_capacity(n_strat * n_methods);
    for &strategy in &cfg.strategies {
        for grid in &cfg.methods {
            let method = grid.kind();
            let rows: Vec<&FoldResult> = details
                .iter()
                .filter(|d| d.strategy == strategy && d.method == method)
                .collect();
            let fold_accuracies: Vec<f64> = rows.iter().filter_map(|d| d.accuracy).collect();
            let failures: Vec<String> = rows
                .iter()
                .filter_map(|d| d.error.as_ref().map(|e| format!("{}: {e}", d.fold)))
                .collect();
            let (mean, std) = if failures.is_empty() {
                let (m, s) = aggregate(&fold_accuracies)?;
                (Some(m), Some(s))
            } else {
                (None, None)
            };
            cells.push(CellResult {
                strategy,
                method,
                fold_accuracies,
                mean,
                std,
                failures,
                wall_clock_s: rows.iter().map(|d| d.wall_clock_s).sum(),
            });
        }
    }
    Ok(ExperimentReport {
        config: cfg.clone(),
        fold_names: folds.iter().map(|f| f.name.clone()).collect(),
        cells,
        details,
    })
}

/// Errors are not `Clone`; shared failures are re-raised by message.
fn clone_err(e: &Error) -> Error {
    Error::Propagated(e.to_string())
}
