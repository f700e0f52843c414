use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    generate_synthetic, hlso_folds, load_csv, loso_folds, subsample_per_subject, CsvSchema, DomainDataset, Fold,
    Matrix, SyntheticShiftConfig,
};
use crate::deep_da::{Activation, AddaOptions, DeepArch, TrainConfig};
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::normalize::{NormStrategy, DEFAULT_EPS};
use crate::shallow_da::{median_gamma, KernelSpec};
use crate::svm::SvmConfig;

/// The six compared methods, in table column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "noDA-ANN", alias = "NoDaAnn")]
    NoDaAnn,
    #[serde(rename = "DANN", alias = "Dann")]
    Dann,
    #[serde(rename = "ADDA", alias = "Adda")]
    Adda,
    #[serde(rename = "noDA-SVM", alias = "NoDaSvm")]
    NoDaSvm,
    #[serde(rename = "TCA-SVM", alias = "TcaSvm")]
    TcaSvm,
    #[serde(rename = "KPCA-SVM", alias = "KpcaSvm")]
    KpcaSvm,
}

impl MethodKind {
    pub const ALL: [MethodKind; 6] = [
        MethodKind::NoDaAnn,
        MethodKind::Dann,
        MethodKind::Adda,
        MethodKind::NoDaSvm,
        MethodKind::TcaSvm,
        MethodKind::KpcaSvm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MethodKind::NoDaAnn => "noDA-ANN",
            MethodKind::Dann => "DANN",
            MethodKind::Adda => "ADDA",
            MethodKind::NoDaSvm => "noDA-SVM",
            MethodKind::TcaSvm => "TCA-SVM",
            MethodKind::KpcaSvm => "KPCA-SVM",
        }
    }

    pub fn is_deep(self) -> bool {
        matches!(self, MethodKind::NoDaAnn | MethodKind::Dann | MethodKind::Adda)
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Kernel as written in a config. `rbf` without `gamma` uses the median
/// heuristic on the data the kernel is fitted to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum KernelChoice {
    Linear,
    Rbf {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma: Option<f64>,
    },
}

impl KernelChoice {
    pub fn resolve(&self, x: &Matrix) -> Result<KernelSpec> {
        let k = match *self {
            KernelChoice::Linear => KernelSpec::Linear,
            KernelChoice::Rbf { gamma: Some(gamma) } => KernelSpec::Rbf { gamma },
            KernelChoice::Rbf { gamma: None } => KernelSpec::Rbf {
                gamma: median_gamma(x)?,
            },
        };
        k.validate()?;
        Ok(k)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            KernelChoice::Rbf { gamma: Some(g) } => KernelSpec::Rbf { gamma: g }.validate(),
            _ => Ok(()),
        }
    }
}

fn linear() -> Vec<KernelChoice> {
    vec![KernelChoice::Linear]
}
fn unit() -> Vec<f64> {
    vec![1.0]
}
fn two_dims() -> Vec<usize> {
    vec![2]
}
fn svm_tol() -> f64 {
    SvmConfig::default().tol
}
fn svm_passes() -> usize {
    SvmConfig::default().max_passes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SvmGrid {
    #[serde(default = "unit")]
    pub c: Vec<f64>,
    #[serde(default = "linear")]
    pub kernel: Vec<KernelChoice>,
    #[serde(default = "svm_tol")]
    pub tol: f64,
    #[serde(default = "svm_passes")]
    pub max_passes: usize,
}

impl Default for SvmGrid {
    fn default() -> Self {
        SvmGrid {
            c: unit(),
            kernel: linear(),
            tol: svm_tol(),
            max_passes: svm_passes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TcaGrid {
    #[serde(default = "two_dims")]
    pub dim: Vec<usize>,
    #[serde(default = "unit")]
    pub mu_reg: Vec<f64>,
    #[serde(default = "linear")]
    pub da_kernel: Vec<KernelChoice>,
    #[serde(default = "unit")]
    pub c: Vec<f64>,
    #[serde(default = "linear")]
    pub kernel: Vec<KernelChoice>,
    #[serde(default = "svm_tol")]
    pub tol: f64,
    #[serde(default = "svm_passes")]
    pub max_passes: usize,
}

impl Default for TcaGrid {
    fn default() -> Self {
        TcaGrid {
            dim: two_dims(),
            mu_reg: unit(),
            da_kernel: linear(),
            c: unit(),
            kernel: linear(),
            tol: svm_tol(),
            max_passes: svm_passes(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KpcaGrid {
    #[serde(default = "two_dims")]
    pub dim: Vec<usize>,
    #[serde(default = "linear")]
    pub da_kernel: Vec<KernelChoice>,
    #[serde(default = "unit")]
    pub c: Vec<f64>,
    #[serde(default = "linear")]
    pub kernel: Vec<KernelChoice>,
    #[serde(default = "svm_tol")]
    pub tol: f64,
    #[serde(default = "svm_passes")]
    pub max_passes: usize,
}

impl Default for KpcaGrid {
    fn default() -> Self {
        KpcaGrid {
            dim: two_dims(),
            da_kernel: linear(),
            c: unit(),
            kernel: linear(),
            tol: svm_tol(),
            max_passes: svm_passes(),
        }
    }
}

/// Hyperparameter lists of a deep method. `width` is the node count of the
/// single hidden layer in the extractor and in each head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeepGrid {
    pub width: Vec<usize>,
    pub feature_dim: Vec<usize>,
    pub activation: Vec<Activation>,
    pub learning_rate: Vec<f64>,
    /// Gradient reversal strength; DANN only.
    pub lambda: Vec<f64>,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// ADDA only.
    pub adversarial_epochs: usize,
    /// ADDA only; the stage-one rate when absent.
    pub adversarial_lr: Vec<Option<f64>>,
}

impl Default for DeepGrid {
    fn default() -> Self {
        DeepGrid {
            width: vec![64],
            feature_dim: vec![16],
            activation: vec![Activation::Relu],
            learning_rate: vec![1e-3],
            lambda: vec![1.0],
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            adversarial_epochs: AddaOptions::default().adversarial_epochs,
            adversarial_lr: vec![None],
        }
    }
}

/// A method with its hyperparameter lists.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MethodGrid {
    #[serde(rename = "noDA-ANN", alias = "NoDaAnn")]
    NoDaAnn(DeepGrid),
    #[serde(rename = "DANN", alias = "Dann")]
    Dann(DeepGrid),
    #[serde(rename = "ADDA", alias = "Adda")]
    Adda(DeepGrid),
    #[serde(rename = "noDA-SVM", alias = "NoDaSvm")]
    NoDaSvm(SvmGrid),
    #[serde(rename = "TCA-SVM", alias = "TcaSvm")]
    TcaSvm(TcaGrid),
    #[serde(rename = "KPCA-SVM", alias = "KpcaSvm")]
    KpcaSvm(KpcaGrid),
}

/// One concrete point of a [`MethodGrid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum MethodSpec {
    #[serde(rename = "noDA-ANN")]
    NoDaAnn { arch: DeepArch, train: TrainConfig },
    #[serde(rename = "DANN")]
    Dann {
        arch: DeepArch,
        train: TrainConfig,
        lambda: f64,
    },
    #[serde(rename = "ADDA")]
    Adda {
        arch: DeepArch,
        train: TrainConfig,
        adda: AddaOptions,
    },
    #[serde(rename = "noDA-SVM")]
    NoDaSvm { kernel: KernelChoice, svm: SvmConfig },
    #[serde(rename = "TCA-SVM")]
    TcaSvm {
        da_kernel: KernelChoice,
        dim: usize,
        mu_reg: f64,
        kernel: KernelChoice,
        svm: SvmConfig,
    },
    #[serde(rename = "KPCA-SVM")]
    KpcaSvm {
        da_kernel: KernelChoice,
        dim: usize,
        kernel: KernelChoice,
        svm: SvmConfig,
    },
}

impl MethodSpec {
    pub fn kind(&self) -> MethodKind {
        match self {
            MethodSpec::NoDaAnn { .. } => MethodKind::NoDaAnn,
            MethodSpec::Dann { .. } => MethodKind::Dann,
            MethodSpec::Adda { .. } => MethodKind::Adda,
            MethodSpec::NoDaSvm { .. } => MethodKind::NoDaSvm,
            MethodSpec::TcaSvm { .. } => MethodKind::TcaSvm,
            MethodSpec::KpcaSvm { .. } => MethodKind::KpcaSvm,
        }
    }

    pub fn arch(&self) -> Option<&DeepArch> {
        match self {
            MethodSpec::NoDaAnn { arch, .. } | MethodSpec::Dann { arch, .. } | MethodSpec::Adda { arch, .. } => {
                Some(arch)
            }
            _ => None,
        }
    }
}

fn nonempty<T>(field: &str, v: &[T]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::config(field, "grid list must not be empty"));
    }
    Ok(())
}

fn positive_reals(field: &str, v: &[f64]) -> Result<()> {
    nonempty(field, v)?;
    if v.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::config(field, "values must be positive reals"));
    }
    Ok(())
}

fn positive_counts(field: &str, v: &[usize]) -> Result<()> {
    nonempty(field, v)?;
    if v.contains(&0) {
        return Err(Error::config(field, "values must be at least 1"));
    }
    Ok(())
}

fn kernels(field: &str, v: &[KernelChoice]) -> Result<()> {
    nonempty(field, v)?;
    v.iter().try_for_each(KernelChoice::validate)
}

fn svm_config(c: f64, tol: f64, max_passes: usize) -> SvmConfig {
    SvmConfig { c, tol, max_passes }
}

impl MethodGrid {
    pub fn kind(&self) -> MethodKind {
        match self {
            MethodGrid::NoDaAnn(_) => MethodKind::NoDaAnn,
            MethodGrid::Dann(_) => MethodKind::Dann,
            MethodGrid::Adda(_) => MethodKind::Adda,
            MethodGrid::NoDaSvm(_) => MethodKind::NoDaSvm,
            MethodGrid::TcaSvm(_) => MethodKind::TcaSvm,
            MethodGrid::KpcaSvm(_) => MethodKind::KpcaSvm,
        }
    }

    /// A grid with the library defaults for `kind`.
    pub fn default_for(kind: MethodKind) -> Self {
        match kind {
            MethodKind::NoDaAnn => MethodGrid::NoDaAnn(DeepGrid::default()),
            MethodKind::Dann => MethodGrid::Dann(DeepGrid::default()),
            MethodKind::Adda => MethodGrid::Adda(DeepGrid::default()),
            MethodKind::NoDaSvm => MethodGrid::NoDaSvm(SvmGrid::default()),
            MethodKind::TcaSvm => MethodGrid::TcaSvm(TcaGrid::default()),
            MethodKind::KpcaSvm => MethodGrid::KpcaSvm(KpcaGrid::default()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MethodGrid::NoDaAnn(g) | MethodGrid::Dann(g) | MethodGrid::Adda(g) => {
                positive_counts("width", &g.width)?;
                positive_counts("feature_dim", &g.feature_dim)?;
                nonempty("activation", &g.activation)?;
                nonempty("learning_rate", &g.learning_rate)?;
                if g.learning_rate.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::config("learning_rate", "values must be non-negative reals"));
                }
                nonempty("lambda", &g.lambda)?;
                if g.lambda.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::config("lambda", "values must be non-negative reals"));
                }
                nonempty("adversarial_lr", &g.adversarial_lr)?;
                if g.adversarial_lr.iter().flatten().any(|x| !(x.is_finite() && *x >= 0.0)) {
                    return Err(Error::config("adversarial_lr", "values must be non-negative reals"));
                }
                for (f, v) in [
                    ("batch_size", g.batch_size),
                    ("max_epochs", g.max_epochs),
                    ("patience", g.patience),
                ] {
                    if v == 0 {
                        return Err(Error::config(f, "must be at least 1"));
                    }
                }
                Ok(())
            }
            MethodGrid::NoDaSvm(g) => {
                positive_reals("c", &g.c)?;
                kernels("kernel", &g.kernel)?;
                svm_config(1.0, g.tol, g.max_passes).validate()
            }
            MethodGrid::TcaSvm(g) => {
                positive_counts("dim", &g.dim)?;
                positive_reals("mu_reg", &g.mu_reg)?;
                kernels("da_kernel", &g.da_kernel)?;
                positive_reals("c", &g.c)?;
                kernels("kernel", &g.kernel)?;
                svm_config(1.0, g.tol, g.max_passes).validate()
            }
            MethodGrid::KpcaSvm(g) => {
                positive_counts("dim", &g.dim)?;
                kernels("da_kernel", &g.da_kernel)?;
                positive_reals("c", &g.c)?;
                kernels("kernel", &g.kernel)?;
                svm_config(1.0, g.tol, g.max_passes).validate()
            }
        }
    }

    /// Architectures of a deep grid in declared order (width, then feature
    /// dimension, then activation varying fastest).
    pub fn architectures(&self) -> Vec<DeepArch> {
        let g = match self {
            MethodGrid::NoDaAnn(g) | MethodGrid::Dann(g) | MethodGrid::Adda(g) => g,
            _ => return Vec::new(),
        };
        let mut out = Vec::new();
        for &w in &g.width {
            for &f in &g.feature_dim {
                for &a in &g.activation {
                    out.push(DeepArch::new(vec![w], f, vec![w], a));
                }
            }
        }
        out
    }

    /// Cartesian expansion in declared order, last-listed field varying
    /// fastest. With `arch` set, deep grids use that architecture only.
    pub fn expand(&self, arch: Option<&DeepArch>, val_fraction: f64) -> Vec<MethodSpec> {
        let mut out = Vec::new();
        match self {
            MethodGrid::NoDaAnn(g) | MethodGrid::Dann(g) | MethodGrid::Adda(g) => {
                let archs = match arch {
                    Some(a) => vec![a.clone()],
                    None => self.architectures(),
                };
                for a in archs {
                    for &lr in &g.learning_rate {
                        let train = TrainConfig {
                            learning_rate: lr,
                            batch_size: g.batch_size,
                            max_epochs: g.max_epochs,
                            patience: g.patience,
                            seed: 0,
                            val_fraction,
                        };
                        match self {
                            MethodGrid::NoDaAnn(_) => out.push(MethodSpec::NoDaAnn { arch: a.clone(), train }),
                            MethodGrid::Dann(_) => {
                                for &lambda in &g.lambda {
                                    out.push(MethodSpec::Dann {
                                        arch: a.clone(),
                                        train: train.clone(),
                                        lambda,
                                    });
                                }
                            }
                            _ => {
                                for &adversarial_lr in &g.adversarial_lr {
                                    out.push(MethodSpec::Adda {
                                        arch: a.clone(),
                                        train: train.clone(),
                                        adda: AddaOptions {
                                            adversarial_epochs: g.adversarial_epochs,
                                            adversarial_lr,
                                        },
                                    });
                                }
                            }
                        }
                    }
                }
            }
            MethodGrid::NoDaSvm(g) => {
                for &kernel in &g.kernel {
                    for &c in &g.c {
                        out.push(MethodSpec::NoDaSvm {
                            kernel,
                            svm: svm_config(c, g.tol, g.max_passes),
                        });
                    }
                }
            }
            MethodGrid::TcaSvm(g) => {
                for &da_kernel in &g.da_kernel {
                    for &dim in &g.dim {
                        for &mu_reg in &g.mu_reg {
                            for &kernel in &g.kernel {
                                for &c in &g.c {
                                    out.push(MethodSpec::TcaSvm {
                                        da_kernel,
                                        dim,
                                        mu_reg,
                                        kernel,
                                        svm: svm_config(c, g.tol, g.max_passes),
                                    });
                                }
                            }
                        }
                    }
                }
            }
            MethodGrid::KpcaSvm(g) => {
                for &da_kernel in &g.da_kernel {
                    for &dim in &g.dim {
                        for &kernel in &g.kernel {
                            for &c in &g.c {
                                out.push(MethodSpec::KpcaSvm {
                                    da_kernel,
                                    dim,
                                    kernel,
                                    svm: svm_config(c, g.tol, g.max_passes),
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    #[serde(alias = "LOSO")]
    Loso,
    #[serde(alias = "HLSO")]
    Hlso,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticShiftConfig),
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
    },
}

fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_val_fraction() -> f64 {
    0.2
}
fn default_projection_folds() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub protocol: Protocol,
    pub strategies: Vec<NormStrategy>,
    pub methods: Vec<MethodGrid>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    /// Keep at most this many rows per subject, class-stratified.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample_per_subject: Option<usize>,
    /// Source-side hold-out fraction used for model selection and early stopping.
    #[serde(default = "default_val_fraction")]
    pub val_fraction: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Number of leading folds for which 2-D projections are written.
    #[serde(default = "default_projection_folds")]
    pub projection_folds: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn new(
        dataset: DatasetSource,
        protocol: Protocol,
        strategies: Vec<NormStrategy>,
        methods: Vec<MethodGrid>,
    ) -> Self {
        ExperimentConfig {
            dataset,
            protocol,
            strategies,
            methods,
            seed: 0,
            output_dir: None,
            subsample_per_subject: None,
            val_fraction: default_val_fraction(),
            eps: default_eps(),
            projection_folds: default_projection_folds(),
            jobs: None,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(s).map_err(|e| Error::config("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json_str(&text)
    }

    /// Checks everything that can be checked without loading data.
    pub fn validate(&self) -> Result<()> {
        if self.strategies.is_empty() {
            return Err(Error::config("strategies", "at least one strategy is required"));
        }
        if self.strategies.iter().collect::<BTreeSet<_>>().len() != self.strategies.len() {
            return Err(Error::config("strategies", "duplicate strategy"));
        }
        if self.methods.is_empty() {
            return Err(Error::config("methods", "at least one method is required"));
        }
        let kinds: BTreeSet<MethodKind> = self.methods.iter().map(MethodGrid::kind).collect();
        if kinds.len() != self.methods.len() {
            return Err(Error::config("methods", "each method kind may appear once"));
        }
        for m in &self.methods {
            m.validate().map_err(|e| match e {
                Error::Config { field, message } => Error::config(format!("methods.{}.{field}", m.kind()), message),
                other => other,
            })?;
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::config("val_fraction", "must lie in (0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps", "must be a positive real"));
        }
        if self.jobs == Some(0) {
            return Err(Error::config("jobs", "must be at least 1"));
        }
        if self.subsample_per_subject == Some(0) {
            return Err(Error::config("subsample_per_subject", "must be at least 1"));
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
            if self.protocol == Protocol::Hlso && s.n_sessions < 2 {
                return Err(Error::Protocol("HLSO needs at least 2 sessions per subject".into()));
            }
        }
        Ok(())
    }

    /// Loads (or generates) the dataset and applies subsampling.
    pub fn load_dataset(&self) -> Result<DomainDataset> {
        let ds = match &self.dataset {
            DatasetSource::Synthetic(s) => generate_synthetic(s)?,
            DatasetSource::Csv { path, schema } => load_csv(path, schema)?,
        };
        match self.subsample_per_subject {
            Some(k) => subsample_per_subject(&ds, k, derive_seed(self.seed, &["subsample"])),
            None => Ok(ds),
        }
    }

    pub fn folds(&self, ds: &DomainDataset) -> Result<Vec<Fold>> {
        match self.protocol {
            Protocol::Loso => loso_folds(ds),
            Protocol::Hlso => hlso_folds(ds),
        }
    }

    pub fn grid(&self, kind: MethodKind) -> Option<&MethodGrid> {
        self.methods.iter().find(|m| m.kind() == kind)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        for k in MethodKind::ALL {
            let s = serde_json::to_string(&k).unwrap();
            assert_eq!(s, format!("\"{}\"", k.name()));
            assert_eq!(serde_json::from_str::<MethodKind>(&s).unwrap(), k);
        }
    }

    #[test]
    fn grid_parses_with_defaults_and_rejects_unknown_fields() {
        let g: MethodGrid = serde_json::from_str(r#"{"kind": "TCA-SVM", "dim": [2, 4]}"#).unwrap();
        let MethodGrid::TcaSvm(t) = &g else { panic!() };
        assert_eq!(t.dim, vec![2, 4]);
        assert_eq!(t.c, vec![1.0]);
        assert!(serde_json::from_str::<MethodGrid>(r#"{"kind": "TCA-SVM", "dims": [2]}"#).is_err());
        let k: Vec<KernelChoice> = serde_json::from_str(r#"[{"kind":"rbf"},{"kind":"rbf","gamma":0.5}]"#).unwrap();
        assert_eq!(k[0], KernelChoice::Rbf { gamma: None });
    }

    #[test]
    fn expansion_is_cartesian_in_declared_order() {
        let g = MethodGrid::NoDaSvm(SvmGrid {
            c: vec![0.1, 1.0, 10.0],
            kernel: vec![KernelChoice::Linear, KernelChoice::Rbf { gamma: Some(0.5) }],
            ..SvmGrid::default()
        });
        let pts = g.expand(None, 0.2);
        assert_eq!(pts.len(), 6);
        match (&pts[0], &pts[1], &pts[3]) {
            (
                MethodSpec::NoDaSvm { kernel: k0, svm: s0 },
                MethodSpec::NoDaSvm { svm: s1, .. },
                MethodSpec::NoDaSvm { kernel: k3, .. },
            ) => {
                assert_eq!(*k0, KernelChoice::Linear);
                assert_eq!((s0.c, s1.c), (0.1, 1.0));
                assert_eq!(*k3, KernelChoice::Rbf { gamma: Some(0.5) });
            }
            _ => panic!(),
        }
        let d = MethodGrid::Dann(DeepGrid {
            width: vec![16, 64, 256],
            learning_rate: vec![0.01, 0.001],
            lambda: vec![0.5, 1.0],
            ..DeepGrid::default()
        });
        assert_eq!(d.expand(None, 0.1).len(), 12);
        let arch = d.architectures()[1].clone();
        assert_eq!(arch.extractor_hidden, vec![64]);
        let fixed = d.expand(Some(&arch), 0.1);
        assert_eq!(fixed.len(), 4);
        assert!(fixed.iter().all(|s| s.arch() == Some(&arch)));
    }

    #[test]
    fn config_validation() {
        let base = r#"{"dataset": {"synthetic": {"n_subjects": 3, "samples_per_class_per_domain": 10,
            "dim": 2, "domain_shift_scale": 1.0, "noise_std": 1.0}},
            "protocol": "loso", "strategies": ["noNorm", "Z2"], "methods": [{"kind": "noDA-SVM"}]}"#;
        let cfg = ExperimentConfig::from_json_str(base).unwrap();
        assert_eq!(cfg.val_fraction, 0.2);
        let hlso = base.replace("\"loso\"", "\"hlso\"");
        assert!(matches!(
            ExperimentConfig::from_json_str(&hlso),
            Err(Error::Protocol(_))
        ));
        let dup = base.replace("[\"noNorm\", \"Z2\"]", "[\"Z2\", \"Z2\"]");
        assert!(ExperimentConfig::from_json_str(&dup).is_err());
        let bad_c = base.replace("{\"kind\": \"noDA-SVM\"}", "{\"kind\": \"noDA-SVM\", \"c\": [-1]}");
        match ExperimentConfig::from_json_str(&bad_c) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "methods.noDA-SVM.c"),
            other => panic!("{other:?}"),
        }
        let unknown = base
            .replace("\"seed\"", "\"sed\"")
            .replace("\"protocol\"", "\"sed\": 1, \"protocol\"");
        assert!(ExperimentConfig::from_json_str(&unknown).is_err());
    }
}
