//! Domain-partitioned datasets: ingestion, synthetic shifted domains, and
//! the cross-validation splitters.
//!
//! A *domain* is one (subject, session) pair. Rows keep their file order
//! everywhere; splitters return row indices into the original dataset.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DomainKey {
    pub subject: u32,
    pub session: u32,
}

impl DomainKey {
    pub fn new(subject: u32, session: u32) -> Self {
        DomainKey { subject, session }
    }
}

impl fmt::Display for DomainKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subject {} session {}", self.subject, self.session)
    }
}

/// Feature matrix (rows = samples) with a class label and a domain key per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainDataset {
    features: Matrix,
    labels: Vec<usize>,
    domains: Vec<DomainKey>,
    feature_names: Option<Vec<String>>,
}

impl DomainDataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        domains: Vec<DomainKey>,
        feature_names: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || domains.len() != n {
            return Err(Error::shape(format!(
                "{} feature rows, {} labels, {} domain keys",
                n,
                labels.len(),
                domains.len()
            )));
        }
        if features.ncols() == 0 {
            return Err(Error::shape("dataset needs at least one feature column"));
        }
        if let Some(names) = &feature_names {
            if names.len() != features.ncols() {
                return Err(Error::shape(format!(
                    "{} feature names for {} columns",
                    names.len(),
                    features.ncols()
                )));
            }
        }
        Ok(DomainDataset {
            features,
            labels,
            domains,
            feature_names,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn domains(&self) -> &[DomainKey] {
        &self.domains
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    /// Number of classes `C`, i.e. one more than the largest label.
    pub fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    pub fn subjects(&self) -> Vec<u32> {
        let set: BTreeSet<u32> = self.domains.iter().map(|d| d.subject).collect();
        set.into_iter().collect()
    }

    /// Rows grouped by domain, domains in ascending order, rows in file order.
    pub fn rows_by_domain(&self) -> BTreeMap<DomainKey, Vec<usize>> {
        let mut map: BTreeMap<DomainKey, Vec<usize>> = BTreeMap::new();
        for (i, d) in self.domains.iter().enumerate() {
            map.entry(*d).or_default().push(i);
        }
        map
    }

    /// Groups a subset of rows by domain.
    pub fn group_by_domain(&self, idx: &[usize]) -> BTreeMap<DomainKey, Vec<usize>> {
        let mut map: BTreeMap<DomainKey, Vec<usize>> = BTreeMap::new();
        for &i in idx {
            map.entry(self.domains[i]).or_default().push(i);
        }
        map
    }

    /// Copies the given rows of the feature matrix, in the order given.
    pub fn select_features(&self, idx: &[usize]) -> Matrix {
        self.features.select_rows(idx)
    }

    pub fn select_labels(&self, idx: &[usize]) -> Vec<usize> {
        idx.iter().map(|&i| self.labels[i]).collect()
    }

    /// Keeps only the given rows (in the order given).
    pub fn subset(&self, idx: &[usize]) -> DomainDataset {
        DomainDataset {
            features: self.select_features(idx),
            labels: self.select_labels(idx),
            domains: idx.iter().map(|&i| self.domains[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }

    /// Copy with the labels replaced.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<DomainDataset> {
        DomainDataset::new(
            self.features.clone(),
            labels,
            self.domains.clone(),
            self.feature_names.clone(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub name: String,
    pub train_idx: Vec<usize>,
    pub test_idx: Vec<usize>,
}

// ---------------------------------------------------------------------------
// CSV ingestion

/// Names of the bookkeeping columns in an ingestion CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub subject: String,
    pub session: String,
    pub label: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            subject: "subject".into(),
            session: "session".into(),
            label: "label".into(),
        }
    }
}

/// Reads a header-first CSV. Every column not named by `schema` is a
/// real-valued feature. Row numbers in errors count data rows from 1.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<DomainDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path.as_ref())?;
    let headers = reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyInput(format!("{} has no header", path.as_ref().display())));
    }
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Schema(format!("missing required column `{name}`")))
    };
    let subject_col = find(&schema.subject)?;
    let session_col = find(&schema.session)?;
    let label_col = find(&schema.label)?;
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|c| *c != subject_col && *c != session_col && *c != label_col)
        .collect();
    if feature_cols.is_empty() {
        return Err(Error::Schema("no feature columns".into()));
    }
    let names: Vec<String> = feature_cols.iter().map(|&c| headers[c].to_string()).collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut domains = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let row = r + 1;
        let record = record?;
        let int_cell = |col: usize| -> Result<u64> {
            let cell = record.get(col).unwrap_or("");
            cell.parse::<u64>().map_err(|_| Error::Parse {
                row,
                column: headers[col].to_string(),
                message: format!("expected a non-negative integer, found `{cell}`"),
            })
        };
        let to_u32 = |v: u64, col: usize| -> Result<u32> {
            u32::try_from(v).map_err(|_| Error::Parse {
                row,
                column: headers[col].to_string(),
                message: "id out of range".into(),
            })
        };
        let subject = to_u32(int_cell(subject_col)?, subject_col)?;
        let session = to_u32(int_cell(session_col)?, session_col)?;
        let label = int_cell(label_col)? as usize;
        for &c in &feature_cols {
            let cell = record.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: headers[c].to_string(),
                message: format!("expected a real number, found `{cell}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row,
                    column: headers[c].to_string(),
                    message: format!("non-finite value `{cell}`"),
                });
            }
            values.push(v);
        }
        labels.push(label);
        domains.push(DomainKey::new(subject, session));
    }
    if labels.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{} has no data rows",
            path.as_ref().display()
        )));
    }
    let features = Matrix::from_row_slice(labels.len(), feature_cols.len(), &values);
    DomainDataset::new(features, labels, domains, Some(names))
}

/// Writes a dataset in the ingestion format (`subject,session,label,<features>`).
pub fn write_csv(ds: &DomainDataset, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let names: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (1..=ds.n_features()).map(|j| format!("f{j}")).collect(),
    };
    let mut header = vec!["subject".to_string(), "session".into(), "label".into()];
    header.extend(names);
    w.write_record(&header)?;
    for i in 0..ds.n_rows() {
        let d = ds.domains[i];
        let mut rec = vec![d.subject.to_string(), d.session.to_string(), ds.labels[i].to_string()];
        rec.extend(ds.features.row(i).iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Synthetic shifted domains

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticShiftConfig {
    pub n_subjects: usize,
    #[serde(default = "one")]
    pub n_sessions: usize,
    #[serde(default = "two")]
    pub n_classes: usize,
    pub samples_per_class_per_domain: usize,
    pub dim: usize,
    #[serde(default = "default_separation")]
    pub class_separation: f64,
    pub domain_shift_scale: f64,
    #[serde(default = "default_jitter")]
    pub domain_scale_jitter: f64,
    pub noise_std: f64,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn default_separation() -> f64 {
    3.0
}
fn default_jitter() -> f64 {
    0.2
}

impl SyntheticShiftConfig {
    /// A config with the library defaults for the optional fields.
    pub fn new(n_subjects: usize, dim: usize, shift: f64, noise: f64, seed: u64) -> Self {
        SyntheticShiftConfig {
            n_subjects,
            n_sessions: 1,
            n_classes: 2,
            samples_per_class_per_domain: 100,
            dim,
            class_separation: default_separation(),
            domain_shift_scale: shift,
            domain_scale_jitter: default_jitter(),
            noise_std: noise,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_subjects", self.n_subjects),
            ("n_sessions", self.n_sessions),
            ("n_classes", self.n_classes),
            ("samples_per_class_per_domain", self.samples_per_class_per_domain),
            ("dim", self.dim),
        ];
        for (field, v) in counts {
            if v < 1 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        if self.n_classes > self.dim + 1 {
            return Err(Error::config(
                "n_classes",
                format!("at most dim + 1 = {} equidistant class means fit", self.dim + 1),
            ));
        }
        if !(self.class_separation.is_finite() && self.class_separation > 0.0) {
            return Err(Error::config("class_separation", "must be a positive real"));
        }
        if !(self.domain_shift_scale.is_finite() && self.domain_shift_scale >= 0.0) {
            return Err(Error::config("domain_shift_scale", "must be a non-negative real"));
        }
        if !(self.domain_scale_jitter.is_finite() && self.domain_scale_jitter >= 0.0 && self.domain_scale_jitter < 1.0)
        {
            return Err(Error::config("domain_scale_jitter", "must lie in [0, 1)"));
        }
        if !(self.noise_std.is_finite() && self.noise_std > 0.0) {
            return Err(Error::config("noise_std", "must be a positive real"));
        }
        Ok(())
    }
}

/// Per-domain affine map `x -> scale ⊙ x + offset` drawn by the generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainTransform {
    pub domain: DomainKey,
    pub scale: DVector<f64>,
    pub offset: DVector<f64>,
}

/// Class means at the vertices of a regular simplex with edge length
/// `separation`, centred on the origin. Needs `n_classes <= dim + 1`.
pub fn simplex_means(n_classes: usize, dim: usize, separation: f64) -> Vec<DVector<f64>> {
    let mut verts: Vec<DVector<f64>> = Vec::with_capacity(n_classes);
    for c in 0..n_classes.min(dim) {
        let mut v = DVector::zeros(dim);
        v[c] = 1.0;
        verts.push(v);
    }
    if n_classes == dim + 1 {
        // e_1..e_d plus a·1 with a = (1 - sqrt(d+1)) / d: all edges sqrt(2).
        let d = dim as f64;
        let a = (1.0 - (d + 1.0).sqrt()) / d;
        verts.push(DVector::from_element(dim, a));
    }
    let centroid = verts.iter().fold(DVector::zeros(dim), |acc, v| acc + v) / verts.len() as f64;
    let s = separation / std::f64::consts::SQRT_2;
    verts.into_iter().map(|v| (v - &centroid) * s).collect()
}

pub fn generate_synthetic(cfg: &SyntheticShiftConfig) -> Result<DomainDataset> {
    generate_synthetic_with_transforms(cfg).map(|(ds, _)| ds)
}

/// Same as [`generate_synthetic`], also returning the drawn domain maps.
pub fn generate_synthetic_with_transforms(cfg: &SyntheticShiftConfig) -> Result<(DomainDataset, Vec<DomainTransform>)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let means = simplex_means(cfg.n_classes, cfg.dim, cfg.class_separation);
    let jitter = Uniform::new_inclusive(1.0 - cfg.domain_scale_jitter, 1.0 + cfg.domain_scale_jitter)
        .map_err(|e| Error::config("domain_scale_jitter", e.to_string()))?;

    let n_domains = cfg.n_subjects * cfg.n_sessions;
    let per_domain = cfg.n_classes * cfg.samples_per_class_per_domain;
    let n = n_domains * per_domain;
    let mut values = Vec::with_capacity(n * cfg.dim);
    let mut labels = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    let mut transforms = Vec::with_capacity(n_domains);

    for subject in 1..=cfg.n_subjects as u32 {
        for session in 1..=cfg.n_sessions as u32 {
            let key = DomainKey::new(subject, session);
            let scale = DVector::from_fn(cfg.dim, |_, _| jitter.sample(&mut rng));
            let offset = random_unit(cfg.dim, &mut rng) * cfg.domain_shift_scale;
            for (c, mean) in means.iter().enumerate() {
                for _ in 0..cfg.samples_per_class_per_domain {
                    for j in 0..cfg.dim {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        let x = mean[j] + cfg.noise_std * z;
                        values.push(scale[j] * x + offset[j]);
                    }
                    labels.push(c);
                    domains.push(key);
                }
            }
            transforms.push(DomainTransform {
                domain: key,
                scale,
                offset,
            });
        }
    }
    let names = (1..=cfg.dim).map(|j| format!("f{j}")).collect();
    let features = Matrix::from_row_slice(n, cfg.dim, &values);
    Ok((DomainDataset::new(features, labels, domains, Some(names))?, transforms))
}

fn random_unit(dim: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    loop {
        let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let norm = v.norm();
        if norm > 1e-12 {
            return v / norm;
        }
    }
}

// ---------------------------------------------------------------------------
// Splitters

/// Leave-one-subject-out folds, ordered by ascending subject id.
pub fn loso_folds(ds: &DomainDataset) -> Result<Vec<Fold>> {
    let subjects = ds.subjects();
    if subjects.len() < 2 {
        return Err(Error::Protocol(format!(
            "leave-one-subject-out needs at least 2 subjects, found {}",
            subjects.len()
        )));
    }
    Ok(subjects
        .iter()
        .map(|&s| {
            let (test_idx, train_idx): (Vec<usize>, Vec<usize>) =
                (0..ds.n_rows()).partition(|&i| ds.domains[i].subject == s);
            Fold {
                name: format!("test-subject-{s}"),
                train_idx,
                test_idx,
            }
        })
        .collect())
}

/// Hold-last-session-out: per subject, the highest session id is the test set
/// and that subject's other sessions are the training set.
pub fn hlso_folds(ds: &DomainDataset) -> Result<Vec<Fold>> {
    let mut sessions: BTreeMap<u32, BTreeSet<u32>> = BTreeMap::new();
    for d in &ds.domains {
        sessions.entry(d.subject).or_default().insert(d.session);
    }
    if sessions.is_empty() {
        return Err(Error::Protocol("empty dataset".into()));
    }
    let mut folds = Vec::with_capacity(sessions.len());
    for (subject, set) in &sessions {
        if set.len() < 2 {
            return Err(Error::Protocol(format!(
                "hold-last-session-out needs at least 2 sessions per subject; subject {subject} has {}",
                set.len()
            )));
        }
        let last = *set.iter().next_back().expect("nonempty");
        let mut train_idx = Vec::new();
        let mut test_idx = Vec::new();
        for (i, d) in ds.domains.iter().enumerate() {
            if d.subject != *subject {
                continue;
            }
            if d.session == last {
                test_idx.push(i);
            } else {
                train_idx.push(i);
            }
        }
        folds.push(Fold {
            name: format!("subject-{subject}-session-{last}"),
            train_idx,
            test_idx,
        });
    }
    Ok(folds)
}

/// Stratified hold-out split of `idx` by the given labels.
///
/// Each class contributes `ceil(fraction * n_c)` rows to the validation set,
/// clamped to `[1, n_c - 1]`. Both outputs are sorted ascending.
pub fn stratified_split_labels(
    labels: &[usize],
    idx: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if idx.is_empty() {
        return Err(Error::Stratification("no rows to split".into()));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config("val_fraction", "must lie in (0, 1)"));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in idx {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::with_capacity(idx.len());
    let mut val = Vec::new();
    for (class, mut rows) in by_class {
        if rows.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {class} has {} row(s); at least 2 are needed",
                rows.len()
            )));
        }
        let k = ((fraction * rows.len() as f64).ceil() as usize).clamp(1, rows.len() - 1);
        rows.shuffle(&mut rng);
        val.extend_from_slice(&rows[..k]);
        train.extend_from_slice(&rows[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    Ok((train, val))
}

pub fn stratified_split(
    ds: &DomainDataset,
    idx: &[usize],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    stratified_split_labels(&ds.labels, idx, fraction, seed)
}

/// Splits `k` slots across classes proportionally to `counts` by the
/// largest-remainder rule. Ties on the remainder go to the larger class,
/// then to the smaller class id.
pub fn proportional_allocation(counts: &[usize], k: usize) -> Vec<usize> {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return vec![0; counts.len()];
    }
    let k = k.min(total);
    let mut alloc: Vec<usize> = counts.iter().map(|&c| c * k / total).collect();
    let assigned: usize = alloc.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    // remainder numerators (c * k) mod total compare exactly in integers
    order.sort_by(|&a, &b| {
        let ra = (counts[a] * k) % total;
        let rb = (counts[b] * k) % total;
        rb.cmp(&ra).then(counts[b].cmp(&counts[a])).then(a.cmp(&b))
    });
    for &c in order.iter().take(k - assigned) {
        alloc[c] += 1;
    }
    alloc
}

/// Keeps at most `k` rows per subject by class-stratified sampling
/// ([`proportional_allocation`]). Retained rows keep their file order.
pub fn subsample_per_subject(ds: &DomainDataset, k: usize, seed: u64) -> Result<DomainDataset> {
    if k == 0 {
        return Err(Error::config("subsample_per_subject", "must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(ds.n_rows());
    for subject in ds.subjects() {
        let rows: Vec<usize> = (0..ds.n_rows()).filter(|&i| ds.domains[i].subject == subject).collect();
        if rows.len() <= k {
            keep.extend(rows);
            continue;
        }
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &i in &rows {
            by_class.entry(ds.labels[i]).or_default().push(i);
        }
        let counts: Vec<usize> = by_class.values().map(Vec::len).collect();
        let alloc = proportional_allocation(&counts, k);
        for (mut class_rows, take) in by_class.into_values().zip(alloc) {
            class_rows.shuffle(&mut rng);
            keep.extend_from_slice(&class_rows[..take]);
        }
    }
    keep.sort_unstable();
    Ok(ds.subset(&keep))
}
