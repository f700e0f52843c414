//! Z-score and min-max transforms and the split-aware strategies.
//!
//! | strategy | training side                    | test side                        |
//! |----------|----------------------------------|----------------------------------|
//! | `NoNorm` | raw                              | raw                              |
//! | `Z0`     | pooled training stats            | pooled training stats            |
//! | `Z1`     | each domain with its own stats   | pooled raw training stats        |
//! | `Z2`     | each domain with its own stats   | each domain with its own stats   |
//! | `Z3`     | pooled training stats            | each domain with its own stats   |
//! | `MinMax` | training min/max                 | training min/max                 |
//!
//! `Z2` and `Z3` are transductive: they read test-side features (never labels).
//! Standard deviations use the population convention (divide by n).

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::{DomainDataset, Fold, Matrix};
use crate::error::{Error, Result};

pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStats {
    pub mu: DVector<f64>,
    pub sigma: DVector<f64>,
}

pub fn compute_stats(x: &Matrix) -> Result<FeatureStats> {
    let n = x.nrows();
    if n == 0 || x.ncols() == 0 {
        return Err(Error::EmptyInput("cannot compute statistics of an empty matrix".into()));
    }
    let mu = x.row_mean().transpose();
    let sigma = DVector::from_fn(x.ncols(), |j, _| {
        let m = mu[j];
        let ss: f64 = x.column(j).iter().map(|v| (v - m) * (v - m)).sum();
        (ss / n as f64).sqrt()
    });
    Ok(FeatureStats { mu, sigma })
}

pub fn zscore(x: &Matrix, stats: &FeatureStats, eps: f64) -> Result<Matrix> {
    if stats.mu.len() != x.ncols() || stats.sigma.len() != x.ncols() {
        return Err(Error::shape(format!(
            "statistics for {} features applied to {} columns",
            stats.mu.len(),
            x.ncols()
        )));
    }
    Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - stats.mu[j]) / stats.sigma[j].max(eps)
    }))
}

/// Per-column minima and maxima.
pub fn column_ranges(x: &Matrix) -> Result<(DVector<f64>, DVector<f64>)> {
    if x.nrows() == 0 {
        return Err(Error::EmptyInput("cannot compute ranges of an empty matrix".into()));
    }
    let mins = DVector::from_fn(x.ncols(), |j, _| x.column(j).min());
    let maxs = DVector::from_fn(x.ncols(), |j, _| x.column(j).max());
    Ok((mins, maxs))
}

/// `(x - min) / max(max - min, eps)`; out-of-range values are not clipped.
pub fn minmax(x: &Matrix, mins: &DVector<f64>, maxs: &DVector<f64>, eps: f64) -> Result<Matrix> {
    if mins.len() != x.ncols() || maxs.len() != x.ncols() {
        return Err(Error::shape(format!(
            "ranges for {}/{} features applied to {} columns",
            mins.len(),
            maxs.len(),
            x.ncols()
        )));
    }
    Ok(Matrix::from_fn(x.nrows(), x.ncols(), |i, j| {
        (x[(i, j)] - mins[j]) / (maxs[j] - mins[j]).max(eps)
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NormStrategy {
    #[serde(rename = "noNorm", alias = "NoNorm", alias = "nonorm")]
    NoNorm,
    Z0,
    Z1,
    Z2,
    Z3,
    #[serde(alias = "minmax")]
    MinMax,
}

impl NormStrategy {
    pub const ALL: [NormStrategy; 6] = [
        NormStrategy::NoNorm,
        NormStrategy::Z0,
        NormStrategy::Z1,
        NormStrategy::Z2,
        NormStrategy::Z3,
        NormStrategy::MinMax,
    ];

    /// Whether the test-side transform reads test-side features.
    pub fn is_transductive(self) -> bool {
        matches!(self, NormStrategy::Z2 | NormStrategy::Z3)
    }

    pub fn name(self) -> &'static str {
        match self {
            NormStrategy::NoNorm => "noNorm",
            NormStrategy::Z0 => "Z0",
            NormStrategy::Z1 => "Z1",
            NormStrategy::Z2 => "Z2",
            NormStrategy::Z3 => "Z3",
            NormStrategy::MinMax => "MinMax",
        }
    }
}

impl fmt::Display for NormStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NormStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        NormStrategy::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::config("strategy", format!("unknown normalization strategy `{s}`")))
    }
}

/// What the training side fitted and the test side needs.
#[derive(Debug, Clone, PartialEq)]
pub enum TestTransform {
    Identity,
    ZScore(FeatureStats),
    PerDomain,
    MinMax { mins: DVector<f64>, maxs: DVector<f64> },
}

/// Normalizes the training rows of a fold. Only `train_idx` rows are read.
pub fn transform_train(
    ds: &DomainDataset,
    train_idx: &[usize],
    strategy: NormStrategy,
    eps: f64,
) -> Result<(Matrix, TestTransform)> {
    if train_idx.is_empty() {
        return Err(Error::EmptyInput("fold has no training rows".into()));
    }
    let raw = ds.select_features(train_idx);
    match strategy {
        NormStrategy::NoNorm => Ok((raw, TestTransform::Identity)),
        NormStrategy::Z0 => {
            let stats = compute_stats(&raw)?;
            Ok((zscore(&raw, &stats, eps)?, TestTransform::ZScore(stats)))
        }
        NormStrategy::Z1 => {
            let stats = compute_stats(&raw)?;
            Ok((
                per_domain_zscore(ds, train_idx, eps, false)?,
                TestTransform::ZScore(stats),
            ))
        }
        NormStrategy::Z2 => Ok((per_domain_zscore(ds, train_idx, eps, false)?, TestTransform::PerDomain)),
        NormStrategy::Z3 => {
            let stats = compute_stats(&raw)?;
            Ok((zscore(&raw, &stats, eps)?, TestTransform::PerDomain))
        }
        NormStrategy::MinMax => {
            let (mins, maxs) = column_ranges(&raw)?;
            Ok((minmax(&raw, &mins, &maxs, eps)?, TestTransform::MinMax { mins, maxs }))
        }
    }
}

/// Normalizes the test rows of a fold given the fitted training side.
pub fn transform_test(ds: &DomainDataset, test_idx: &[usize], fitted: &TestTransform, eps: f64) -> Result<Matrix> {
    let raw = ds.select_features(test_idx);
    match fitted {
        TestTransform::Identity => Ok(raw),
        TestTransform::ZScore(stats) => zscore(&raw, stats, eps),
        TestTransform::PerDomain => per_domain_zscore(ds, test_idx, eps, true),
        TestTransform::MinMax { mins, maxs } => minmax(&raw, mins, maxs, eps),
    }
}

/// Normalized `(train, test)` matrices; rows follow `fold.train_idx` and
/// `fold.test_idx` order.
pub fn apply_strategy(ds: &DomainDataset, fold: &Fold, strategy: NormStrategy, eps: f64) -> Result<(Matrix, Matrix)> {
    let (train, fitted) = transform_train(ds, &fold.train_idx, strategy, eps)?;
    let test = transform_test(ds, &fold.test_idx, &fitted, eps)?;
    Ok((train, test))
}

/// Z-scores every domain among `idx` with its own statistics. Output rows
/// follow `idx`. Single-row domains are rejected when `strict` is set.
fn per_domain_zscore(ds: &DomainDataset, idx: &[usize], eps: f64, strict: bool) -> Result<Matrix> {
    let mut out = Matrix::zeros(idx.len(), ds.n_features());
    let position: std::collections::HashMap<usize, usize> = idx.iter().enumerate().map(|(p, &i)| (i, p)).collect();
    for (domain, rows) in ds.group_by_domain(idx) {
        if strict && rows.len() < 2 {
            return Err(Error::DegenerateDomain {
                domain: domain.to_string(),
                message: "a single test row has no meaningful standard deviation".into(),
            });
        }
        let block = ds.select_features(&rows);
        let stats = compute_stats(&block)?;
        let z = zscore(&block, &stats, eps)?;
        for (r, &i) in rows.iter().enumerate() {
            out.set_row(position[&i], &z.row(r));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DomainKey;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn stats_of_small_columns() {
        let s = compute_stats(&col(&[0.0, 2.0])).unwrap();
        assert_eq!((s.mu[0], s.sigma[0]), (1.0, 1.0));
        let s = compute_stats(&col(&[5.0, 5.0, 5.0])).unwrap();
        assert_eq!((s.mu[0], s.sigma[0]), (5.0, 0.0));
        let s = compute_stats(&col(&[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(s.mu[0], 2.5);
        assert_abs_diff_eq!(s.sigma[0], 1.25f64.sqrt(), epsilon = 1e-15);
        assert!(compute_stats(&Matrix::zeros(0, 3)).is_err());
    }

    #[test]
    fn zscore_cases() {
        let x = col(&[0.0, 2.0]);
        let s = compute_stats(&x).unwrap();
        assert_eq!(zscore(&x, &s, DEFAULT_EPS).unwrap(), col(&[-1.0, 1.0]));

        let unit = FeatureStats {
            mu: DVector::zeros(1),
            sigma: DVector::from_element(1, 1.0),
        };
        assert_eq!(zscore(&x, &unit, DEFAULT_EPS).unwrap(), x);

        let c = col(&[5.0, 5.0, 5.0]);
        let s = compute_stats(&c).unwrap();
        assert_eq!(zscore(&c, &s, 1e-8).unwrap(), Matrix::zeros(3, 1));

        let wide = Matrix::zeros(2, 2);
        assert!(matches!(zscore(&wide, &s, 1e-8), Err(Error::Shape(_))));
    }

    #[test]
    fn minmax_cases() {
        let x = col(&[0.0, 10.0]);
        let (lo, hi) = column_ranges(&x).unwrap();
        assert_eq!(minmax(&x, &lo, &hi, DEFAULT_EPS).unwrap(), col(&[0.0, 1.0]));
        assert_abs_diff_eq!(
            minmax(&col(&[12.0]), &lo, &hi, DEFAULT_EPS).unwrap()[0],
            1.2,
            epsilon = 1e-15
        );
        let c = col(&[3.0, 3.0]);
        let (lo, hi) = column_ranges(&c).unwrap();
        assert_eq!(minmax(&c, &lo, &hi, DEFAULT_EPS).unwrap(), Matrix::zeros(2, 1));
        assert!(minmax(&Matrix::zeros(1, 2), &lo, &hi, DEFAULT_EPS).is_err());
    }

    /// Two domains in subject 1 and 2; domain A = subject 1 is offset by +100.
    fn offset_toy() -> DomainDataset {
        let x = col(&[101.0, 103.0, 1.0, 3.0, 0.0, 4.0]);
        let keys = vec![
            DomainKey::new(1, 1),
            DomainKey::new(1, 1),
            DomainKey::new(2, 1),
            DomainKey::new(2, 1),
            DomainKey::new(3, 1),
            DomainKey::new(3, 1),
        ];
        DomainDataset::new(x, vec![0, 1, 0, 1, 0, 1], keys, None).unwrap()
    }

    #[test]
    fn z1_removes_domain_offset_z0_keeps_residual() {
        // hand computation on the 4 training rows {101, 103, 1, 3}:
        // pooled mean 52, so Z0 leaves A's centred mean at +100 * (1 - 2/4) = 50
        // in raw units, while Z1 centres A at exactly 0.
        let ds = offset_toy();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![0, 1, 2, 3],
            test_idx: vec![4, 5],
        };
        let (z0, _) = apply_strategy(&ds, &fold, NormStrategy::Z0, DEFAULT_EPS).unwrap();
        let pooled = compute_stats(&ds.select_features(&[0, 1, 2, 3])).unwrap();
        let a_mean_z0 = (z0[0] + z0[1]) / 2.0;
        assert_abs_diff_eq!(a_mean_z0 * pooled.sigma[0], 100.0 * (1.0 - 2.0 / 4.0), epsilon = 1e-9);

        let (z1, z1_test) = apply_strategy(&ds, &fold, NormStrategy::Z1, DEFAULT_EPS).unwrap();
        assert_abs_diff_eq!(z1[0] + z1[1], 0.0, epsilon = 1e-12);
        assert_eq!((z1[0], z1[1], z1[2], z1[3]), (-1.0, 1.0, -1.0, 1.0));
        // test side uses the raw pooled training statistics
        assert_abs_diff_eq!(z1_test[0], (0.0 - 52.0) / pooled.sigma[0], epsilon = 1e-12);
    }

    #[test]
    fn z2_standardizes_every_domain() {
        let ds = offset_toy();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![0, 1, 2, 3],
            test_idx: vec![4, 5],
        };
        let (tr, te) = apply_strategy(&ds, &fold, NormStrategy::Z2, DEFAULT_EPS).unwrap();
        assert_eq!(tr.as_slice(), &[-1.0, 1.0, -1.0, 1.0]);
        assert_eq!(te.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn z3_uses_pooled_train_and_own_test() {
        let ds = offset_toy();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![0, 1, 2, 3],
            test_idx: vec![4, 5],
        };
        let (tr, te) = apply_strategy(&ds, &fold, NormStrategy::Z3, DEFAULT_EPS).unwrap();
        let (z0, _) = apply_strategy(&ds, &fold, NormStrategy::Z0, DEFAULT_EPS).unwrap();
        assert_eq!(tr, z0);
        assert_eq!(te.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn z0_on_standard_train_is_identity() {
        let x = col(&[-1.0, 1.0, 5.0]);
        let keys = vec![DomainKey::new(1, 1), DomainKey::new(1, 1), DomainKey::new(2, 1)];
        let ds = DomainDataset::new(x, vec![0, 1, 0], keys, None).unwrap();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![0, 1],
            test_idx: vec![2],
        };
        let (tr, te) = apply_strategy(&ds, &fold, NormStrategy::Z0, DEFAULT_EPS).unwrap();
        assert_eq!(tr.as_slice(), &[-1.0, 1.0]);
        assert_eq!(te.as_slice(), &[5.0]);
    }

    #[test]
    fn single_row_test_domain_is_rejected_under_transductive_strategies() {
        let x = col(&[-1.0, 1.0, 5.0]);
        let keys = vec![DomainKey::new(1, 1), DomainKey::new(1, 1), DomainKey::new(2, 1)];
        let ds = DomainDataset::new(x, vec![0, 1, 0], keys, None).unwrap();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![0, 1],
            test_idx: vec![2],
        };
        for s in [NormStrategy::Z2, NormStrategy::Z3] {
            assert!(matches!(
                apply_strategy(&ds, &fold, s, DEFAULT_EPS),
                Err(Error::DegenerateDomain { .. })
            ));
        }
        for s in [
            NormStrategy::NoNorm,
            NormStrategy::Z0,
            NormStrategy::Z1,
            NormStrategy::MinMax,
        ] {
            assert!(apply_strategy(&ds, &fold, s, DEFAULT_EPS).is_ok());
        }
    }

    #[test]
    fn minmax_strategy_fits_on_train() {
        let ds = offset_toy();
        let fold = Fold {
            name: "t".into(),
            train_idx: vec![2, 3],
            test_idx: vec![4, 5],
        };
        let (tr, te) = apply_strategy(&ds, &fold, NormStrategy::MinMax, DEFAULT_EPS).unwrap();
        assert_eq!(tr.as_slice(), &[0.0, 1.0]);
        assert_eq!(te.as_slice(), &[-0.5, 1.5]);
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in NormStrategy::ALL {
            assert_eq!(s.name().parse::<NormStrategy>().unwrap(), s);
            let j = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<NormStrategy>(&j).unwrap(), s);
        }
        assert!("Z9".parse::<NormStrategy>().is_err());
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (2usize..12, 1usize..5).prop_flat_map(|(n, m)| {
            prop::collection::vec(-50.0f64..50.0, n * m).prop_map(move |v| Matrix::from_row_slice(n, m, &v))
        })
    }

    proptest! {
        #[test]
        fn zscore_is_idempotent(x in matrix_strategy()) {
            let z = zscore(&x, &compute_stats(&x).unwrap(), DEFAULT_EPS).unwrap();
            let zz = zscore(&z, &compute_stats(&z).unwrap(), DEFAULT_EPS).unwrap();
            for (a, b) in z.iter().zip(zz.iter()) {
                prop_assert!((a - b).abs() < 1e-12, "{a} vs {b}");
            }
        }

        #[test]
        fn zscore_is_affine_equivariant(x in matrix_strategy(), a in 0.1f64..20.0, shift in -100.0f64..100.0) {
            let stats = compute_stats(&x).unwrap();
            prop_assume!(stats.sigma.iter().all(|s| *s > 1e-3));
            let y = x.map(|v| a * v + shift);
            let zx = zscore(&x, &stats, DEFAULT_EPS).unwrap();
            let zy = zscore(&y, &compute_stats(&y).unwrap(), DEFAULT_EPS).unwrap();
            for (p, q) in zx.iter().zip(zy.iter()) {
                prop_assert!((p - q).abs() < 1e-9);
            }
        }
    }
}
