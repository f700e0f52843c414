use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{MethodKind, Protocol};
use super::run::{vstack, ExperimentReport};
use crate::dataset::{DomainDataset, Fold};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen_desc;
use crate::normalize::{apply_strategy, NormStrategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Markdown,
    Csv,
}

/// `value * 100` rounded half-to-even to two decimals.
pub fn percent(value: f64) -> String {
    let scaled = value * 10_000.0;
    // treat values within float noise of a .5 boundary as exact ties
    let floor = scaled.floor();
    let frac = scaled - floor;
    let rounded = if (frac - 0.5).abs() < 1e-7 {
        if floor % 2.0 == 0.0 {
            floor
        } else {
            floor + 1.0
        }
    } else {
        scaled.round()
    };
    format!("{:.2}", rounded / 100.0)
}

/// Table cell text: `"MM.MM (SS.SS)"` from fractions in `[0, 1]`.
pub fn format_cell(mean: f64, std: f64) -> String {
    format!("{} ({})", percent(mean), percent(std))
}

fn strategy_rows(report: &ExperimentReport) -> Vec<NormStrategy> {
    NormStrategy::ALL
        .into_iter()
        .filter(|s| report.config.strategies.contains(s))
        .collect()
}

/// Present methods, deep methods first, each group in canonical order.
fn method_columns(report: &ExperimentReport) -> Vec<MethodKind> {
    MethodKind::ALL
        .into_iter()
        .filter(|m| report.config.methods.iter().any(|g| g.kind() == *m))
        .collect()
}

pub fn render_markdown(report: &ExperimentReport) -> String {
    let methods = method_columns(report);
    let mut rows = Vec::new();
    for s in strategy_rows(report) {
        for &m in &methods {
            let stats = report.cell(s, m).and_then(|c| match (c.mean, c.std) {
                (Some(mu), Some(sd)) if !c.failed() => Some((mu, sd)),
                _ => None,
            });
            rows.push((s, m, stats));
        }
    }
    markdown_table(&rows)
}

/// One table cell: `(strategy, method, Some((mean, std)))`, or `None` for a
/// failed cell.
pub type TableEntry = (NormStrategy, MethodKind, Option<(f64, f64)>);

/// Markdown table from cell entries. Rows and columns follow the canonical strategy and method order;
/// missing or failed cells read `FAIL`.
pub fn markdown_table(entries: &[TableEntry]) -> String {
    let strategies: Vec<NormStrategy> = NormStrategy::ALL
        .into_iter()
        .filter(|s| entries.iter().any(|e| e.0 == *s))
        .collect();
    let methods: Vec<MethodKind> = MethodKind::ALL
        .into_iter()
        .filter(|m| entries.iter().any(|e| e.1 == *m))
        .collect();
    let mut out = String::from("| Normalization |");
    for m in &methods {
        out.push_str(&format!(" {m} |"));
    }
    out.push_str("\n|---|");
    out.push_str(&"---|".repeat(methods.len()));
    out.push('\n');
    for s in strategies {
        out.push_str(&format!("| {s} |"));
        for &m in &methods {
            let text = match entries.iter().find(|e| e.0 == s && e.1 == m) {
                Some((_, _, Some((mu, sd)))) => format_cell(*mu, *sd),
                _ => "FAIL".into(),
            };
            out.push_str(&format!(" {text} |"));
        }
        out.push('\n');
    }
    out
}

/// One row per cell with full-precision fractions; failed cells leave
/// `mean` and `std` empty.
pub fn render_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["strategy", "method", "mean", "std", "n_folds", "status"])?;
    for s in strategy_rows(report) {
        for m in method_columns(report) {
            let Some(c) = report.cell(s, m) else { continue };
            let (mean, std, status) = match (c.mean, c.std) {
                (Some(mu), Some(sd)) if !c.failed() => (mu.to_string(), sd.to_string(), "ok"),
                _ => (String::new(), String::new(), "FAIL"),
            };
            w.write_record([
                s.name(),
                m.name(),
                &mean,
                &std,
                &report.fold_names.len().to_string(),
                status,
            ])?;
        }
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Schema(e.to_string()))
}

pub fn emit_table(report: &ExperimentReport, format: TableFormat, path: impl AsRef<Path>) -> Result<()> {
    let text = match format {
        TableFormat::Markdown => render_markdown(report),
        TableFormat::Csv => render_csv(report)?,
    };
    fs::write(path, text)?;
    Ok(())
}

/// A row of `report.csv` read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct TableRow {
    pub strategy: NormStrategy,
    pub method: MethodKind,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_folds: usize,
    pub status: String,
}

pub fn read_table_csv(path: impl AsRef<Path>) -> Result<Vec<TableRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn markdown_from_rows(rows: &[TableRow]) -> String {
    let entries: Vec<_> = rows
        .iter()
        .map(|r| {
            let stats = match (r.status.as_str(), r.mean, r.std) {
                ("ok", Some(m), Some(s)) => Some((m, s)),
                _ => None,
            };
            (r.strategy, r.method, stats)
        })
        .collect();
    markdown_table(&entries)
}

/// Per-fold detail including wall-clock time and model digest.
pub fn render_folds_csv(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "fold",
        "strategy",
        "method",
        "accuracy",
        "val_accuracy",
        "n_train",
        "n_test",
        "model_digest",
        "wall_clock_s",
        "selected",
        "error",
    ])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for d in &report.details {
        let selected = match &d.selected {
            Some(s) => serde_json::to_string(s)?,
            None => String::new(),
        };
        w.write_record([
            d.fold.as_str(),
            d.strategy.name(),
            d.method.name(),
            &opt(d.accuracy),
            &opt(d.val_accuracy),
            &d.n_train.to_string(),
            &d.n_test.to_string(),
            d.model_digest.as_deref().unwrap_or(""),
            &format!("{:.6}", d.wall_clock_s),
            &selected,
            d.error.as_deref().unwrap_or(""),
        ])?;
    }
    String::from_utf8(w.into_inner().map_err(|e| Error::Io(e.into_error()))?).map_err(|e| Error::Schema(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionRow {
    pub x: f64,
    pub y: f64,
    pub subject: u32,
    pub session: u32,
    pub split: String,
    pub label: usize,
}

/// Normalizes a fold with `strategy` and projects train and test rows onto
/// the top two principal components of the combined normalized data. Rows
/// come out in `train_idx` then `test_idx` order.
pub fn project_fold(ds: &DomainDataset, fold: &Fold, strategy: NormStrategy, eps: f64) -> Result<Vec<ProjectionRow>> {
    let (train, test) = apply_strategy(ds, fold, strategy, eps)?;
    let mut x = vstack(&train, &test);
    let n = x.nrows();
    if n == 0 {
        return Err(Error::EmptyInput("fold has no rows".into()));
    }
    let means = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &means;
    }
    let cov = x.transpose() * &x / n as f64;
    let (vals, vecs) = sym_eigen_desc(&cov)?;
    let scale = cov.diagonal().amax().max(f64::MIN_POSITIVE);
    if !(vals[0] > 1e-12 * scale) || vals[0] == 0.0 {
        return Err(Error::DegenerateData("rank-0 data has no principal component".into()));
    }
    let pc1 = &x * vecs.column(0);
    let pc2 = if vecs.ncols() > 1 && vals[1] > 1e-12 * vals[0] {
        &x * vecs.column(1)
    } else {
        nalgebra::DVector::zeros(n)
    };
    let rows = fold
        .train_idx
        .iter()
        .map(|&i| (i, "train"))
        .chain(fold.test_idx.iter().map(|&i| (i, "test")));
    Ok(rows
        .enumerate()
        .map(|(r, (i, split))| ProjectionRow {
            x: pc1[r],
            y: pc2[r],
            subject: ds.domains()[i].subject,
            session: ds.domains()[i].session,
            split: split.into(),
            label: ds.labels()[i],
        })
        .collect())
}

pub fn emit_projection(
    ds: &DomainDataset,
    fold: &Fold,
    strategy: NormStrategy,
    eps: f64,
    path: impl AsRef<Path>,
) -> Result<()> {
    let rows = project_fold(ds, fold, strategy, eps)?;
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// File-name-safe fold label.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

pub fn projection_file_name(strategy: NormStrategy, fold: &str) -> String {
    format!("projection_{}_{}.csv", strategy.name(), slug(fold))
}

pub fn render_report_md(report: &ExperimentReport) -> String {
    let protocol = match report.config.protocol {
        Protocol::Loso => "leave-one-subject-out",
        Protocol::Hlso => "hold-last-session-out",
    };
    let failed = report.cells.iter().filter(|c| c.failed()).count();
    let mut out = String::from("# Experiment report\n\nTest accuracy, mean % (std %) over folds.\n\n");
    out.push_str(&render_markdown(report));
    out.push_str(&format!(
        "\n- protocol: {protocol} ({} folds)\n- seed: {}\n- failed cells: {failed}\n- projections: PCA, top two components of the combined normalized fold\n",
        report.fold_names.len(),
        report.config.seed
    ));
    for c in report.cells.iter().filter(|c| c.failed()) {
        for f in &c.failures {
            out.push_str(&format!("- FAIL {} / {}: {f}\n", c.strategy, c.method));
        }
    }
    out
}

/// Writes `report.md`, `report.csv`, `folds.csv`, `config.json` and the
/// projection files for the first `config.projection_folds` folds.
pub fn write_report(
    report: &ExperimentReport,
    ds: &DomainDataset,
    folds: &[Fold],
    dir: impl AsRef<Path>,
) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.md"), render_report_md(report))?;
    fs::write(dir.join("report.csv"), render_csv(report)?)?;
    fs::write(dir.join("folds.csv"), render_folds_csv(report)?)?;
    fs::write(
        dir.join("config.json"),
        serde_json::to_string_pretty(&report.config)? + "\n",
    )?;
    for fold in folds.iter().take(report.config.projection_folds) {
        for &s in &report.config.strategies {
            emit_projection(
                ds,
                fold,
                s,
                report.config.eps,
                dir.join(projection_file_name(s, &fold.name)),
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_rounding() {
        assert_eq!(percent(0.8152), "81.52");
        assert_eq!(percent(0.0726), "7.26");
        assert_eq!(percent(0.0), "0.00");
        assert_eq!(percent(1.0), "100.00");
        // exact ties go to even
        assert_eq!(percent(0.123_45), "12.34");
        assert_eq!(percent(0.123_55), "12.36");
        assert_eq!(percent(0.5), "50.00");
        assert_eq!(format_cell(0.8152, 0.0726), "81.52 (7.26)");
    }

    #[test]
    fn fold_names_become_safe_file_names() {
        assert_eq!(
            projection_file_name(NormStrategy::Z2, "test-subject-3"),
            "projection_Z2_test-subject-3.csv"
        );
        assert_eq!(slug("a b/c"), "a_b_c");
    }
}
