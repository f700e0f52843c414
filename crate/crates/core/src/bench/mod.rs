//! Experiment harness: normalization strategies x methods over LOSO or HLSO
//! folds, per-fold grid search, aggregation and report files.

mod config;
mod report;
mod run;

pub use config::{
    DatasetSource, DeepGrid, ExperimentConfig, KernelChoice, KpcaGrid, MethodGrid, MethodKind, MethodSpec, Protocol,
    SvmGrid, TcaGrid,
};
pub use report::{
    emit_projection, emit_table, format_cell, markdown_from_rows, markdown_table, percent, project_fold,
    projection_file_name, read_table_csv, render_csv, render_folds_csv, render_markdown, render_report_md,
    write_report, ProjectionRow, TableEntry, TableFormat, TableRow,
};
pub use run::{
    grid_search, run_experiment, run_on_folds, select_best, CellResult, ExperimentReport, FittedMethod, FoldData,
    FoldResult,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Fraction of exact matches.
pub fn accuracy(predicted: &[usize], actual: &[usize]) -> Result<f64> {
    if predicted.len() != actual.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} labels",
            predicted.len(),
            actual.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::EmptyInput("no labels to score".into()));
    }
    let hits = predicted.iter().zip(actual).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// Arithmetic mean and population standard deviation.
pub fn aggregate(values: &[f64]) -> Result<(f64, f64)> {
    if values.is_empty() {
        return Err(Error::EmptyInput("no folds to aggregate".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Valence {
    Negative,
    Neutral,
    Positive,
}

impl Valence {
    /// Class id: negative 0, neutral 1, positive 2.
    pub fn label(self) -> usize {
        self as usize
    }
}

/// DEAP valence classes: above 7 positive, strictly between 3 and 7 neutral,
/// below 3 negative. Ratings of exactly 3 or 7 belong to no class.
pub fn deap_valence_labels(ratings: &[f64]) -> Result<Vec<Valence>> {
    ratings
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            if !(1.0..=9.0).contains(&r) {
                Err(Error::Rating(format!("rating {r} at index {i} is outside [1, 9]")))
            } else if r == 3.0 || r == 7.0 {
                Err(Error::Rating(format!(
                    "rating {r} at index {i} lies on a class boundary"
                )))
            } else if r > 7.0 {
                Ok(Valence::Positive)
            } else if r > 3.0 {
                Ok(Valence::Neutral)
            } else {
                Ok(Valence::Negative)
            }
        })
        .collect()
}
