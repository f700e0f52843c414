//! `normda` command-line entry point.
//!
//! Exit codes: 0 success, 2 configuration or data-contract error, 3 I/O
//! error, 4 experiment failure.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use normda::bench::{
    markdown_from_rows, read_table_csv, render_markdown, run_on_folds, write_report, ExperimentConfig,
};
use normda::dataset::{generate_synthetic, load_csv, write_csv, CsvSchema, SyntheticShiftConfig};
use normda::exec::Exec;
use normda::normalize::NormStrategy;
use normda::Error;

#[derive(Parser)]
#[command(name = "normda", version, about = "Normalization vs domain adaptation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic shifted-domain dataset as CSV.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an experiment and write its report directory.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Report directory; overrides `output_dir` (default `report`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Caps worker threads; overrides `jobs`.
        #[arg(long)]
        jobs: Option<usize>,
        /// Exit with code 4 when any cell failed.
        #[arg(long)]
        strict: bool,
    },
    /// Write the 2-D PCA projection of one fold under one strategy.
    Project {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        strategy: NormStrategy,
        /// Fold name, e.g. `test-subject-3`; defaults to the first fold.
        #[arg(long)]
        fold: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render a `report.csv` as a table.
    Table {
        #[arg(long)]
        report: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Markdown)]
        format: Format,
        /// Output file; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check an ingestion CSV and print diagnostics.
    Validate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "subject")]
        subject_column: String,
        #[arg(long, default_value = "session")]
        session_column: String,
        #[arg(long, default_value = "label")]
        label_column: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Markdown,
    Csv,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Io(_) => 3,
            Error::Csv(c) if c.is_io_error() => 3,
            Error::Cell { .. } | Error::GridExhausted(_) | Error::Numeric(_) | Error::Propagated(_) => 4,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure {
        code: 3,
        message: format!("{}: {e}", path.display()),
    }
}

type CliResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth { config, out, seed } => synth(&config, &out, seed),
        Command::Run {
            config,
            out,
            seed,
            jobs,
            strict,
        } => run(&config, out, seed, jobs, strict),
        Command::Project {
            config,
            strategy,
            fold,
            out,
            seed,
        } => project(&config, strategy, fold, &out, seed),
        Command::Table { report, format, out } => table(&report, format, out.as_deref()),
        Command::Validate {
            data,
            subject_column,
            session_column,
            label_column,
        } => validate(
            &data,
            &CsvSchema {
                subject: subject_column,
                session: session_column,
                label: label_column,
            },
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).map_err(|e| io_failure(path, e))
}

fn synth(config: &Path, out: &Path, seed: Option<u64>) -> CliResult {
    let mut cfg: SyntheticShiftConfig = serde_json::from_str(&read_text(config)?).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", config.display()),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let ds = generate_synthetic(&cfg)?;
    write_csv(&ds, out)?;
    println!(
        "wrote {}: n = {}, m = {}, domains = {}",
        out.display(),
        ds.n_rows(),
        ds.n_features(),
        ds.rows_by_domain().len()
    );
    Ok(())
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::from_json_str(&read_text(path)?).map_err(|e| Failure {
        code: 2,
        message: format!("{}: {e}", path.display()),
    })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>, strict: bool) -> CliResult {
    let mut cfg = load_config(config, seed)?;
    if let Some(j) = jobs {
        cfg.jobs = Some(j);
    }
    if let Some(o) = out {
        cfg.output_dir = Some(o);
    }
    cfg.validate()?;
    let dir = cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("report"));
    Exec::with_jobs(cfg.jobs, || -> CliResult {
        let ds = cfg.load_dataset()?;
        let folds = cfg.folds(&ds)?;
        let report = run_on_folds(&cfg, &ds, &folds).map_err(|e| Failure {
            code: 4,
            message: e.to_string(),
        })?;
        write_report(&report, &ds, &folds, &dir)?;
        print!("{}", render_markdown(&report));
        println!("\nreport written to {}", dir.display());
        if strict && report.any_failed() {
            let n = report.cells.iter().filter(|c| c.failed()).count();
            return Err(Failure {
                code: 4,
                message: format!("{n} cell(s) failed; see {}", dir.join("report.md").display()),
            });
        }
        Ok(())
    })
}

fn project(config: &Path, strategy: NormStrategy, fold: Option<String>, out: &Path, seed: Option<u64>) -> CliResult {
    let cfg = load_config(config, seed)?;
    let ds = cfg.load_dataset()?;
    let folds = cfg.folds(&ds)?;
    let chosen = match &fold {
        Some(name) => folds.iter().find(|f| &f.name == name).ok_or_else(|| Failure {
            code: 2,
            message: format!(
                "no fold named `{name}`; available: {}",
                folds.iter().map(|f| f.name.as_str()).collect::<Vec<_>>().join(", ")
            ),
        })?,
        None => &folds[0],
    };
    normda::bench::emit_projection(&ds, chosen, strategy, cfg.eps, out)?;
    println!(
        "wrote {} ({} rows, fold {}, {strategy})",
        out.display(),
        chosen.train_idx.len() + chosen.test_idx.len(),
        chosen.name
    );
    Ok(())
}

fn table(report: &Path, format: Format, out: Option<&Path>) -> CliResult {
    let text = match format {
        Format::Markdown => {
            let rows = read_table_csv(report)?;
            markdown_from_rows(&rows)
        }
        Format::Csv => {
            read_table_csv(report)?;
            read_text(report)?
        }
    };
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(p, e))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn validate(data: &Path, schema: &CsvSchema) -> CliResult {
    let ds = load_csv(data, schema)?;
    let domains = ds.rows_by_domain();
    println!(
        "{}: {} rows, {} features, {} classes, {} subjects, {} domains",
        data.display(),
        ds.n_rows(),
        ds.n_features(),
        ds.labels().iter().collect::<BTreeSet<_>>().len(),
        ds.subjects().len(),
        domains.len()
    );
    for (key, rows) in &domains {
        println!("  {key}: {} rows", rows.len());
        if rows.len() == 1 {
            println!("warning: {key} has a single row; Z2 and Z3 cannot standardize it as a test domain");
        }
    }
    let names: Vec<String> = match ds.feature_names() {
        Some(n) => n.to_vec(),
        None => (0..ds.n_features()).map(|j| format!("feature {j}")).collect(),
    };
    let x = ds.features();
    for (j, name) in names.iter().enumerate() {
        let col = x.column(j);
        if col.iter().all(|v| *v == col[0]) {
            println!("warning: column `{name}` is constant");
        }
    }
    Ok(())
}
