//! Command-line front end.

mod config;
mod io;

pub use config::{load_config, parse_config, render_config, ConfigError, ExperimentConfig, DATA_KEYS};
pub use io::{
    diagram_csv, diagram_svg, log_to_csv, parse_diagram_csv, parse_log, read_log, read_report, write_atomic, IoError,
    ReportBins, ReportFile, RunMeta,
};

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::harness::{
    ensemble, grid_search, make_dataset, multi_seed, train, DataError, EnsembleError, HarnessError, MetricStat,
    PredictionLog, RunResult, TrainError,
};
use crate::metrics::{reliability_bins, BinScheme, CalibrationReport, MetricsError, DEFAULT_BINS};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "DUMCAL_OUT_DIR";
pub const LOG_FILE: &str = "predictions.csv";
pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Parser)]
#[command(name = "dumcal", version, about = "Calibration laboratory for small classifiers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, clap::Args)]
pub struct OutArg {
    /// Output directory
    #[arg(long, env = OUT_DIR_ENV, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write its prediction log and report
    Train {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
        /// Override the number of calibration bins
        #[arg(long)]
        bins: Option<usize>,
    },
    /// Recompute the report of a prediction log and print it
    Evaluate {
        log: PathBuf,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Grid search over the config's [grid] section
    Grid {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
    },
    /// Average the probabilities of several aligned logs
    Ensemble {
        #[arg(required = true, num_args = 2..)]
        logs: Vec<PathBuf>,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
    },
    /// Train once per seed and aggregate
    Multiseed {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        out: OutArg,
        #[arg(long, default_value_t = 10)]
        seeds: usize,
    },
    /// Reliability table and SVG for a prediction log
    Diagram {
        log: PathBuf,
        #[arg(long, default_value = "fixed")]
        scheme: BinScheme,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("training failed: {0}")]
    Train(#[from] TrainError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Usage(String),
}

fn run_meta(config_digest: String, run: &RunResult) -> RunMeta {
    RunMeta {
        config_digest: Some(config_digest),
        params_digest: Some(run.params_digest.clone()),
        seed: Some(run.seed),
        wall_time_secs: Some(run.wall_time_secs),
        members: None,
    }
}

fn run_files(dir: &Path, digest: String, run: &RunResult) -> Vec<(PathBuf, Vec<u8>)> {
    vec![
        (dir.join(LOG_FILE), log_to_csv(&run.log).into_bytes()),
        (
            dir.join(REPORT_FILE),
            ReportFile::new(&run.report, run_meta(digest, run))
                .to_json()
                .into_bytes(),
        ),
    ]
}

/// Trains the configured model; returns the written log and report paths.
pub fn cmd_train(config: &Path, out: &Path, bins: Option<usize>) -> Result<(PathBuf, PathBuf), CliError> {
    let mut cfg = load_config(config)?;
    if let Some(b) = bins {
        cfg.training.bins = b;
    }
    let data = make_dataset(&cfg.data)?;
    let run = train(&cfg.training, &data)?;
    write_atomic(&run_files(out, cfg.training.digest(), &run))?;
    Ok((out.join(LOG_FILE), out.join(REPORT_FILE)))
}

pub fn evaluate_log(log: &PredictionLog, bins: usize) -> Result<ReportFile, CliError> {
    Ok(ReportFile::new(
        &CalibrationReport::compute(&log.records, bins)?,
        RunMeta::default(),
    ))
}

pub fn cmd_evaluate(log: &Path, bins: usize) -> Result<String, CliError> {
    Ok(evaluate_log(&read_log(log)?, bins)?.to_json())
}

/// Writes `best_config.ini` and `grid_trace.csv`.
pub fn cmd_grid(config: &Path, out: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let cfg = load_config(config)?;
    if cfg.grid.is_empty() {
        return Err(CliError::Usage(format!("{}: no [grid] section", config.display())));
    }
    let data = make_dataset(&cfg.data)?;
    let outcome = grid_search(&cfg.grid, &cfg.training, &data)?;
    let mut trace = String::from("candidate");
    for (key, _) in &cfg.grid {
        let _ = write!(trace, ",{key}");
    }
    trace.push_str(",val_bacc,val_ece,selected\n");
    for (i, p) in outcome.trace.iter().enumerate() {
        let _ = write!(trace, "{i}");
        for (_, v) in &p.assignment {
            if v.contains(',') {
                let _ = write!(trace, ",\"{v}\"");
            } else {
                let _ = write!(trace, ",{v}");
            }
        }
        let _ = writeln!(trace, ",{:.16e},{:.16e},{}", p.val_bacc, p.val_ece, i == outcome.best);
    }
    let best = render_config(outcome.best_config(), &cfg.data);
    let files = vec![
        (out.join("best_config.ini"), best.into_bytes()),
        (out.join("grid_trace.csv"), trace.into_bytes()),
    ];
    write_atomic(&files)?;
    Ok((files[0].0.clone(), files[1].0.clone()))
}

/// Writes the ensemble log and report.
pub fn cmd_ensemble(logs: &[PathBuf], out: &Path, bins: usize) -> Result<ReportFile, CliError> {
    let loaded = logs.iter().map(|p| read_log(p)).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<&PredictionLog> = loaded.iter().collect();
    let merged = ensemble(&refs)?;
    let meta = RunMeta {
        members: Some(logs.len()),
        ..RunMeta::default()
    };
    let report = ReportFile::new(&CalibrationReport::compute(&merged.records, bins)?, meta);
    write_atomic(&[
        (out.join("ensemble_predictions.csv"), log_to_csv(&merged).into_bytes()),
        (out.join("ensemble_report.json"), report.to_json().into_bytes()),
    ])?;
    Ok(report)
}

#[derive(Debug, Serialize)]
struct AggregateFile<'a> {
    seeds: &'a [u64],
    config_digest: String,
    metrics: &'a [MetricStat],
    ensemble: ReportFile,
}

/// Trains `seeds` runs starting from the configured seed; writes each run
/// under `seed_<s>/` plus `aggregate.json` with the ensemble report.
pub fn cmd_multiseed(config: &Path, out: &Path, seeds: usize) -> Result<PathBuf, CliError> {
    let cfg = load_config(config)?;
    let data = make_dataset(&cfg.data)?;
    let list: Vec<u64> = (0..seeds as u64).map(|k| cfg.training.seed + k).collect();
    let agg = multi_seed(&cfg.training, &data, &list)?;
    let digest = cfg.training.digest();
    let logs: Vec<&PredictionLog> = agg.runs.iter().map(|r| &r.log).collect();
    let merged = ensemble(&logs)?;
    let ens_report = CalibrationReport::compute(&merged.records, cfg.training.bins)?;
    let mut files = Vec::new();
    for run in &agg.runs {
        files.extend(run_files(&out.join(format!("seed_{}", run.seed)), digest.clone(), run));
    }
    let doc = AggregateFile {
        seeds: &agg.seeds,
        config_digest: digest,
        metrics: &agg.stats,
        ensemble: ReportFile::new(
            &ens_report,
            RunMeta {
                members: Some(agg.runs.len()),
                ..RunMeta::default()
            },
        ),
    };
    let path = out.join("aggregate.json");
    files.push((
        path.clone(),
        (serde_json::to_string_pretty(&doc).expect("serializes") + "\n").into_bytes(),
    ));
    files.push((out.join("ensemble_predictions.csv"), log_to_csv(&merged).into_bytes()));
    write_atomic(&files)?;
    Ok(path)
}

/// Writes `reliability.csv` and `reliability.svg`.
pub fn cmd_diagram(log: &Path, scheme: BinScheme, bins: usize, out: &Path) -> Result<(PathBuf, PathBuf), CliError> {
    let log = read_log(log)?;
    let table = reliability_bins(&log.records, scheme, bins)?;
    let files = vec![
        (out.join("reliability.csv"), diagram_csv(&table).into_bytes()),
        (out.join("reliability.svg"), diagram_svg(&table).into_bytes()),
    ];
    write_atomic(&files)?;
    Ok((files[0].0.clone(), files[1].0.clone()))
}

/// Runs one parsed command, returning text for standard output.
pub fn run(cli: Cli) -> Result<String, CliError> {
    let shown = |p: &Path| p.display().to_string();
    Ok(match cli.command {
        Command::Train { config, out, bins } => {
            let (log, report) = cmd_train(&config, &out.out, bins)?;
            format!("wrote {} and {}\n", shown(&log), shown(&report))
        }
        Command::Evaluate { log, bins } => cmd_evaluate(&log, bins)?,
        Command::Grid { config, out } => {
            let (best, trace) = cmd_grid(&config, &out.out)?;
            format!("wrote {} and {}\n", shown(&best), shown(&trace))
        }
        Command::Ensemble { logs, out, bins } => {
            cmd_ensemble(&logs, &out.out, bins)?;
            format!("wrote ensemble log and report to {}\n", shown(&out.out))
        }
        Command::Multiseed { config, out, seeds } => {
            if seeds < 2 {
                return Err(CliError::Usage(format!("--seeds must be at least 2, got {seeds}")));
            }
            format!("wrote {}\n", shown(&cmd_multiseed(&config, &out.out, seeds)?))
        }
        Command::Diagram { log, scheme, bins, out } => {
            let (csv, svg) = cmd_diagram(&log, scheme, bins, &out.out)?;
            format!("wrote {} and {}\n", shown(&csv), shown(&svg))
        }
    })
}
