//! Command-line entry point: subcommand routing, shared station/root
//! configuration, and the exit-code contract.
//!
//! Logs go to stderr; machine-readable results go to stdout as JSON.
//! Exit codes: 0 success, 1 validation error, 2 i/o error, 3 internal
//! invariant violation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use crate::bridge;
use crate::dataset;
use crate::error::{Error, Result};
use crate::ingest;
use crate::nn::{save_model, MLPConfig};
use crate::solar::{self, GeoLocation};
use crate::train::{
    compare_optimizers, emit_curves, sweep, OptimizerChoice, SweepGrid, TrainConfig,
};

#[derive(Debug, Parser)]
#[command(
    name = "solarcast",
    version,
    about = "Per-node solar radiation forecasting toolkit",
    propagate_version = true
)]
struct Cli {
    /// Optional TOML config file with station coordinates and data root.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    log_level: Option<LogLevel>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LogLevel {
    Error,
    Warn,
    Info,
    Debug,
}

impl LogLevel {
    fn to_filter(self) -> log::LevelFilter {
        match self {
            LogLevel::Error => log::LevelFilter::Error,
            LogLevel::Warn => log::LevelFilter::Warn,
            LogLevel::Info => log::LevelFilter::Info,
            LogLevel::Debug => log::LevelFilter::Debug,
        }
    }
}

/// Values an optional `--config` TOML file can provide.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    latitude_deg: Option<f64>,
    longitude_deg: Option<f64>,
    data_root: Option<PathBuf>,
    log_level: Option<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print sun position, solar noon, altitude ratio, and clear-sky
    /// irradiance for a location and instant.
    SolarPos(SolarPosArgs),
    /// Serve the station report intake over HTTP.
    IngestServe(IngestServeArgs),
    /// Dataset operations.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Train a model on a built dataset.
    Train(TrainArgs),
    /// Train the full architecture/optimizer grid and pick the best cell.
    Sweep(SweepArgs),
    /// Run the SGD-vs-Adam comparison on the 7-32-32-1 architecture.
    Compare(CompareArgs),
    /// Predict irradiance from a forecast grid snapshot.
    Predict(PredictArgs),
}

#[derive(Debug, Args)]
struct StationArgs {
    /// Station latitude in degrees.
    #[arg(long = "lat", env = "SOLARCAST_LAT", value_name = "DEG")]
    latitude_deg: Option<f64>,
    /// Station longitude in degrees.
    #[arg(long = "lon", env = "SOLARCAST_LON", value_name = "DEG")]
    longitude_deg: Option<f64>,
}

impl StationArgs {
    /// Flags (or their env vars) win over the config file.
    fn resolve(&self, file: &FileConfig) -> Result<GeoLocation> {
        let lat = self
            .latitude_deg
            .or(file.latitude_deg)
            .ok_or_else(|| Error::validation("station latitude missing: pass --lat, set SOLARCAST_LAT, or add latitude_deg to the config file"))?;
        let lon = self
            .longitude_deg
            .or(file.longitude_deg)
            .ok_or_else(|| Error::validation("station longitude missing: pass --lon, set SOLARCAST_LON, or add longitude_deg to the config file"))?;
        GeoLocation::new(lat, lon)
    }
}

#[derive(Debug, Args)]
struct SolarPosArgs {
    #[command(flatten)]
    station: StationArgs,
    /// Instant, RFC 3339 (e.g. 2024-03-01T17:30:16Z).
    #[arg(long, value_name = "RFC3339")]
    time: String,
}

#[derive(Debug, Args)]
struct IngestServeArgs {
    /// Bind address, e.g. 127.0.0.1:8000 (port 0 picks a free port).
    #[arg(long, value_name = "ADDR:PORT")]
    bind: String,
    #[command(flatten)]
    station: StationArgs,
    /// Directory receiving one JSON record per report.
    #[arg(long, env = "SOLARCAST_DATA_ROOT", value_name = "DIR")]
    data_root: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum DatasetCommand {
    /// Read stored records and write the training table.
    Build(DatasetBuildArgs),
}

#[derive(Debug, Args)]
struct DatasetBuildArgs {
    #[arg(long, env = "SOLARCAST_DATA_ROOT", value_name = "DIR")]
    data_root: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    /// Fit train-split feature statistics and record them for training
    /// and inference. Off by default.
    #[arg(long)]
    standardize: bool,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OptimizerArg {
    Sgd,
    Adam,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "adam")]
    optimizer: OptimizerArg,
    /// Learning rate; defaults to 0.001 for both optimizers.
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    /// Final schedule default; hyperparameter evaluation used 100.
    #[arg(long, default_value_t = 1000)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "32,32")]
    hidden: Vec<usize>,
    /// Append a ReLU after the output layer (predictions can never be
    /// negative).
    #[arg(long)]
    final_relu: bool,
    /// Seeds both initialization and epoch shuffling.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_name = "FILE")]
    out_model: PathBuf,
    /// Directory for the convergence CSV/SVG pair.
    #[arg(long, value_name = "DIR")]
    out_curve: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    /// Hidden widths to try; the default grid is 8..256 by powers of two
    /// (pass e.g. --widths 7,8,16 to include 7).
    #[arg(long, value_delimiter = ',')]
    widths: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[arg(long, value_name = "FILE")]
    dataset: PathBuf,
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long, default_value_t = 100)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PredictArgs {
    #[arg(long, value_name = "FILE")]
    model: PathBuf,
    /// Grid snapshot, line-delimited JSON.
    #[arg(long, value_name = "JSONL")]
    grid: PathBuf,
    #[command(flatten)]
    station: StationArgs,
    /// Valid time to select when the snapshot file holds several.
    #[arg(long, value_name = "RFC3339")]
    time: Option<String>,
}

/// Parses and runs; returns the process exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };

    let file_config = match load_file_config(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    init_logging(cli.log_level, &file_config);

    match run(cli.command, &file_config) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

fn init_logging(flag: Option<LogLevel>, file: &FileConfig) {
    let level = flag
        .or_else(|| {
            file.log_level.as_deref().and_then(|s| match s {
                "error" => Some(LogLevel::Error),
                "warn" => Some(LogLevel::Warn),
                "info" => Some(LogLevel::Info),
                "debug" => Some(LogLevel::Debug),
                _ => None,
            })
        })
        .unwrap_or(LogLevel::Info);
    let _ = env_logger::Builder::new()
        .filter_level(level.to_filter())
        .format_timestamp(None)
        .try_init();
}

fn parse_rfc3339(value: &str) -> Result<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(value)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| Error::validation(format!("`{value}` is not RFC 3339: {e}")))
}

fn resolve_data_root(flag: Option<PathBuf>, file: &FileConfig) -> Result<PathBuf> {
    flag.or_else(|| file.data_root.clone()).ok_or_else(|| {
        Error::validation(
            "data root missing: pass --data-root, set SOLARCAST_DATA_ROOT, or add data_root to the config file",
        )
    })
}

fn run(command: Command, file_config: &FileConfig) -> Result<()> {
    match command {
        Command::SolarPos(args) => run_solar_pos(args, file_config),
        Command::IngestServe(args) => run_ingest_serve(args, file_config),
        Command::Dataset(DatasetCommand::Build(args)) => run_dataset_build(args, file_config),
        Command::Train(args) => run_train(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Compare(args) => run_compare(args),
        Command::Predict(args) => run_predict(args, file_config),
    }
}

fn run_solar_pos(args: SolarPosArgs, file_config: &FileConfig) -> Result<()> {
    let station = args.station.resolve(file_config)?;
    let instant = parse_rfc3339(&args.time)?;
    let pos = solar::sun_position(station, instant)?;
    let noon = solar::solar_noon(station, instant.date_naive())?;
    let ratio = solar::solar_altitude_ratio(station, instant)?;
    let potential = solar::potential_irradiance(&pos);
    println!(
        "{}",
        serde_json::json!({
            "latitude_deg": station.latitude_deg(),
            "longitude_deg": station.longitude_deg(),
            "time": instant.to_rfc3339(),
            "altitude_deg": pos.altitude_deg,
            "azimuth_deg": pos.azimuth_deg,
            "declination_deg": pos.declination_deg,
            "hour_angle_deg": pos.hour_angle_deg,
            "solar_noon": noon.to_rfc3339(),
            "altitude_ratio": ratio.value(),
            "potential_irradiance_wm2": potential,
        })
    );
    Ok(())
}

fn run_ingest_serve(args: IngestServeArgs, file_config: &FileConfig) -> Result<()> {
    let station = args.station.resolve(file_config)?;
    let data_root = resolve_data_root(args.data_root, file_config)?;
    std::fs::create_dir_all(&data_root).map_err(|e| Error::io(&data_root, e))?;

    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| Error::Internal(format!("tokio runtime: {e}")))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&args.bind)
            .await
            .map_err(|e| Error::validation(format!("cannot bind {}: {e}", args.bind)))?;
        let addr = listener
            .local_addr()
            .map_err(|e| Error::Internal(format!("local addr: {e}")))?;
        println!("{}", serde_json::json!({ "listening": addr.to_string() }));
        use std::io::Write as _;
        let _ = std::io::stdout().flush();
        log::info!("serving POST /report and GET /healthz on {addr}");
        ingest::serve(
            listener,
            ingest::IngestState {
                station,
                data_root,
            },
        )
        .await
        .map_err(|e| Error::Internal(format!("server: {e}")))
    })
}

fn run_dataset_build(args: DatasetBuildArgs, file_config: &FileConfig) -> Result<()> {
    let data_root = resolve_data_root(args.data_root, file_config)?;
    let (samples, report) = dataset::load_records(&data_root)?;
    if samples.len() < 2 {
        return Err(Error::validation(format!(
            "need at least 2 samples to build a dataset, found {}",
            samples.len()
        )));
    }
    let split = dataset::split(samples.clone(), args.train_fraction, args.seed)?;
    let stats = if args.standardize {
        let (_, stats) = dataset::standardize(split)?;
        Some(stats)
    } else {
        None
    };
    let meta = dataset::DatasetMeta {
        split_seed: args.seed,
        train_fraction: args.train_fraction,
        standardize: args.standardize,
        stats,
    };
    dataset::write_dataset(&args.out, &samples, &meta)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "samples": samples.len(),
            "skipped": report.skipped,
            "train_fraction": args.train_fraction,
            "split_seed": args.seed,
            "standardize": args.standardize,
        })
    );
    Ok(())
}

/// Reads a dataset file and reproduces its recorded split and (optional)
/// standardization so training and inference agree.
fn load_split(path: &Path) -> Result<(dataset::DatasetSplit, Option<dataset::FeatureStats>)> {
    let (samples, meta) = dataset::read_dataset(path)?;
    let mut split = dataset::split(samples, meta.train_fraction, meta.split_seed)?;
    if meta.standardize {
        let stats = meta
            .stats
            .ok_or_else(|| Error::Format("dataset marked standardized but carries no stats".into()))?;
        stats.apply_to_samples(&mut split.train);
        stats.apply_to_samples(&mut split.validation);
        Ok((split, Some(stats)))
    } else {
        Ok((split, None))
    }
}

fn run_train(args: TrainArgs) -> Result<()> {
    let (split, stats) = load_split(&args.dataset)?;
    let optimizer = match args.optimizer {
        OptimizerArg::Sgd => OptimizerChoice::Sgd { lr: args.lr },
        OptimizerArg::Adam => OptimizerChoice::Adam {
            lr: args.lr,
            beta1: crate::nn::ADAM_DEFAULT_BETA1,
            beta2: crate::nn::ADAM_DEFAULT_BETA2,
            epsilon: crate::nn::ADAM_DEFAULT_EPSILON,
        },
    };
    let config = TrainConfig {
        optimizer,
        epochs: args.epochs,
        batch_size: args.batch,
        shuffle_seed: args.seed,
        model_config: MLPConfig {
            input_dim: dataset::FEATURE_COUNT,
            hidden_widths: args.hidden,
            final_relu: args.final_relu,
            init_seed: args.seed,
        },
    };
    let outcome = crate::train::train(&config, &split)?;
    save_model(&outcome.model, stats.as_ref(), &args.out_model)?;

    let mut curve_csv = None;
    if let Some(dir) = &args.out_curve {
        let run_name = format!("train-{}", config.optimizer.name());
        let paths = emit_curves(dir, &run_name, &outcome.epochs)?;
        curve_csv = Some(paths.csv);
    }
    let last = outcome
        .final_stats()
        .ok_or_else(|| Error::Internal("training produced no epochs".into()))?;
    println!(
        "{}",
        serde_json::json!({
            "model": args.out_model,
            "epochs_run": outcome.epochs.len(),
            "optimizer_steps": outcome.optimizer_steps,
            "final_mae_wm2": last.mean_train_mae,
            "final_mse_wm2": last.mean_train_mse,
            "diverged": outcome.diverged(),
            "frozen": outcome.frozen(),
            "curve_csv": curve_csv,
        })
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let (split, _) = load_split(&args.dataset)?;
    let mut grid = SweepGrid {
        epochs: args.epochs,
        batch_size: args.batch,
        shuffle_seed: args.seed,
        init_seed: args.seed,
        ..SweepGrid::default()
    };
    if let Some(widths) = args.widths {
        grid.widths = widths;
    }
    if let Some(depths) = args.depths {
        grid.depths = depths;
    }
    let result = sweep(&split, &grid)?;

    std::fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let table = args.out.join("sweep.csv");
    let mut out = String::from(
        "optimizer,depth,width,final_relu,param_count,final_mae_wm2,final_mse_wm2,diverged,frozen\n",
    );
    for row in &result.rows {
        use std::fmt::Write as _;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.config.optimizer.name(),
            row.config.model_config.hidden_widths.len(),
            row.config.model_config.hidden_widths[0],
            row.config.model_config.final_relu,
            row.param_count,
            row.final_stats.mean_train_mae,
            row.final_stats.mean_train_mse,
            row.diverged,
            row.frozen
        );
    }
    std::fs::write(&table, out).map_err(|e| Error::io(&table, e))?;

    let best = result.best_row().map(|row| {
        serde_json::json!({
            "optimizer": row.config.optimizer.name(),
            "hidden_widths": row.config.model_config.hidden_widths,
            "final_relu": row.config.model_config.final_relu,
            "param_count": row.param_count,
            "final_mae_wm2": row.final_stats.mean_train_mae,
        })
    });
    println!(
        "{}",
        serde_json::json!({
            "table": table,
            "cells": result.rows.len(),
            "best": best,
        })
    );
    Ok(())
}

fn run_compare(args: CompareArgs) -> Result<()> {
    let (split, stats) = load_split(&args.dataset)?;
    let report = compare_optimizers(&split, args.epochs, stats.is_none(), args.seed)?;
    emit_curves(&args.out, "sgd", &report.sgd)?;
    emit_curves(&args.out, "adam", &report.adam)?;
    println!(
        "{}",
        serde_json::json!({
            "out": args.out,
            "sgd_diverged": report.sgd_diverged,
            "sgd_frozen": report.sgd_frozen,
            "adam_diverged": report.adam_diverged,
            "adam_frozen": report.adam_frozen,
            "raw_units": report.raw_units,
            "verdict": report.verdict(),
        })
    );
    Ok(())
}

fn run_predict(args: PredictArgs, file_config: &FileConfig) -> Result<()> {
    let station = args.station.resolve(file_config)?;
    let time_filter = args.time.as_deref().map(parse_rfc3339).transpose()?;
    let report = bridge::predict(&args.model, &args.grid, &station, time_filter)?;
    println!(
        "{}",
        serde_json::to_string(&report)
            .map_err(|e| Error::Internal(format!("report serialization: {e}")))?
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn help_lists_all_seven_subcommands() {
        let err = Cli::try_parse_from(["solarcast", "--help"]).unwrap_err();
        let text = err.to_string();
        for sub in [
            "solar-pos",
            "ingest-serve",
            "dataset",
            "train",
            "sweep",
            "compare",
            "predict",
        ] {
            assert!(text.contains(sub), "help missing `{sub}`:\n{text}");
        }
    }

    #[test]
    fn unknown_flag_exits_one_and_names_the_flag() {
        let code = dispatch(["solarcast", "solar-pos", "--bogus"]);
        assert_eq!(code, 1);
    }

    #[test]
    fn help_exits_zero() {
        assert_eq!(dispatch(["solarcast", "--help"]), 0);
        assert_eq!(dispatch(["solarcast", "train", "--help"]), 0);
    }

    #[test]
    fn unknown_subcommand_exits_one() {
        assert_eq!(dispatch(["solarcast", "transmogrify"]), 1);
    }

    #[test]
    fn station_resolution_prefers_flags_over_config() {
        let file = FileConfig {
            latitude_deg: Some(10.0),
            longitude_deg: Some(20.0),
            data_root: None,
            log_level: None,
        };
        let flags = StationArgs {
            latitude_deg: Some(42.0),
            longitude_deg: None,
        };
        let loc = flags.resolve(&file).unwrap();
        assert_eq!(loc.latitude_deg(), 42.0);
        assert_eq!(loc.longitude_deg(), 20.0);

        let none = StationArgs {
            latitude_deg: None,
            longitude_deg: None,
        };
        assert!(none.resolve(&FileConfig::default()).is_err());
    }
}
