//! `abyss` command-line driver: config loading, artifact layout and the
//! subcommands.
//!
//! Artifacts live under `--out`:
//!
//! ```text
//! data/                      manifest.json + raw f32 tiles (meters)
//! models/<kind>/             model.json, tracker.json, loss_trace.json
//! models/<kind>/calibration/ calibrated tracker.json
//! eval/                      report.csv, report.json, heatmaps/<method>/
//! sweep/                     report.csv, sweep.json
//! report/                    report.csv, report.json, summary.md, heatmaps/
//! ```
//!
//! Every subcommand also writes `run.json` into its directory.

pub mod overrides;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use abyss_core::Dataset;
use abyss_nn::ModelKind;
use abyss_train::pipeline;
use abyss_train::report::{self, Report};
use abyss_train::sweep::SweepOutcome;
use abyss_train::train::{self as trainer, load_tracker, Trained, TRACKER_FILE};
use abyss_train::{heatmap, ExperimentConfig, Method, TrainError};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;
use thiserror::Error;

pub const DATA_DIR: &str = "data";
pub const MODELS_DIR: &str = "models";
pub const CALIBRATION_DIR: &str = "calibration";
pub const EVAL_DIR: &str = "eval";
pub const SWEEP_DIR: &str = "sweep";
pub const REPORT_DIR: &str = "report";
pub const HEATMAP_DIR: &str = "heatmaps";
pub const RUN_FILE: &str = "run.json";
pub const SWEEP_FILE: &str = "sweep.json";
pub const SUMMARY_FILE: &str = "summary.md";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{0}")]
    Runtime(#[from] TrainError),
    #[error("{path}: {msg}")]
    Missing { path: PathBuf, msg: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) | CliError::Missing { .. } => 2,
        }
    }
}

impl From<abyss_core::Error> for CliError {
    fn from(e: abyss_core::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "abyss", version, about = "Uncertainty-aware bathymetric super-resolution")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment config; defaults apply to missing keys.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root for all artifacts.
    #[arg(long, global = true, default_value = "abyss-out")]
    pub out: PathBuf,
    /// Model kind for train, calibrate and sweep.
    #[arg(long, global = true)]
    pub model: Option<ModelKind>,
    /// Comma-separated evaluation methods.
    #[arg(long, global = true, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Tracker block size (sweep: run only this size).
    #[arg(long = "block-size", global = true)]
    pub block_size: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted config override, e.g. `train.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    pub quiet: bool,
    #[arg(long, short, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Build the synthetic manifest and tiles.
    Synth,
    /// Train a model on the fit split.
    Train,
    /// Calibrate a trained model's tracker on the held-out split.
    Calibrate,
    /// Compare methods on the validation split.
    Eval,
    /// Uncertainty metrics across tracker block sizes.
    Sweep,
    /// Re-render tables and heatmaps from stored artifacts.
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::Train => "train",
            Command::Calibrate => "calibrate",
            Command::Eval => "eval",
            Command::Sweep => "sweep",
            Command::Report => "report",
        }
    }
}

/// Parses `argv` (including the program name), runs the subcommand and
/// returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    init_logging(&cli);
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("abyss {}: {e}", cli.command.name());
            e.exit_code()
        }
    }
}

fn init_logging(cli: &Cli) {
    let level = if cli.quiet {
        log::LevelFilter::Error
    } else if cli.verbose {
        log::LevelFilter::Debug
    } else {
        log::LevelFilter::Info
    };
    let _ = env_logger::Builder::new().filter_level(level).format_target(false).try_init();
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_config(cli)?;
    match cli.command {
        Command::Synth => synth(cli, &cfg),
        Command::Train => train(cli, &cfg),
        Command::Calibrate => calibrate(cli, &cfg),
        Command::Eval => eval(cli, &cfg),
        Command::Sweep => sweep(cli, &cfg),
        Command::Report => render_report(cli, &cfg),
    }
}

/// File (or defaults), then `--model`, then `--set`, then the dedicated
/// flags, then seed propagation and validation. Nothing is written until
/// this succeeds.
pub fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Missing { path: path.clone(), msg: format!("cannot read config: {e}") })?;
            serde_json::from_str::<ExperimentConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(kind) = cli.model {
        if cfg.train.model.kind != kind {
            cfg.train.model = cfg.model_for(kind);
        }
    }
    let base = serde_json::to_value(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    let merged = overrides::apply(&base, &cli.overrides)?;
    let mut cfg: ExperimentConfig = serde_json::from_value(merged).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(methods) = &cli.methods {
        cfg.eval.methods = methods.clone();
    }
    if let Some(k) = cli.block_size {
        if cli.command == Command::Sweep {
            cfg.sweep.block_sizes = vec![k];
        } else {
            cfg.train.tracker.block_size = k;
        }
    }
    cfg.resolve().map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Debug, Serialize)]
struct RunRecord<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    config_digest: String,
    config: &'a ExperimentConfig,
    outputs: Vec<String>,
}

fn write_run(dir: &Path, command: Command, cfg: &ExperimentConfig, outputs: &[PathBuf]) -> Result<()> {
    let record = RunRecord {
        tool: "abyss",
        version: env!("CARGO_PKG_VERSION"),
        command: command.name(),
        seed: cfg.seed,
        config_digest: cfg.digest(),
        config: cfg,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let text = serde_json::to_string_pretty(&record).map_err(TrainError::from)?;
    write(&dir.join(RUN_FILE), text.as_bytes())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    fs::write(path, bytes).map_err(|e| CliError::Missing { path: path.to_path_buf(), msg: e.to_string() })
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Missing { path: dir.to_path_buf(), msg: e.to_string() })
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Missing { path: path.to_path_buf(), msg: format!("not found ({hint})") })
    }
}

pub fn model_dir(out: &Path, kind: ModelKind) -> PathBuf {
    out.join(MODELS_DIR).join(kind.name())
}

pub fn calibration_dir(out: &Path, kind: ModelKind) -> PathBuf {
    model_dir(out, kind).join(CALIBRATION_DIR)
}

fn selected_kind(cli: &Cli, cfg: &ExperimentConfig) -> ModelKind {
    cli.model.unwrap_or(cfg.train.model.kind)
}

/// Loads the stored dataset (normalized to `[0, 1]`).
fn load_data(out: &Path, cfg: &ExperimentConfig) -> Result<Dataset> {
    let dir = out.join(DATA_DIR);
    require(&dir.join(abyss_core::synth::MANIFEST_FILE), "run `abyss synth` first")?;
    let ds = Dataset::load(&dir)?;
    let m = &ds.manifest;
    if m.tile_size != cfg.data.tile_size || m.scale != cfg.data.scale || m.seed != cfg.data.seed {
        log::warn!(
            "stored data (tile {} scale {} seed {}) differs from the config; using the stored data",
            m.tile_size,
            m.scale,
            m.seed
        );
    }
    Ok(ds.normalized()?)
}

/// Loads a trained model with its calibrated tracker.
fn load_calibrated(out: &Path, kind: ModelKind) -> Result<Trained> {
    let dir = model_dir(out, kind);
    require(&dir.join(trainer::MODEL_FILE), "run `abyss train` first")?;
    let cal = calibration_dir(out, kind).join(TRACKER_FILE);
    require(&cal, "run `abyss calibrate` first")?;
    let mut t = Trained::load(&dir)?;
    t.tracker = load_tracker(&cal)?;
    Ok(t)
}

fn synth(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let dir = cli.out.join(DATA_DIR);
    let ds = pipeline::synthesize(cfg)?;
    create_dir(&dir)?;
    ds.save(&dir)?;
    log::info!("wrote {} train and {} val tiles to {}", ds.train.len(), ds.val.len(), dir.display());
    write_run(&dir, Command::Synth, cfg, &[dir.join(abyss_core::synth::MANIFEST_FILE)])
}

fn train(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let kind = selected_kind(cli, cfg);
    let ds = load_data(&cli.out, cfg)?;
    let dir = model_dir(&cli.out, kind);
    let (fit, _) = trainer::split_calibration(&ds.train, cfg.train.calibration_fraction);
    let mut train_cfg = cfg.train.clone();
    train_cfg.model = cfg.model_for(kind);
    let model = abyss_nn::Model::new(train_cfg.model.clone()).map_err(TrainError::from)?;
    let tracker = pipeline::new_tracker(cfg, &ds)?;
    log::info!("training {kind} on {} tiles for {} epochs", fit.len(), train_cfg.epochs);
    let trained = trainer::train(model, tracker, &fit, &train_cfg, Some(&dir))?;
    trained.save(&dir)?;
    if let Some(loss) = trained.trace.last_epoch_loss() {
        log::info!("final epoch loss {loss:.6}");
    }
    let stale = calibration_dir(&cli.out, kind);
    if stale.exists() {
        log::warn!("removing stale calibration at {}", stale.display());
        fs::remove_dir_all(&stale).map_err(|e| CliError::Missing { path: stale.clone(), msg: e.to_string() })?;
    }
    write_run(&dir, Command::Train, cfg, &[dir.join(trainer::MODEL_FILE), dir.join(TRACKER_FILE)])
}

fn calibrate(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let kind = selected_kind(cli, cfg);
    let ds = load_data(&cli.out, cfg)?;
    let mdir = model_dir(&cli.out, kind);
    require(&mdir.join(trainer::MODEL_FILE), "run `abyss train` first")?;
    let mut trained = Trained::load(&mdir)?;
    let (_, calib) = trainer::split_calibration(&ds.train, cfg.train.calibration_fraction);
    trainer::run_calibration(&trained.model, &mut trained.tracker, &calib)?;
    let dir = calibration_dir(&cli.out, kind);
    let path = dir.join(TRACKER_FILE);
    write(&path, trained.tracker.to_json()?.as_bytes())?;
    log::info!("calibrated {kind} on {} tiles", calib.len());
    write_run(&dir, Command::Calibrate, cfg, &[path])
}

/// Loads every model the configured methods need, failing on the first
/// missing checkpoint.
fn load_models(out: &Path, cfg: &ExperimentConfig) -> Result<Vec<(ModelKind, Trained)>> {
    pipeline::model_methods(cfg)
        .into_iter()
        .filter_map(Method::model_kind)
        .map(|kind| Ok((kind, load_calibrated(out, kind)?)))
        .collect()
}

fn eval(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let models = load_models(&cli.out, cfg)?;
    let ds = load_data(&cli.out, cfg)?;
    let refs: Vec<(ModelKind, &Trained)> = models.iter().map(|(k, t)| (*k, t)).collect();
    let report = pipeline::evaluate_methods(&ds, cfg, &refs)?;
    let dir = cli.out.join(EVAL_DIR);
    let mut outputs = report::emit_report(&report, &dir)?;
    outputs.extend(heatmaps(&ds, cfg, &models, &dir.join(HEATMAP_DIR))?);
    log_overall(&report);
    write_run(&dir, Command::Eval, cfg, &outputs)
}

/// Error and interval-width heatmaps for the configured validation tiles.
fn heatmaps(ds: &Dataset, cfg: &ExperimentConfig, models: &[(ModelKind, Trained)], dir: &Path) -> Result<Vec<PathBuf>> {
    let mut outputs = Vec::new();
    for (kind, t) in models {
        for &idx in &cfg.eval.heatmap_tiles {
            let Some(tile) = ds.val.get(idx) else {
                log::warn!("heatmap tile {idx} is out of range ({} val tiles)", ds.val.len());
                continue;
            };
            let pred = trainer::predict_tiles(&t.model, std::slice::from_ref(tile))?.remove(0);
            let bounds = t.tracker.bounds(&pred)?;
            let sub = dir.join(kind.name());
            create_dir(&sub)?;
            outputs.extend(heatmap::emit_heatmaps(&tile.hr, &pred, &bounds, &sub, &format!("val{idx}"))?);
        }
    }
    Ok(outputs)
}

fn log_overall(report: &Report) {
    for r in report.rows.iter().filter(|r| r.region == abyss_train::eval::OVERALL) {
        log::info!(
            "{:<9} ssim {:.4} psnr {:.2} mse {:.3e}{}",
            r.method,
            r.ssim,
            r.psnr_db,
            r.mse,
            r.uwidth.map(|u| format!(" uwidth {u:.4} cal_err {:.4}", r.cal_err.unwrap_or(f64::NAN))).unwrap_or_default()
        );
    }
}

fn sweep(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let kind = selected_kind(cli, cfg);
    let ds = load_data(&cli.out, cfg)?;
    let shared = if cfg.sweep.retrain {
        None
    } else {
        let dir = model_dir(&cli.out, kind);
        require(&dir.join(trainer::MODEL_FILE), "run `abyss train` first or set sweep.retrain=true")?;
        Some(Trained::load(&dir)?)
    };
    let outcome = abyss_train::block_size_sweep(&ds, cfg, kind, shared.as_ref())?;
    for (k, u) in outcome.uwidths() {
        log::info!("k={k:<3} uwidth {u:.5}");
    }
    let dir = cli.out.join(SWEEP_DIR);
    let csv = dir.join(report::CSV_FILE);
    write(&csv, report::rows_to_csv(&outcome.all_rows())?.as_bytes())?;
    let json = dir.join(SWEEP_FILE);
    write(&json, serde_json::to_string_pretty(&outcome).map_err(TrainError::from)?.as_bytes())?;
    write_run(&dir, Command::Sweep, cfg, &[csv, json])
}

fn render_report(cli: &Cli, cfg: &ExperimentConfig) -> Result<()> {
    let eval_dir = cli.out.join(EVAL_DIR);
    require(&eval_dir.join(report::JSON_FILE), "run `abyss eval` first")?;
    let stored = report::read_report(&eval_dir)?;
    let dir = cli.out.join(REPORT_DIR);
    let mut outputs = report::emit_report(&stored, &dir)?;
    let sweep_path = cli.out.join(SWEEP_DIR).join(SWEEP_FILE);
    let sweep = if sweep_path.exists() {
        let text = fs::read_to_string(&sweep_path)
            .map_err(|e| CliError::Missing { path: sweep_path.clone(), msg: e.to_string() })?;
        Some(serde_json::from_str::<SweepOutcome>(&text).map_err(TrainError::from)?)
    } else {
        None
    };
    let summary = dir.join(SUMMARY_FILE);
    write(&summary, summary_markdown(&stored, sweep.as_ref()).as_bytes())?;
    outputs.push(summary);

    let methods: Vec<Method> =
        pipeline::model_methods(cfg).into_iter().filter(|m| stored.rows.iter().any(|r| r.method == m.name())).collect();
    if !methods.is_empty() {
        let mut hcfg = cfg.clone();
        hcfg.eval.methods = methods;
        let models = load_models(&cli.out, &hcfg)?;
        let ds = load_data(&cli.out, cfg)?;
        outputs.extend(heatmaps(&ds, cfg, &models, &dir.join(HEATMAP_DIR))?);
    }
    write_run(&dir, Command::Report, cfg, &outputs)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into())
}

/// Markdown tables of the evaluation rows and, when present, the sweep.
pub fn summary_markdown(report: &Report, sweep: Option<&SweepOutcome>) -> String {
    let mut s = String::from("# Evaluation\n\n");
    s.push_str("| method | region | tiles | SSIM | PSNR (dB) | MSE | UWidth | CalErr |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for r in &report.rows {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.4} | {:.2} | {:.3e} | {} | {} |",
            r.method,
            r.region,
            r.n_tiles,
            r.ssim,
            r.psnr_db,
            r.mse,
            fmt_opt(r.uwidth),
            fmt_opt(r.cal_err)
        );
    }
    if let Some(a) = &report.metadata.block_size_analysis {
        let _ = writeln!(
            s,
            "\nBlock size: closed form {:.3}, stationary point {:.3}, numeric argmin {:.3}",
            a.closed_form, a.stationary_point, a.numeric_argmin
        );
    }
    if let Some(sw) = sweep {
        let _ = writeln!(s, "\n# Block-size sweep ({}{})\n", sw.method, if sw.retrained { ", retrained" } else { "" });
        s.push_str("| k | UWidth | CalErr |\n|---|---|---|\n");
        for (e, r) in sw.entries.iter().zip(sw.overall_rows()) {
            let _ = writeln!(s, "| {} | {} | {} |", e.block_size, fmt_opt(r.uwidth), fmt_opt(r.cal_err));
        }
    }
    s
}
