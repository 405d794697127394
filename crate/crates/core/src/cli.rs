//! Command-line surface: `gen-data`, `train`, `eval`, `simulate`, `grad-check`.
//!
//! Settings come from three layers, later ones winning: a flat `key = value`
//! file (`--config`), repeated `--set key=value` pairs, then dedicated flags.
//! Unknown keys are rejected.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::afat::{afat_run, IouOracle, QualityPredictor};
use crate::error::{Error, Result};
use crate::gradgate::{self, GradGateOptions};
use crate::labeling::{dataset_read, dataset_write, WindowSet};
use crate::qpn::{load_checkpoint, save_checkpoint, QpnArch, QpnModel};
use crate::simworld::{generate_dataset, generate_range, ScenarioConfig};
use crate::trainer::{evaluate, train, write_metrics_csv, Evaluation, TrainConfig};

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_IO: u8 = 3;
pub const EXIT_FORMAT: u8 = 4;
pub const EXIT_CONTRACT: u8 = 5;
pub const EXIT_NUMERIC: u8 = 6;
pub const EXIT_GRAD_CHECK: u8 = 7;

/// Training keys accepted besides the scenario keys.
pub const TRAIN_KEYS: &[&str] = &[
    "epochs",
    "learning_rate",
    "lr_schedule",
    "momentum",
    "batch_size",
    "weight_success",
    "weight_lost",
    "train_seed",
];

#[derive(Debug, Parser)]
#[command(name = "afat", version, about = "Failure-aware tracking lab")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate base-tracker runs and write a labelled window dataset.
    GenData(GenDataArgs),
    /// Train a quality prediction network.
    Train(TrainArgs),
    /// Per-class accuracy and confusion counts of a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Run base-only and failure-aware tracking on seeded scenarios.
    Simulate(SimulateArgs),
    /// Compare analytic gradients with finite differences.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct SettingArgs {
    /// Flat `key = value` settings file (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override one setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequences: usize,
    #[arg(long)]
    pub frames_per_seq: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Window length K.
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Stats CSV path (default: `<out>.stats.csv`).
    #[arg(long)]
    pub stats: Option<PathBuf>,
    #[command(flatten)]
    pub settings: SettingArgs,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset file.
    #[arg(long, requires = "val", required_unless_present = "generate")]
    pub data: Option<PathBuf>,
    /// Validation dataset file.
    #[arg(long, requires = "data", required_unless_present = "generate")]
    pub val: Option<PathBuf>,
    /// Generate the data in memory instead: `--sequences` scenarios, the last
    /// `--val-fraction` of them held out for validation.
    #[arg(long, conflicts_with_all = ["data", "val"])]
    pub generate: bool,
    #[arg(long, default_value_t = 2000)]
    pub sequences: usize,
    #[arg(long)]
    pub frames_per_seq: Option<usize>,
    #[arg(long, default_value_t = 0.2)]
    pub val_fraction: f64,
    /// Checkpoint path (the best epoch by lost-class accuracy).
    #[arg(long)]
    pub out: PathBuf,
    /// Metrics CSV path (default: `<out>.metrics.csv`).
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Seed for initialization and shuffling.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub settings: SettingArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, required_unless_present = "oracle_qpn")]
    pub model: Option<PathBuf>,
    /// Judge frames by their true IOU instead of a network.
    #[arg(long, conflicts_with = "model")]
    pub oracle_qpn: bool,
    #[arg(long, default_value_t = 100)]
    pub sequences: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 300)]
    pub frames_per_seq: usize,
    /// Window length for the oracle (a model brings its own).
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    /// Per-frame report CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub settings: SettingArgs,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 8)]
    pub probes: usize,
    /// Corrupt one analytic gradient group (negative control).
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

/// Scenario and training settings after merging every layer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Settings {
    pub scenario: ScenarioConfig,
    pub train: TrainConfig,
}

impl Settings {
    pub fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad value {value:?} for {key}")))
        }
        let t = &mut self.train;
        match key {
            "epochs" => t.epochs = parse(key, value)?,
            "learning_rate" => t.sgd.learning_rate = parse(key, value)?,
            "lr_schedule" => t.sgd.schedule = parse_schedule(value)?,
            "momentum" => t.sgd.momentum = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "weight_success" => t.weights.success = parse(key, value)?,
            "weight_lost" => t.weights.lost = parse(key, value)?,
            "train_seed" => t.seed = parse(key, value)?,
            _ if ScenarioConfig::KEYS.contains(&key) => self.scenario.set(key, value)?,
            _ => return Err(Error::config(format!("unknown setting {key:?}"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected key = value", n + 1)))?;
            self.apply(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_args(args: &SettingArgs) -> Result<Settings> {
        let mut s = Settings::default();
        if let Some(path) = &args.config {
            s.apply_text(&fs::read_to_string(path)?)?;
        }
        for pair in &args.set {
            let (k, v) = pair
                .split_once('=')
                .ok_or_else(|| Error::config(format!("--set expects KEY=VALUE, got {pair:?}")))?;
            s.apply(k.trim(), v)?;
        }
        Ok(s)
    }
}

/// `"16:0.001,20:0.0001"`; an empty string clears the schedule.
fn parse_schedule(value: &str) -> Result<Vec<(usize, f64)>> {
    let bad = || Error::config(format!("bad lr_schedule {value:?}, expected EPOCH:RATE,..."));
    value
        .split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let (e, r) = p.split_once(':').ok_or_else(bad)?;
            Ok((e.trim().parse().map_err(|_| bad())?, r.trim().parse().map_err(|_| bad())?))
        })
        .collect()
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => EXIT_USAGE,
        Error::Io(_) => EXIT_IO,
        Error::Format { .. } => EXIT_FORMAT,
        Error::Contract(_) | Error::Shape(_) => EXIT_CONTRACT,
        Error::NonFinite(_) => EXIT_NUMERIC,
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn gen_data(args: &GenDataArgs, out: &mut dyn Write) -> Result<()> {
    let mut s = Settings::from_args(&args.settings)?;
    if let Some(f) = args.frames_per_seq {
        s.scenario.frames = f;
    }
    if let Some(seed) = args.seed {
        s.scenario.seed = seed;
    }
    let set = generate_dataset(&s.scenario, args.sequences, args.window)?;
    dataset_write(&args.out, &set)?;
    let stats_path = args.stats.clone().unwrap_or_else(|| with_suffix(&args.out, ".stats.csv"));
    let mut w = create(&stats_path)?;
    set.stats().write_csv(&mut w)?;
    w.flush()?;
    writeln!(out, "{}", set.stats())?;
    writeln!(out, "lost_fraction: {:.6}", set.stats().lost_fraction())?;
    writeln!(out, "windows: {}", set.len())?;
    Ok(())
}

/// Sequence split of an in-memory dataset: the last `fraction` of the
/// scenarios are held out.
pub fn generated_split(
    scenario: &ScenarioConfig,
    sequences: usize,
    fraction: f64,
    window: usize,
) -> Result<(WindowSet, WindowSet)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::config(format!("val fraction must be in (0, 1), got {fraction}")));
    }
    if sequences < 2 {
        return Err(Error::config("need at least two sequences to split"));
    }
    let val = ((sequences as f64 * fraction).round() as usize).clamp(1, sequences - 1);
    let cut = (sequences - val) as u64;
    Ok((
        generate_range(scenario, 0..cut, window)?,
        generate_range(scenario, cut..sequences as u64, window)?,
    ))
}

fn train_cmd(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let mut s = Settings::from_args(&args.settings)?;
    if let Some(e) = args.epochs {
        s.train.epochs = e;
    }
    if let Some(seed) = args.seed {
        s.train.seed = seed;
    }
    if let Some(f) = args.frames_per_seq {
        s.scenario.frames = f;
    }
    s.train.validate()?;
    let (train_set, val_set) = match (&args.data, &args.val) {
        (Some(d), Some(v)) => (dataset_read(d)?, dataset_read(v)?),
        _ => generated_split(&s.scenario, args.sequences, args.val_fraction, QpnArch::default().window)?,
    };
    let arch = QpnArch {
        window: train_set.window(),
        channels: train_set.channels(),
        extent: train_set.extent(),
        ..QpnArch::default()
    };
    let model = QpnModel::init(arch, s.train.seed)?;
    writeln!(
        out,
        "train windows: {} ({} lost), val windows: {} ({} lost)",
        train_set.len(),
        train_set.label_counts().1,
        val_set.len(),
        val_set.label_counts().1
    )?;
    let mut echo = Ok(());
    let outcome = train(model, &train_set, &val_set, &s.train, |m| {
        if echo.is_ok() {
            echo = writeln!(
                out,
                "epoch {:>2} lr {} loss {:.6} val_success {:.4} val_lost {:.4}",
                m.epoch, m.learning_rate, m.train_loss, m.val_acc_success, m.val_acc_lost
            );
        }
    })?;
    echo?;
    save_checkpoint(&args.out, &outcome.best)?;
    let metrics_path = args.metrics.clone().unwrap_or_else(|| with_suffix(&args.out, ".metrics.csv"));
    let mut w = create(&metrics_path)?;
    write_metrics_csv(&outcome.metrics, &mut w)?;
    w.flush()?;
    writeln!(out, "best epoch: {}", outcome.best_epoch)?;
    Ok(())
}

pub fn write_evaluation(e: &Evaluation, out: &mut dyn Write) -> Result<()> {
    let c = e.confusion;
    writeln!(out, "samples: {}", e.total())?;
    writeln!(out, "success_accuracy: {:.6}", e.success_accuracy())?;
    writeln!(out, "lost_accuracy: {:.6}", e.lost_accuracy())?;
    writeln!(out, "confusion (rows truth, columns predicted):")?;
    writeln!(out, "{:>10} {:>10} {:>10}", "", "success", "lost")?;
    writeln!(out, "{:>10} {:>10} {:>10}", "success", c[0][0], c[0][1])?;
    writeln!(out, "{:>10} {:>10} {:>10}", "lost", c[1][0], c[1][1])?;
    Ok(())
}

fn eval_cmd(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let model = load_checkpoint(&args.model)?;
    let set = dataset_read(&args.data)?;
    model.check_compatible(set.window(), set.channels(), set.extent())?;
    write_evaluation(&evaluate(&model, &set)?, out)
}

fn simulate_cmd(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut s = Settings::from_args(&args.settings)?;
    s.scenario.frames = args.frames_per_seq;
    if let Some(seed) = args.seed {
        s.scenario.seed = seed;
    }
    let (mut predictor, window): (Box<dyn QualityPredictor>, usize) = match &args.model {
        Some(path) if !args.oracle_qpn => {
            let model = load_checkpoint(path)?;
            let k = model.arch().window;
            (Box::new(model), k)
        }
        _ => (Box::new(IouOracle), args.window),
    };
    let report = afat_run(&s.scenario, window, args.sequences, predictor.as_mut())?;
    let mut w = create(&args.out)?;
    report.write_csv(&mut w)?;
    w.flush()?;
    writeln!(out, "{}", report.summary()?)?;
    Ok(())
}

fn grad_check_cmd(args: &GradCheckArgs, out: &mut dyn Write) -> Result<bool> {
    let report = gradgate::run(&GradGateOptions {
        seed: args.seed,
        probes: args.probes,
        inject_fault: args.inject_fault,
    })?;
    writeln!(out, "{:<28} {:>7} {:>9} {:>12} {:>10}  status", "group", "probes", "rejected", "max_rel_err", "tolerance")?;
    for g in &report.groups {
        writeln!(
            out,
            "{:<28} {:>7} {:>9} {:>12.3e} {:>10.0e}  {}",
            g.name,
            g.probes,
            g.rejected,
            g.max_rel_error,
            g.tolerance,
            if g.passed() { "ok" } else { "FAIL" }
        )?;
    }
    let passed = report.passed();
    writeln!(out, "grad-check: {}", if passed { "passed" } else { "FAILED" })?;
    Ok(passed)
}

/// Runs one parsed command, writing human-readable output to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<ExitCode> {
    match &cli.command {
        Command::GenData(a) => gen_data(a, out)?,
        Command::Train(a) => train_cmd(a, out)?,
        Command::Eval(a) => eval_cmd(a, out)?,
        Command::Simulate(a) => simulate_cmd(a, out)?,
        Command::GradCheck(a) => {
            if !grad_check_cmd(a, out)? {
                return Ok(ExitCode::from(EXIT_GRAD_CHECK));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

/// Parses `args` (including the program name) and runs the command.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match run(&cli, &mut out) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
