//! Command-line pipeline. The `adnet` binary is a thin wrapper over [`main_with_args`].
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 numeric failure. Failures
//! print one JSON object `{"error": kind, "message": text, "exit_code": n}`
//! to stderr.

pub mod config;
mod reproduce;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

pub use config::RunConfig;
pub use reproduce::{cmd_reproduce, ReproduceArgs};

use crate::detect::{detect_all, write_reports, DEFAULT_THRESHOLD};
use crate::error::{Error, ErrorClass, Result};
use crate::eval::{
    detection_accuracy, detection_accuracy_lax, emit_tables, evaluate_scenario, AccuracyRow, Averaging,
    ConfusionCounts, MetricRow,
};
use crate::grid::GridSpec;
use crate::ingest::{
    build_datasets, dataset_paths, parse_annotations, parse_flight_log, write_annotations, write_flight_log,
    write_json, Dataset, IngestOptions, SplitRatios, DEFAULT_MAX_GAP_MS,
};
use crate::nn::{Checkpoint, ModelConfig, Network, Variant};
use crate::synth::{generate_test_set, load_rules, load_synthetic, save_synthetic, world, Scenario, ZoneRule};
use crate::train::{export_curve, TrainOptions, TrainState};

#[derive(Debug, Parser)]
#[command(name = "adnet", version, about = "Grid-scene VAE anomaly detection pipeline")]
pub struct Cli {
    /// Worker threads (0 = all cores). Results do not depend on this.
    #[arg(long, global = true, default_value_t = 0)]
    pub jobs: usize,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a toy recording (annotations and flight log) of the synthetic site.
    Simulate(SimulateArgs),
    /// Validate, join, rasterize and split annotations plus flight log.
    Ingest(IngestArgs),
    /// Inject scenario anomalies into a dataset split.
    Synth(SynthArgs),
    /// Train one model variant.
    Train(TrainArgs),
    /// Write anomaly reports for a dataset.
    Detect(DetectArgs),
    /// Score checkpoints on scenario test sets and write result tables.
    Eval(EvalArgs),
    /// Run the full experiment from an experiment file.
    Reproduce(ReproduceArgs),
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 8)]
    pub rows: usize,
    #[arg(long, default_value_t = 8)]
    pub cols: usize,
    #[arg(long, default_value_t = 1920)]
    pub frame_width: u32,
    #[arg(long, default_value_t = 1080)]
    pub frame_height: u32,
}

impl GridArgs {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.rows, self.cols, self.frame_width, self.frame_height)
    }
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 200)]
    pub frames: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub flight: PathBuf,
    #[arg(long, required_unless_present = "validate_only")]
    pub out: Option<PathBuf>,
    /// Check the inputs and print a report; write nothing.
    #[arg(long)]
    pub validate_only: bool,
    #[command(flatten)]
    pub grid: GridArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_MAX_GAP_MS)]
    pub max_gap_ms: u64,
    #[arg(long, default_value_t = 0.6)]
    pub train: f64,
    #[arg(long, default_value_t = 0.1)]
    pub val: f64,
    #[arg(long, default_value_t = 0.3)]
    pub test: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Directory holding the source dataset.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    pub scenario: u8,
    /// Rule file; defaults to the synthetic site's rules.
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub per_source: usize,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    /// Directory holding `train` and `val` datasets.
    #[arg(long)]
    pub data: PathBuf,
    /// uav-adnet, uav-adnet-wo-gps, cvae or vae.
    #[arg(long)]
    pub model: Option<Variant>,
    #[arg(long)]
    pub out: PathBuf,
    /// Experiment file supplying [model] and [train] sections.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a saved training state.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long)]
    pub kl_weight: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "test")]
    pub name: String,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub checkpoints: Vec<PathBuf>,
    /// Directory holding `scenario_<n>` synthetic sets.
    #[arg(long)]
    pub synth: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub scenarios: Vec<u8>,
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    pub threshold: f64,
    /// Evaluate at 0.1, 0.2, ..., 0.9; one table set per threshold.
    #[arg(long)]
    pub sweep: bool,
    /// Average per-sample metrics instead of summing counts.
    #[arg(long)]
    pub r#macro: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `args` (including the program name), runs, reports failures, and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return 0;
            }
            report_failure("usage", &e.to_string(), 1);
            return 1;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            let code = exit_code(&e);
            report_failure(e.kind(), &e.to_string(), code);
            code
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e.class() {
        ErrorClass::Usage => 1,
        ErrorClass::Validation => 2,
        ErrorClass::Numeric => 3,
    }
}

fn report_failure(kind: &str, message: &str, code: i32) {
    let j = serde_json::json!({ "error": kind, "message": message.trim_end(), "exit_code": code });
    eprintln!("{j}");
}

/// Runs a parsed command inside a pool of `cli.jobs` workers.
pub fn run(cli: Cli) -> Result<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| Error::Argument(format!("cannot start {} workers: {e}", cli.jobs)))?;
    pool.install(|| match cli.command {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Ingest(a) => cmd_ingest(&a).map(|_| ()),
        Command::Synth(a) => cmd_synth(&a).map(|_| ()),
        Command::Train(a) => cmd_train(&a),
        Command::Detect(a) => cmd_detect(&a),
        Command::Eval(a) => cmd_eval(&a).map(|_| ()),
        Command::Reproduce(a) => cmd_reproduce(&a),
    })
}

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const FLIGHT_FILE: &str = "flight.csv";

pub fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let spec = a.grid.spec()?;
    create_dir(&a.out)?;
    let (anns, flight) = world::toy_recording(&spec, a.frames, a.seed)?;
    write_annotations(&a.out.join(ANNOTATIONS_FILE), &anns)?;
    write_flight_log(&a.out.join(FLIGHT_FILE), &flight)
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub frames: usize,
    pub flight_records: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub skipped_boxes: usize,
    pub bounds: crate::ingest::GeoBounds,
    pub spec: GridSpec,
}

pub fn cmd_ingest(a: &IngestArgs) -> Result<IngestReport> {
    let spec = a.grid.spec()?;
    let anns = parse_annotations(&a.annotations)?;
    let flight = parse_flight_log(&a.flight)?;
    let opts = IngestOptions {
        ratios: SplitRatios {
            train: a.train,
            val: a.val,
            test: a.test,
        },
        seed: a.seed,
        max_gap_ms: a.max_gap_ms,
        bounds: None,
    };
    let out = build_datasets(&anns, &flight, &spec, &opts)?;
    let report = IngestReport {
        frames: anns.len(),
        flight_records: flight.len(),
        train: out.train.len(),
        val: out.val.len(),
        test: out.test.len(),
        skipped_boxes: out.skipped_boxes,
        bounds: out.bounds,
        spec,
    };
    if a.validate_only {
        println!("{}", serde_json::to_string_pretty(&report).expect("serializable"));
        return Ok(report);
    }
    let dir = a.out.as_ref().expect("clap requires --out without --validate-only");
    create_dir(dir)?;
    out.train.save(dir, "train")?;
    out.val.save(dir, "val")?;
    out.test.save(dir, "test")?;
    write_json(&dir.join("bounds.json"), &out.bounds)?;
    write_json(&dir.join("ingest_report.json"), &report)?;
    Ok(report)
}

pub fn scenario_name(s: Scenario) -> String {
    format!("scenario_{}", s.id())
}

pub(crate) fn rules_for(spec: &GridSpec, path: Option<&Path>) -> Result<Vec<ZoneRule>> {
    match path {
        Some(p) => {
            let loaded = load_rules(p, spec)?;
            for w in &loaded.warnings {
                log::warn!("{}: {w}", p.display());
            }
            Ok(loaded.rules)
        }
        None => Ok(world::SiteLayout::new(spec)?.default_rules()),
    }
}

/// Returns the number of injected cells written to the manifest.
pub fn cmd_synth(a: &SynthArgs) -> Result<usize> {
    let scenario = Scenario::new(a.scenario)?;
    let source = Dataset::load(&a.data, &a.split)?;
    let rules = rules_for(&source.spec, a.rules.as_deref())?;
    let set = generate_test_set(&source.samples, scenario, a.per_source, a.count, &rules, a.seed)?;
    create_dir(&a.out)?;
    save_synthetic(&a.out, &scenario_name(scenario), &source.spec, &set)?;
    Ok(set.iter().map(|(_, r)| r.injected.len()).sum())
}

pub(crate) fn require_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let (grids, gps) = dataset_paths(dir, name);
    if !grids.exists() || !gps.exists() {
        return Err(Error::Argument(format!("no `{name}` split in {}", dir.display())));
    }
    Dataset::load(dir, name)
}

/// Records the grid spec next to the model config so evaluation can check it.
pub fn model_checkpoint(net: &Network, spec: &GridSpec) -> Checkpoint {
    let mut ck = net.to_checkpoint();
    for (k, v) in [
        ("grid.rows", spec.rows.to_string()),
        ("grid.cols", spec.cols.to_string()),
        ("grid.categories", spec.categories.to_string()),
        ("grid.frame_width_px", spec.frame_width_px.to_string()),
        ("grid.frame_height_px", spec.frame_height_px.to_string()),
    ] {
        ck.header.insert(k.into(), v);
    }
    ck
}

/// Loads a model checkpoint and checks it against a dataset's grid spec.
pub fn load_model_for(path: &Path, spec: &GridSpec) -> Result<Network> {
    let ck = Checkpoint::load(path)?;
    let net = Network::from_checkpoint(&ck)?;
    let mismatch = |what: String| {
        Error::config(format!(
            "{}: model was trained on {what}, data uses {}x{}x{}",
            path.display(),
            spec.rows,
            spec.cols,
            spec.categories
        ))
    };
    if ck.header.contains_key("grid.rows") {
        let (r, c, k): (usize, usize, usize) = (
            ck.parse("grid.rows")?,
            ck.parse("grid.cols")?,
            ck.parse("grid.categories")?,
        );
        if (r, c, k) != (spec.rows, spec.cols, spec.categories) {
            return Err(mismatch(format!("{r}x{c}x{k}")));
        }
    }
    if net.config().grid_len != spec.len() {
        return Err(mismatch(format!("grid length {}", net.config().grid_len)));
    }
    Ok(net)
}

#[derive(Debug, Clone, Serialize)]
struct TrainEcho<'a> {
    variant: &'a str,
    model: &'a ModelConfig,
    train: &'a TrainOptions,
}

pub const MODEL_FILE: &str = "model.ckpt";
pub const STATE_FILE: &str = "state.ckpt";
pub const CURVE_FILE: &str = "curve.csv";

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let train = require_dataset(&a.data, "train")?;
    let val = require_dataset(&a.data, "val")?;
    if !train.spec.same_shape(&val.spec) {
        return Err(Error::shape("train and val grids differ in shape"));
    }
    let mut state = match &a.resume {
        Some(path) => {
            let state = TrainState::from_checkpoint(&Checkpoint::load(path)?, a.epochs)?;
            if state.net.config().grid_len != train.spec.len() {
                return Err(Error::config("resumed model does not match the dataset grid"));
            }
            state
        }
        None => {
            let variant = a
                .model
                .ok_or_else(|| Error::Argument("--model is required unless --resume is given".into()))?;
            let mut run = match &a.config {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                    RunConfig::parse(&text)?
                }
                None => RunConfig::default(),
            };
            let (m, t) = (&mut run.model, &mut run.train);
            if let Some(v) = &a.hidden {
                m.hidden_sizes = v.clone();
            }
            if let Some(v) = a.latent_dim {
                m.latent_dim = v;
            }
            if let Some(v) = a.kl_weight {
                m.kl_weight = v;
            }
            if let Some(v) = a.epochs {
                t.epochs_max = v;
            }
            if let Some(v) = a.batch_size {
                t.batch_size = v;
            }
            if let Some(v) = a.learning_rate {
                t.learning_rate = v;
            }
            if let Some(v) = a.patience {
                t.patience = v;
            }
            if let Some(v) = a.seed {
                t.seed = v;
            }
            TrainState::new(run.model.config(variant, train.spec.len())?, run.train)?
        }
    };
    state.run(&train.samples, &val.samples, None)?;
    create_dir(&a.out)?;
    model_checkpoint(&state.best, &train.spec).save(&a.out.join(MODEL_FILE))?;
    state.to_checkpoint().save(&a.out.join(STATE_FILE))?;
    export_curve(&state.curve, &a.out.join(CURVE_FILE))?;
    let echo = TrainEcho {
        variant: state.net.config().variant().slug(),
        model: state.net.config(),
        train: &state.opts,
    };
    write_text(
        &a.out.join("train_config.toml"),
        &toml::to_string(&echo).expect("train config serializes"),
    )
}

pub fn cmd_detect(a: &DetectArgs) -> Result<()> {
    let data = Dataset::load(&a.data, &a.name)?;
    let net = load_model_for(&a.checkpoint, &data.spec)?;
    let reports = detect_all(&net, &data.samples, a.threshold)?;
    write_reports(&a.out, &reports)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultEntry {
    pub threshold: f64,
    pub scenario: u8,
    pub model: String,
    pub counts: ConfusionCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub accuracy_exact: f64,
    pub accuracy_lax: f64,
}

/// Scores every model on every scenario at every threshold, writing one
/// table set per threshold (into `threshold_<t>/` when there are several).
pub fn evaluate_models(
    models: &[(String, Network)],
    sets: &BTreeMap<Scenario, Vec<(crate::ingest::Sample, crate::synth::InjectionResult)>>,
    thresholds: &[f64],
    averaging: Averaging,
    out: &Path,
) -> Result<Vec<ResultEntry>> {
    let mut entries = Vec::new();
    for &t in thresholds {
        let mut rows: BTreeMap<Scenario, Vec<MetricRow>> = BTreeMap::new();
        let mut acc: BTreeMap<Scenario, Vec<AccuracyRow>> = BTreeMap::new();
        for (&s, set) in sets {
            let injected: Vec<_> = set.iter().map(|(_, r)| r.clone()).collect();
            for (name, net) in models {
                let e = evaluate_scenario(net, set, t, averaging)?;
                let exact = detection_accuracy(&e.reports, &injected)?;
                let lax = detection_accuracy_lax(&e.reports, &injected)?;
                let mut row = e.row.clone();
                row.model_name = name.clone();
                entries.push(ResultEntry {
                    threshold: t,
                    scenario: s.id(),
                    model: name.clone(),
                    counts: e.counts,
                    precision: row.precision,
                    recall: row.recall,
                    f1: row.f1,
                    degenerate: row.degenerate,
                    accuracy_exact: exact,
                    accuracy_lax: lax,
                });
                rows.entry(s).or_default().push(row);
                acc.entry(s).or_default().push(AccuracyRow {
                    model_name: name.clone(),
                    exact,
                    lax,
                });
            }
        }
        let dir = if thresholds.len() > 1 {
            out.join(format!("threshold_{t:.1}"))
        } else {
            out.to_path_buf()
        };
        emit_tables(&dir, &rows, &acc)?;
    }
    Ok(entries)
}

#[derive(Debug, Clone, Serialize)]
struct EvalMetrics<'a> {
    thresholds: &'a [f64],
    averaging: Averaging,
    results: &'a [ResultEntry],
}

pub const METRICS_FILE: &str = "metrics.json";

pub fn cmd_eval(a: &EvalArgs) -> Result<Vec<ResultEntry>> {
    let mut sets = BTreeMap::new();
    let mut spec: Option<GridSpec> = None;
    for &id in &a.scenarios {
        let s = Scenario::new(id)?;
        let (sp, set) = load_synthetic(&a.synth, &scenario_name(s))?;
        if spec.is_some_and(|p| !p.same_shape(&sp)) {
            return Err(Error::config("scenario test sets use different grids"));
        }
        spec = Some(sp);
        sets.insert(s, set);
    }
    let spec = spec.ok_or_else(|| Error::Argument("no scenarios selected".into()))?;
    let models = a
        .checkpoints
        .iter()
        .map(|p| {
            let net = load_model_for(p, &spec)?;
            Ok((net.config().variant().display_name().to_string(), net))
        })
        .collect::<Result<Vec<_>>>()?;
    let thresholds = if a.sweep {
        crate::detect::sweep_thresholds()
    } else {
        crate::detect::check_threshold(a.threshold)?;
        vec![a.threshold]
    };
    let averaging = if a.r#macro { Averaging::Macro } else { Averaging::Micro };
    let entries = evaluate_models(&models, &sets, &thresholds, averaging, &a.out)?;
    write_json(
        &a.out.join(METRICS_FILE),
        &EvalMetrics {
            thresholds: &thresholds,
            averaging,
            results: &entries,
        },
    )?;
    Ok(entries)
}
