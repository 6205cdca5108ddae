//! End-to-end experiment driver.
//!
//! Output layout under `--out`:
//!
//! ```text
//! effective_config.toml
//! recording/     annotations.jsonl, flight.csv   (simulated data only)
//! datasets/      train/val/test, bounds.json
//! synth/         scenario_<n>.*
//! models/<slug>/ model.ckpt, state.ckpt, curve.csv
//! results/       scenario_<n>.{csv,md}, accuracy.{csv,md}, metrics.json
//! ```
//!
//! Each stage directory gets a `.done` marker holding the settings it was
//! built from. A rerun skips stages whose marker matches and redoes the rest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use serde::Serialize;

use super::{
    create_dir, evaluate_models, model_checkpoint, rules_for, scenario_name, write_text, RunConfig, ANNOTATIONS_FILE,
    CURVE_FILE, FLIGHT_FILE, METRICS_FILE, MODEL_FILE, STATE_FILE,
};
use crate::error::Result;
use crate::ingest::{
    build_datasets, parse_annotations, parse_flight_log, write_annotations, write_flight_log, write_json, Dataset,
    IngestOptions,
};
use crate::nn::{Checkpoint, Network};
use crate::seed::derive;
use crate::synth::{generate_test_set, load_synthetic, save_synthetic, world};
use crate::train::{export_curve, TrainState};

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub models: Option<Vec<String>>,
    /// Ignore existing stage markers and rebuild everything.
    #[arg(long)]
    pub force: bool,
}

const MARKER: &str = ".done";

fn fingerprint<T: Serialize>(parts: &T) -> String {
    toml::to_string(parts).expect("stage settings serialize")
}

struct Stage {
    dir: PathBuf,
    fingerprint: String,
    force: bool,
}

impl Stage {
    fn is_current(&self) -> bool {
        !self.force && fs::read_to_string(self.dir.join(MARKER)).is_ok_and(|t| t == self.fingerprint)
    }

    /// Runs `work` unless the stage is current, then writes the marker.
    fn run(&self, name: &str, work: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
        if self.is_current() {
            log::info!("{name}: up to date");
            return Ok(());
        }
        log::info!("{name}: running");
        let marker = self.dir.join(MARKER);
        if marker.exists() {
            fs::remove_file(&marker).map_err(|e| crate::Error::io(&marker, e))?;
        }
        create_dir(&self.dir)?;
        work(&self.dir)?;
        write_text(&marker, &self.fingerprint)
    }
}

#[derive(Serialize)]
struct DataKey<'a> {
    seed: u64,
    grid: &'a super::config::GridSection,
    data: &'a super::config::DataSection,
    ingest: &'a super::config::IngestSection,
}

#[derive(Serialize)]
struct SynthKey<'a> {
    data: String,
    synth: &'a super::config::SynthSection,
}

#[derive(Serialize)]
struct ModelKey<'a> {
    data: String,
    variant: &'a str,
    model: &'a super::config::ModelSection,
    train: &'a crate::train::TrainOptions,
}

#[derive(Serialize)]
struct EvalKey<'a> {
    synth: String,
    models: Vec<String>,
    eval: &'a super::config::EvalSection,
}

#[derive(Serialize)]
struct Metrics<'a> {
    config: &'a RunConfig,
    thresholds: &'a [f64],
    results: &'a [super::ResultEntry],
}

pub fn cmd_reproduce(a: &ReproduceArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs_max = e;
    }
    if let Some(m) = &a.models {
        cfg.models = m.clone();
    }
    cfg.validate()?;
    let spec = cfg.grid.spec()?;
    let variants = cfg.variants()?;
    let scenarios = cfg.scenarios()?;
    let out = &a.out;
    create_dir(out)?;
    write_text(&out.join("effective_config.toml"), &cfg.to_toml())?;

    let data_fp = fingerprint(&DataKey {
        seed: cfg.seed,
        grid: &cfg.grid,
        data: &cfg.data,
        ingest: &cfg.ingest,
    });
    let (annotations, flight) = match cfg.data.simulate_frames {
        Some(frames) => {
            let stage = Stage {
                dir: out.join("recording"),
                fingerprint: data_fp.clone(),
                force: a.force,
            };
            stage.run("simulate", |dir| {
                let (anns, flight) = world::toy_recording(&spec, frames, cfg.seed)?;
                write_annotations(&dir.join(ANNOTATIONS_FILE), &anns)?;
                write_flight_log(&dir.join(FLIGHT_FILE), &flight)
            })?;
            (stage.dir.join(ANNOTATIONS_FILE), stage.dir.join(FLIGHT_FILE))
        }
        None => (
            cfg.data.annotations.clone().expect("validated"),
            cfg.data.flight_log.clone().expect("validated"),
        ),
    };

    let data_dir = out.join("datasets");
    Stage {
        dir: data_dir.clone(),
        fingerprint: data_fp.clone(),
        force: a.force,
    }
    .run("ingest", |dir| {
        let opts = IngestOptions {
            ratios: cfg.ingest.ratios(),
            seed: cfg.seed,
            max_gap_ms: cfg.ingest.max_gap_ms,
            bounds: None,
        };
        let built = build_datasets(
            &parse_annotations(&annotations)?,
            &parse_flight_log(&flight)?,
            &spec,
            &opts,
        )?;
        built.train.save(dir, "train")?;
        built.val.save(dir, "val")?;
        built.test.save(dir, "test")?;
        write_json(&dir.join("bounds.json"), &built.bounds)
    })?;

    let synth_dir = out.join("synth");
    let synth_fp = fingerprint(&SynthKey {
        data: data_fp.clone(),
        synth: &cfg.synth,
    });
    Stage {
        dir: synth_dir.clone(),
        fingerprint: synth_fp.clone(),
        force: a.force,
    }
    .run("synth", |dir| {
        let test = Dataset::load(&data_dir, "test")?;
        let rules = rules_for(&spec, cfg.synth.rules.as_deref())?;
        for &s in &scenarios {
            let seed = derive(cfg.seed, &[0x5e, u64::from(s.id())]);
            let set = generate_test_set(&test.samples, s, cfg.synth.per_source, cfg.synth.count, &rules, seed)?;
            save_synthetic(dir, &scenario_name(s), &spec, &set)?;
        }
        Ok(())
    })?;

    let mut model_fps = Vec::new();
    let mut models = Vec::new();
    for &v in &variants {
        let model_fp = fingerprint(&ModelKey {
            data: data_fp.clone(),
            variant: v.slug(),
            model: &cfg.model,
            train: &cfg.train,
        });
        let dir = out.join("models").join(v.slug());
        Stage {
            dir: dir.clone(),
            fingerprint: model_fp.clone(),
            force: a.force,
        }
        .run(v.slug(), |dir| {
            let train = Dataset::load(&data_dir, "train")?;
            let val = Dataset::load(&data_dir, "val")?;
            let mut state = TrainState::new(cfg.model.config(v, spec.len())?, cfg.train)?;
            state.run(&train.samples, &val.samples, None)?;
            model_checkpoint(&state.best, &spec).save(&dir.join(MODEL_FILE))?;
            state.to_checkpoint().save(&dir.join(STATE_FILE))?;
            export_curve(&state.curve, &dir.join(CURVE_FILE))
        })?;
        let net = Network::from_checkpoint(&Checkpoint::load(&dir.join(MODEL_FILE))?)?;
        models.push((v.display_name().to_string(), net));
        model_fps.push(model_fp);
    }

    let results = out.join("results");
    let eval_fp = fingerprint(&EvalKey {
        synth: synth_fp,
        models: model_fps,
        eval: &cfg.eval,
    });
    Stage {
        dir: results,
        fingerprint: eval_fp,
        force: a.force,
    }
    .run("eval", |dir| {
        let mut sets = BTreeMap::new();
        for &s in &scenarios {
            sets.insert(s, load_synthetic(&synth_dir, &scenario_name(s))?.1);
        }
        let thresholds = cfg.eval.thresholds();
        let entries = evaluate_models(&models, &sets, &thresholds, cfg.eval.averaging, dir)?;
        let mut shown = cfg.clone();
        shown.data.annotations = None;
        shown.data.flight_log = None;
        shown.synth.rules = None;
        write_json(
            &dir.join(METRICS_FILE),
            &Metrics {
                config: &shown,
                thresholds: &thresholds,
                results: &entries,
            },
        )
    })
}
