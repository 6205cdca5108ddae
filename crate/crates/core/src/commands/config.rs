//! Experiment file (TOML). Every section and key is optional; missing keys
//! take the defaults below. Relative paths resolve against `$ADNET_DATA_DIR`
//! when set, else against the experiment file's directory.
//!
//! ```toml
//! seed = 7                      # simulation, split and injection seed
//! models = ["uav-adnet", "uav-adnet-wo-gps", "cvae", "vae"]
//!
//! [grid]
//! rows = 8
//! cols = 8
//! frame_width_px = 1920
//! frame_height_px = 1080
//!
//! [data]
//! simulate_frames = 700         # or: annotations = "...", flight_log = "..."
//!
//! [ingest]
//! train = 0.6
//! val = 0.1
//! test = 0.3
//! max_gap_ms = 500
//!
//! [model]
//! hidden_sizes = [256, 128]
//! latent_dim = 32
//! kl_weight = 0.001
//!
//! [train]
//! epochs_max = 200
//! batch_size = 32
//! learning_rate = 0.001
//! beta1 = 0.9
//! beta2 = 0.999
//! epsilon = 1e-8
//! patience = 10
//! seed = 0
//!
//! [synth]
//! scenarios = [1, 2, 3]
//! per_source = 1
//! count = 1
//! # rules = "rules.json"       # default: the synthetic site's rules
//!
//! [eval]
//! threshold = 0.5
//! sweep = false
//! averaging = "micro"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::detect::check_threshold;
use crate::error::{Error, Result};
use crate::eval::Averaging;
use crate::grid::{GridSpec, ObjectCategory};
use crate::ingest::{SplitRatios, DEFAULT_MAX_GAP_MS};
use crate::nn::{ModelConfig, Variant};
use crate::synth::Scenario;
use crate::train::TrainOptions;

pub const DATA_DIR_ENV: &str = "ADNET_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    pub frame_width_px: u32,
    pub frame_height_px: u32,
}

impl Default for GridSection {
    fn default() -> Self {
        let s = GridSpec::default();
        GridSection {
            rows: s.rows,
            cols: s.cols,
            frame_width_px: s.frame_width_px,
            frame_height_px: s.frame_height_px,
        }
    }
}

impl GridSection {
    pub fn spec(&self) -> Result<GridSpec> {
        GridSpec::new(self.rows, self.cols, self.frame_width_px, self.frame_height_px)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub annotations: Option<PathBuf>,
    pub flight_log: Option<PathBuf>,
    pub simulate_frames: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    pub train: f64,
    pub val: f64,
    pub test: f64,
    pub max_gap_ms: u64,
}

impl Default for IngestSection {
    fn default() -> Self {
        let r = SplitRatios::default();
        IngestSection {
            train: r.train,
            val: r.val,
            test: r.test,
            max_gap_ms: DEFAULT_MAX_GAP_MS,
        }
    }
}

impl IngestSection {
    pub fn ratios(&self) -> SplitRatios {
        SplitRatios {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_sizes: Vec<usize>,
    pub latent_dim: usize,
    pub kl_weight: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let c = ModelConfig::for_variant(Variant::UavAdNet, 1);
        ModelSection {
            hidden_sizes: c.hidden_sizes,
            latent_dim: c.latent_dim,
            kl_weight: c.kl_weight,
        }
    }
}

impl ModelSection {
    pub fn config(&self, variant: Variant, grid_len: usize) -> Result<ModelConfig> {
        let mut c = ModelConfig::for_variant(variant, grid_len);
        c.hidden_sizes = self.hidden_sizes.clone();
        c.latent_dim = self.latent_dim;
        c.kl_weight = self.kl_weight;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSection {
    pub scenarios: Vec<u8>,
    pub per_source: usize,
    pub count: usize,
    pub rules: Option<PathBuf>,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection {
            scenarios: vec![1, 2, 3],
            per_source: 1,
            count: 1,
            rules: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub threshold: f64,
    pub sweep: bool,
    pub averaging: Averaging,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            threshold: crate::detect::DEFAULT_THRESHOLD,
            sweep: false,
            averaging: Averaging::Micro,
        }
    }
}

impl EvalSection {
    pub fn thresholds(&self) -> Vec<f64> {
        if self.sweep {
            crate::detect::sweep_thresholds()
        } else {
            vec![self.threshold]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub models: Vec<String>,
    pub grid: GridSection,
    pub data: DataSection,
    pub ingest: IngestSection,
    pub model: ModelSection,
    pub train: TrainOptions,
    pub synth: SynthSection,
    pub eval: EvalSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            models: Variant::ALL.iter().map(|v| v.slug().to_string()).collect(),
            grid: GridSection::default(),
            data: DataSection::default(),
            ingest: IngestSection::default(),
            model: ModelSection::default(),
            train: TrainOptions::default(),
            synth: SynthSection::default(),
            eval: EvalSection::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("experiment file: {e}")))
    }

    /// Reads, resolves relative paths, and validates.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::parse(&text)?;
        let base = match std::env::var_os(DATA_DIR_ENV) {
            Some(d) => PathBuf::from(d),
            None => path.parent().map(Path::to_path_buf).unwrap_or_default(),
        };
        c.resolve_paths(&base);
        c.validate()?;
        Ok(c)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.data.annotations);
        resolve(base, &mut self.data.flight_log);
        resolve(base, &mut self.synth.rules);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }

    pub fn variants(&self) -> Result<Vec<Variant>> {
        if self.models.is_empty() {
            return Err(Error::config("experiment lists no models"));
        }
        self.models.iter().map(|m| m.parse()).collect()
    }

    pub fn scenarios(&self) -> Result<Vec<Scenario>> {
        if self.synth.scenarios.is_empty() {
            return Err(Error::config("experiment lists no scenarios"));
        }
        self.synth.scenarios.iter().map(|&s| Scenario::new(s)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.grid.spec()?;
        if spec.categories != ObjectCategory::COUNT {
            return Err(Error::config("grid must have one channel per object category"));
        }
        self.variants()?;
        self.scenarios()?;
        self.ingest.ratios().validate()?;
        self.model.config(Variant::UavAdNet, spec.len())?;
        self.train.validate()?;
        if self.synth.per_source == 0 || self.synth.count == 0 {
            return Err(Error::config("synth per_source and count must be positive"));
        }
        for t in self.eval.thresholds() {
            check_threshold(t)?;
        }
        let d = &self.data;
        match (&d.annotations, &d.flight_log, d.simulate_frames) {
            (Some(a), Some(f), None) => {
                for p in [a, f] {
                    if !p.exists() {
                        return Err(Error::io(p, std::io::ErrorKind::NotFound.into()));
                    }
                }
            }
            (None, None, Some(n)) if n > 0 => {}
            _ => {
                return Err(Error::config(
                    "[data] needs either annotations and flight_log, or a positive simulate_frames",
                ))
            }
        }
        if let Some(r) = &self.synth.rules {
            if !r.exists() {
                return Err(Error::io(r, std::io::ErrorKind::NotFound.into()));
            }
        }
        Ok(())
    }
}
