//! Seeded minibatch training with Adam and early stopping.
//!
//! Randomness is addressed, not consumed: the shuffle of epoch `e` comes from
//! stream `(seed, SHUFFLE, e)` and the reparameterization noise of the sample
//! at position `p` of epoch `e` from `(seed, NOISE, e, p)`. A run resumed from
//! a saved [`TrainState`] therefore continues exactly as an uninterrupted run.

mod adam;
mod curve;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamParams};
pub use curve::{export_curve, parse_curve, read_curve, CurvePoint, LossCurve};

use crate::error::{Error, Result};
use crate::ingest::Sample;
use crate::nn::{mse, standard_normal, Checkpoint, Example, Matrix, ModelConfig, Network};
use crate::numfmt::fmt_f64;
use crate::seed;

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_NOISE: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs_max: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs_max: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            patience: 10,
            seed: 0,
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.epochs_max == 0 || self.batch_size == 0 {
            return bad("epochs_max and batch_size must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        if !(self.beta1 > 0.0 && self.beta1 < 1.0 && self.beta2 > 0.0 && self.beta2 < 1.0) {
            return bad("Adam betas must lie strictly between 0 and 1");
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return bad("Adam epsilon must be positive");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

fn example<'a>(net: &Network, s: &'a Sample) -> Example<'a> {
    Example {
        grid: &s.grid,
        gps: net.config().use_gps.then_some(&s.gps),
    }
}

/// Mean over samples of the per-sample mean squared error between the input
/// grid and its deterministic (latent mean) reconstruction.
pub fn reconstruction_error(net: &Network, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Argument("reconstruction error of an empty sample set".into()));
    }
    let per_sample = samples
        .par_iter()
        .map(|s| {
            let ex = example(net, s);
            let out = net.reconstruct(ex.grid, ex.gps)?;
            Ok(mse(&s.grid.to_f64(), &out))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(per_sample.iter().sum::<f64>() / samples.len() as f64)
}

/// Stops once validation error has gone `patience` epochs without improving.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStopping {
    pub patience: usize,
    pub best: f64,
    pub since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        EarlyStopping {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Records an epoch's validation error; returns whether it is a new best.
    pub fn observe(&mut self, e_val: f64) -> bool {
        if e_val < self.best {
            self.best = e_val;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }
}

/// Everything needed to continue a run bit-for-bit.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub net: Network,
    pub best: Network,
    pub adam: Adam,
    pub curve: LossCurve,
    pub stopping: EarlyStopping,
    pub opts: TrainOptions,
}

impl TrainState {
    pub fn new(config: ModelConfig, opts: TrainOptions) -> Result<Self> {
        opts.validate()?;
        let net = Network::new(config, seed::derive(opts.seed, &[STREAM_INIT]))?;
        Ok(TrainState {
            adam: Adam::new(&net, opts.adam()),
            best: net.clone(),
            net,
            curve: LossCurve::default(),
            stopping: EarlyStopping::new(opts.patience),
            opts,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.curve.points.len()
    }

    pub fn finished(&self) -> bool {
        self.epochs_done() >= self.opts.epochs_max || self.stopping.should_stop()
    }

    fn run_epoch(&mut self, train: &[Sample], val: &[Sample]) -> Result<CurvePoint> {
        let epoch = self.epochs_done() + 1;
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut seed::stream(self.opts.seed, &[STREAM_SHUFFLE, epoch as u64]));
        let latent = self.net.config().latent_dim;
        for (b, chunk) in order.chunks(self.opts.batch_size).enumerate() {
            let batch: Vec<Example<'_>> = chunk.iter().map(|&i| example(&self.net, &train[i])).collect();
            let eps: Vec<Vec<f64>> = (0..chunk.len())
                .map(|k| {
                    let pos = (b * self.opts.batch_size + k) as u64;
                    standard_normal(
                        latent,
                        &mut seed::stream(self.opts.seed, &[STREAM_NOISE, epoch as u64, pos]),
                    )
                })
                .collect();
            let (grads, parts) = self.net.batch_gradients(&batch, &eps).map_err(|e| match e {
                Error::Numeric(what) => Error::Numeric(format!("{what} at epoch {epoch}")),
                other => other,
            })?;
            if !parts.total.is_finite() {
                return Err(Error::Numeric(format!("training loss at epoch {epoch}")));
            }
            self.adam.step(&mut self.net, &grads);
        }
        let e_train = reconstruction_error(&self.net, train)?;
        let e_val = reconstruction_error(&self.net, val)?;
        if !(e_train.is_finite() && e_val.is_finite()) {
            return Err(Error::Numeric(format!("reconstruction error at epoch {epoch}")));
        }
        Ok(CurvePoint { epoch, e_train, e_val })
    }

    /// Trains until `epochs_max`, early stop, or `until_epoch` (if given).
    pub fn run(&mut self, train: &[Sample], val: &[Sample], until_epoch: Option<usize>) -> Result<()> {
        if train.is_empty() || val.is_empty() {
            return Err(Error::Argument(
                "training needs nonempty train and validation sets".into(),
            ));
        }
        while !self.finished() && until_epoch.is_none_or(|u| self.epochs_done() < u) {
            let point = self.run_epoch(train, val)?;
            log::info!(
                "{} epoch {}: e_train {:.6} e_val {:.6}",
                self.net.config().variant(),
                point.epoch,
                point.e_train,
                point.e_val
            );
            if self.stopping.observe(point.e_val) {
                self.best = self.net.clone();
            }
            self.curve.points.push(point);
        }
        Ok(())
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = self.net.to_checkpoint();
        let names = self.net.layer_names();
        ck.push_layers("best.", &names, self.best.layers());
        ck.push_layers("adam.m.", &names, &self.adam.m);
        ck.push_layers("adam.v.", &names, &self.adam.v);
        let o = &self.opts;
        for (k, v) in [
            ("train.epochs_max", o.epochs_max.to_string()),
            ("train.batch_size", o.batch_size.to_string()),
            ("train.learning_rate", fmt_f64(o.learning_rate)),
            ("train.beta1", fmt_f64(o.beta1)),
            ("train.beta2", fmt_f64(o.beta2)),
            ("train.epsilon", fmt_f64(o.epsilon)),
            ("train.patience", o.patience.to_string()),
            ("train.seed", o.seed.to_string()),
            ("train.adam_steps", self.adam.t.to_string()),
            ("train.best_val", fmt_f64(self.stopping.best)),
            ("train.since_best", self.stopping.since_best.to_string()),
        ] {
            ck.header.insert(k.to_string(), v);
        }
        let rows = self.curve.points.len();
        let data = self
            .curve
            .points
            .iter()
            .flat_map(|p| [p.epoch as f64, p.e_train, p.e_val])
            .collect();
        ck.tensors.push((
            "train.curve".into(),
            Matrix::from_vec(rows, 3, data).expect("finite curve"),
        ));
        ck
    }

    /// Restores a saved run. `epochs_max` may be raised to extend training;
    /// every other option must match the saved run.
    pub fn from_checkpoint(ck: &Checkpoint, epochs_max: Option<usize>) -> Result<Self> {
        let net = Network::from_checkpoint(ck)?;
        let names = net.layer_names();
        let best = crate::nn::Network::from_checkpoint(&Checkpoint {
            header: ck.header.clone(),
            tensors: ck
                .tensors
                .iter()
                .filter_map(|(n, m)| n.strip_prefix("best.").map(|s| (s.to_string(), m.clone())))
                .collect(),
        })?;
        let mut opts = TrainOptions {
            epochs_max: ck.parse("train.epochs_max")?,
            batch_size: ck.parse("train.batch_size")?,
            learning_rate: ck.parse("train.learning_rate")?,
            beta1: ck.parse("train.beta1")?,
            beta2: ck.parse("train.beta2")?,
            epsilon: ck.parse("train.epsilon")?,
            patience: ck.parse("train.patience")?,
            seed: ck.parse("train.seed")?,
        };
        if let Some(e) = epochs_max {
            opts.epochs_max = e;
        }
        opts.validate()?;
        let adam = Adam {
            params: opts.adam(),
            m: ck.take_layers("adam.m.", &names)?,
            v: ck.take_layers("adam.v.", &names)?,
            t: ck.parse("train.adam_steps")?,
        };
        let curve_m = ck.tensor("train.curve")?;
        if curve_m.cols() != 3 && curve_m.rows() > 0 {
            return Err(Error::Format("train.curve must have 3 columns".into()));
        }
        let points = (0..curve_m.rows())
            .map(|r| {
                let row = curve_m.row(r);
                CurvePoint {
                    epoch: row[0] as usize,
                    e_train: row[1],
                    e_val: row[2],
                }
            })
            .collect();
        let stopping = EarlyStopping {
            patience: opts.patience,
            best: ck.parse("train.best_val")?,
            since_best: ck.parse("train.since_best")?,
        };
        Ok(TrainState {
            net,
            best,
            adam,
            curve: LossCurve { points },
            stopping,
            opts,
        })
    }
}

/// Trains a fresh network; returns the lowest-validation-error checkpoint and
/// the full per-epoch curve.
pub fn train(
    train: &[Sample],
    val: &[Sample],
    config: ModelConfig,
    opts: &TrainOptions,
) -> Result<(Network, LossCurve)> {
    let mut state = TrainState::new(config, *opts)?;
    state.run(train, val, None)?;
    Ok((state.best, state.curve))
}
