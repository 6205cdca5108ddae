//! The VAE family and its hand-written reverse pass.
//!
//! Layer order is fixed and shared by checkpoints and optimizer state:
//! `encoder.0 .. encoder.{k-1}, mu, log_var, decoder.0 .. decoder.{k-1}, output`.
//!
//! Encoder input is `[grid, gps?]`, decoder input is `[z, gps?]`, and the
//! output layer sees `[decoder features, grid?]` where the trailing grid is
//! the copy-crop link.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::dense::{relu_in_place, sigmoid, Dense};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::grid::GridVector;
use crate::ingest::GpsFeature;
use crate::seed;

pub const LOG_VAR_MIN: f64 = -10.0;
pub const LOG_VAR_MAX: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct LatentStats {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

/// Objective terms for one sample (or a batch mean).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub recon: f64,
    pub kl: f64,
}

/// Gradients laid out exactly like the network's layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Dense>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    config: ModelConfig,
    layers: Vec<Dense>,
}

/// One training example: a grid plus its conditioning.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub grid: &'a GridVector,
    pub gps: Option<&'a GpsFeature>,
}

struct Trace {
    /// Input vector of every layer, by layer index.
    inputs: Vec<Vec<f64>>,
    mu: Vec<f64>,
    log_var: Vec<f64>,
    log_var_active: Vec<bool>,
    eps: Vec<f64>,
    probs: Vec<f64>,
}

fn layer_shapes(c: &ModelConfig) -> Vec<(usize, usize)> {
    let g = c.effective_gps_len();
    let mut shapes = Vec::new();
    let mut width = c.grid_len + g;
    for &h in &c.hidden_sizes {
        shapes.push((width, h));
        width = h;
    }
    shapes.push((width, c.latent_dim));
    shapes.push((width, c.latent_dim));
    let mut width = c.latent_dim + g;
    for &h in c.hidden_sizes.iter().rev() {
        shapes.push((width, h));
        width = h;
    }
    let skip = if c.use_copy_crop { c.grid_len } else { 0 };
    shapes.push((width + skip, c.grid_len));
    shapes
}

pub fn reparameterize_with(stats: &LatentStats, eps: &[f64]) -> Vec<f64> {
    stats
        .mu
        .iter()
        .zip(&stats.log_var)
        .zip(eps)
        .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
        .collect()
}

/// `z = mu + exp(log_var / 2) * eps` with `eps ~ N(0, I)` drawn from `rng`.
pub fn reparameterize<R: Rng + ?Sized>(stats: &LatentStats, rng: &mut R) -> Vec<f64> {
    let eps = standard_normal(stats.mu.len(), rng);
    reparameterize_with(stats, &eps)
}

pub fn standard_normal<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

/// Mean squared reconstruction error plus `beta`-weighted KL divergence from
/// the standard normal prior.
pub fn loss(x: &GridVector, x_hat: &[f64], stats: &LatentStats, beta: f64) -> Result<LossParts> {
    if x.len() != x_hat.len() {
        return Err(Error::shape(format!(
            "input has {} cells, reconstruction {}",
            x.len(),
            x_hat.len()
        )));
    }
    if stats.mu.len() != stats.log_var.len() {
        return Err(Error::shape("mu and log_var lengths differ"));
    }
    let recon = mse(&x.to_f64(), x_hat);
    let kl = kl_divergence(stats);
    Ok(LossParts {
        total: recon + beta * kl,
        recon,
        kl,
    })
}

pub(crate) fn mse(x: &[f64], x_hat: &[f64]) -> f64 {
    x.iter().zip(x_hat).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / x.len() as f64
}

fn kl_divergence(stats: &LatentStats) -> f64 {
    -0.5 * stats
        .mu
        .iter()
        .zip(&stats.log_var)
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum::<f64>()
}

fn check_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(what.to_string()))
    }
}

impl Gradients {
    pub fn zeros_like(net: &Network) -> Self {
        Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| Dense::zeros(l.inputs(), l.outputs()))
                .collect(),
        }
    }

    /// Fails with the offending parameter name on NaN or infinity.
    pub fn check_finite(&self, names: &[String]) -> Result<()> {
        for (layer, name) in self.layers.iter().zip(names) {
            if layer.weight.data().iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {name}.weight")));
            }
            if layer.bias.iter().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("gradient of {name}.bias")));
            }
        }
        Ok(())
    }
}

impl Network {
    /// Glorot-uniform initialization from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seed::stream(seed, &[0x1417]);
        let layers = layer_shapes(&config)
            .into_iter()
            .map(|(i, o)| Dense::glorot(i, o, &mut rng))
            .collect();
        Ok(Network { config, layers })
    }

    /// All weights and biases zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let layers = layer_shapes(&config)
            .into_iter()
            .map(|(i, o)| Dense::zeros(i, o))
            .collect();
        Ok(Network { config, layers })
    }

    pub(crate) fn from_layers(config: ModelConfig, layers: Vec<Dense>) -> Result<Self> {
        config.validate()?;
        let shapes = layer_shapes(&config);
        if shapes.len() != layers.len()
            || shapes
                .iter()
                .zip(&layers)
                .any(|(&(i, o), l)| l.inputs() != i || l.outputs() != o)
        {
            return Err(Error::shape("layer shapes do not chain for this configuration"));
        }
        for (l, name) in layers.iter().zip(Self::layer_names_for(&config)) {
            if l.params().any(|v| !v.is_finite()) {
                return Err(Error::Numeric(format!("parameters of {name}")));
            }
        }
        Ok(Network { config, layers })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    fn layer_names_for(config: &ModelConfig) -> Vec<String> {
        let k = config.hidden_sizes.len();
        (0..k)
            .map(|i| format!("encoder.{i}"))
            .chain(["mu".to_string(), "log_var".to_string()])
            .chain((0..k).map(|i| format!("decoder.{i}")))
            .chain(std::iter::once("output".to_string()))
            .collect()
    }

    pub fn layer_names(&self) -> Vec<String> {
        Self::layer_names_for(&self.config)
    }

    fn n_hidden(&self) -> usize {
        self.config.hidden_sizes.len()
    }

    fn mu_index(&self) -> usize {
        self.n_hidden()
    }

    fn output_index(&self) -> usize {
        self.layers.len() - 1
    }

    fn check_grid(&self, grid: &GridVector) -> Result<()> {
        if grid.len() != self.config.grid_len {
            return Err(Error::shape(format!(
                "model expects {} grid cells, got {}",
                self.config.grid_len,
                grid.len()
            )));
        }
        Ok(())
    }

    fn check_gps(&self, gps: Option<&GpsFeature>) -> Result<()> {
        match (self.config.use_gps, gps) {
            (true, None) => Err(Error::config(
                "this model is GPS-conditioned; a GPS feature is required",
            )),
            (false, Some(_)) => Err(Error::config("this model takes no GPS input")),
            (_, Some(g)) => check_finite(&g.values, "GPS feature"),
            _ => Ok(()),
        }
    }

    fn with_gps(mut v: Vec<f64>, gps: Option<&GpsFeature>) -> Vec<f64> {
        if let Some(g) = gps {
            v.extend_from_slice(&g.values);
        }
        v
    }

    /// Runs the encoder; returns `(mu, clamped log_var, unclamped mask, per-layer inputs)`.
    fn run_encoder(
        &self,
        grid: &GridVector,
        gps: Option<&GpsFeature>,
    ) -> Result<(LatentStats, Vec<bool>, Vec<Vec<f64>>)> {
        self.check_grid(grid)?;
        self.check_gps(gps)?;
        let mut inputs = Vec::with_capacity(self.n_hidden() + 1);
        let mut cur = Self::with_gps(grid.to_f64(), gps);
        for layer in &self.layers[..self.n_hidden()] {
            let mut next = layer.forward(&cur);
            relu_in_place(&mut next);
            inputs.push(cur);
            cur = next;
        }
        let mu = self.layers[self.mu_index()].forward(&cur);
        let raw = self.layers[self.mu_index() + 1].forward(&cur);
        inputs.push(cur);
        check_finite(&mu, "encoder mean")?;
        check_finite(&raw, "encoder log-variance")?;
        let active = raw.iter().map(|&v| (LOG_VAR_MIN..=LOG_VAR_MAX).contains(&v)).collect();
        let log_var = raw.iter().map(|v| v.clamp(LOG_VAR_MIN, LOG_VAR_MAX)).collect();
        Ok((LatentStats { mu, log_var }, active, inputs))
    }

    /// Runs the decoder; returns output probabilities and per-layer inputs.
    fn run_decoder(
        &self,
        z: &[f64],
        gps: Option<&GpsFeature>,
        grid_input: Option<&GridVector>,
    ) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        if z.len() != self.config.latent_dim {
            return Err(Error::shape(format!(
                "latent vector has {} values, model expects {}",
                z.len(),
                self.config.latent_dim
            )));
        }
        self.check_gps(gps)?;
        match (self.config.use_copy_crop, grid_input) {
            (true, None) => return Err(Error::config("copy-crop model needs the grid input at decode time")),
            (false, Some(_)) => {
                return Err(Error::config(
                    "this model has no copy-crop link; grid input not accepted",
                ))
            }
            (_, Some(g)) => self.check_grid(g)?,
            _ => {}
        }
        let mut inputs = Vec::with_capacity(self.n_hidden() + 1);
        let mut cur = Self::with_gps(z.to_vec(), gps);
        let start = self.mu_index() + 2;
        for layer in &self.layers[start..self.output_index()] {
            let mut next = layer.forward(&cur);
            relu_in_place(&mut next);
            inputs.push(cur);
            cur = next;
        }
        if let Some(g) = grid_input {
            cur.extend(g.bits().iter().map(|&b| f64::from(b)));
        }
        let logits = self.layers[self.output_index()].forward(&cur);
        inputs.push(cur);
        check_finite(&logits, "output logits")?;
        Ok((logits.into_iter().map(sigmoid).collect(), inputs))
    }

    pub fn encode(&self, grid: &GridVector, gps: Option<&GpsFeature>) -> Result<LatentStats> {
        self.run_encoder(grid, gps).map(|(s, _, _)| s)
    }

    /// Output probabilities, each strictly inside (0, 1).
    pub fn decode(&self, z: &[f64], gps: Option<&GpsFeature>, grid_input: Option<&GridVector>) -> Result<Vec<f64>> {
        self.run_decoder(z, gps, grid_input).map(|(p, _)| p)
    }

    /// Deterministic reconstruction through the latent mean.
    pub fn reconstruct(&self, grid: &GridVector, gps: Option<&GpsFeature>) -> Result<Vec<f64>> {
        let stats = self.encode(grid, gps)?;
        let skip = self.config.use_copy_crop.then_some(grid);
        self.decode(&stats.mu, gps, skip)
    }

    fn forward_trace(&self, ex: Example<'_>, eps: &[f64]) -> Result<Trace> {
        if eps.len() != self.config.latent_dim {
            return Err(Error::shape("noise vector length differs from latent_dim"));
        }
        let (stats, log_var_active, mut inputs) = self.run_encoder(ex.grid, ex.gps)?;
        // mu and log_var share their input.
        inputs.push(inputs.last().expect("encoder trace").clone());
        let z = reparameterize_with(&stats, eps);
        let skip = self.config.use_copy_crop.then_some(ex.grid);
        let (probs, dec_inputs) = self.run_decoder(&z, ex.gps, skip)?;
        inputs.extend(dec_inputs);
        Ok(Trace {
            inputs,
            mu: stats.mu,
            log_var: stats.log_var,
            log_var_active,
            eps: eps.to_vec(),
            probs,
        })
    }

    /// Per-layer output deltas for one sample; `scale` multiplies the loss.
    fn reverse(&self, trace: &Trace, x: &[f64], scale: f64) -> Vec<Vec<f64>> {
        let beta = self.config.kl_weight;
        let n = x.len() as f64;
        let mut deltas = vec![Vec::new(); self.layers.len()];

        let out = self.output_index();
        let d_logits: Vec<f64> = trace
            .probs
            .iter()
            .zip(x)
            .map(|(&p, &t)| scale * 2.0 * (p - t) / n * p * (1.0 - p))
            .collect();
        // Only the decoder-feature part of the output layer's input needs a
        // gradient; the copy-crop inputs are data.
        let feat = trace.inputs[out].len()
            - if self.config.use_copy_crop {
                self.config.grid_len
            } else {
                0
            };
        let head = &self.layers[out];
        let mut d_cur: Vec<f64> = (0..feat)
            .map(|j| super::dense::dot(head.weight.row(j), &d_logits))
            .collect();
        deltas[out] = d_logits;

        let dec_start = self.mu_index() + 2;
        for l in (dec_start..out).rev() {
            // Output of layer l is the leading part of layer l+1's input.
            let y = &trace.inputs[l + 1][..self.layers[l].outputs()];
            let d_pre: Vec<f64> = d_cur
                .iter()
                .zip(y)
                .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                .collect();
            d_cur = self.layers[l].backward_input(&d_pre);
            deltas[l] = d_pre;
        }

        let latent = self.config.latent_dim;
        let dz = &d_cur[..latent];
        let mut d_mu = Vec::with_capacity(latent);
        let mut d_lv = Vec::with_capacity(latent);
        for k in 0..latent {
            let (m, lv, e) = (trace.mu[k], trace.log_var[k], trace.eps[k]);
            d_mu.push(dz[k] + scale * beta * m);
            let g = dz[k] * e * 0.5 * (0.5 * lv).exp() + scale * beta * 0.5 * (lv.exp() - 1.0);
            d_lv.push(if trace.log_var_active[k] { g } else { 0.0 });
        }
        let mu_i = self.mu_index();
        let mut d_h = self.layers[mu_i].backward_input(&d_mu);
        for (a, b) in d_h.iter_mut().zip(self.layers[mu_i + 1].backward_input(&d_lv)) {
            *a += b;
        }
        deltas[mu_i] = d_mu;
        deltas[mu_i + 1] = d_lv;

        for l in (0..self.n_hidden()).rev() {
            let y = &trace.inputs[l + 1];
            let d_pre: Vec<f64> = d_h
                .iter()
                .zip(y)
                .map(|(d, &v)| if v > 0.0 { *d } else { 0.0 })
                .collect();
            if l > 0 {
                d_h = self.layers[l].backward_input(&d_pre);
            }
            deltas[l] = d_pre;
        }
        deltas
    }

    /// Mean objective and its exact gradient over a batch.
    ///
    /// Per-sample passes may run in parallel (inside the caller's rayon
    /// pool); every gradient entry is summed in batch order, so the result
    /// is bit-identical for any thread count.
    pub fn batch_gradients(&self, batch: &[Example<'_>], eps: &[Vec<f64>]) -> Result<(Gradients, LossParts)> {
        if batch.is_empty() || batch.len() != eps.len() {
            return Err(Error::Argument(
                "batch and noise lists must be nonempty and aligned".into(),
            ));
        }
        let scale = 1.0 / batch.len() as f64;
        let passes = batch
            .par_iter()
            .zip(eps.par_iter())
            .map(|(ex, e)| -> Result<(Trace, Vec<Vec<f64>>, LossParts)> {
                let trace = self.forward_trace(*ex, e)?;
                let stats = LatentStats {
                    mu: trace.mu.clone(),
                    log_var: trace.log_var.clone(),
                };
                let parts = loss(ex.grid, &trace.probs, &stats, self.config.kl_weight)?;
                let deltas = self.reverse(&trace, &ex.grid.to_f64(), scale);
                Ok((trace, deltas, parts))
            })
            .collect::<Result<Vec<_>>>()?;

        let mut grads = Gradients::zeros_like(self);
        for (l, g) in grads.layers.iter_mut().enumerate() {
            let cols = g.outputs();
            g.weight
                .data_mut()
                .par_chunks_mut(cols)
                .with_min_len(8)
                .enumerate()
                .for_each(|(j, row)| {
                    for (trace, deltas, _) in &passes {
                        let xj = trace.inputs[l][j];
                        if xj != 0.0 {
                            super::dense::axpy(xj, &deltas[l], row);
                        }
                    }
                });
            for (_, deltas, _) in &passes {
                for (b, d) in g.bias.iter_mut().zip(&deltas[l]) {
                    *b += d;
                }
            }
        }
        grads.check_finite(&self.layer_names())?;

        let mut mean = LossParts::default();
        for (_, _, p) in &passes {
            mean.total += p.total * scale;
            mean.recon += p.recon * scale;
            mean.kl += p.kl * scale;
        }
        Ok((grads, mean))
    }

    /// Gradient of the single-sample objective, with the reparameterization
    /// noise drawn from `seed`.
    pub fn backward(&self, grid: &GridVector, gps: Option<&GpsFeature>, seed: u64) -> Result<(Gradients, LossParts)> {
        let eps = standard_normal(self.config.latent_dim, &mut seed::rng(seed));
        self.batch_gradients(&[Example { grid, gps }], &[eps])
    }

    /// Single-sample objective with the same noise [`Network::backward`] uses.
    pub fn objective(&self, grid: &GridVector, gps: Option<&GpsFeature>, seed: u64) -> Result<LossParts> {
        let eps = standard_normal(self.config.latent_dim, &mut seed::rng(seed));
        let trace = self.forward_trace(Example { grid, gps }, &eps)?;
        let stats = LatentStats {
            mu: trace.mu,
            log_var: trace.log_var,
        };
        loss(grid, &trace.probs, &stats, self.config.kl_weight)
    }
}
