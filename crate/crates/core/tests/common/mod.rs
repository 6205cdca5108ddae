//! Independent oracles shared by the integration suites. Nothing here calls
//! into the code paths it is used to check.
#![allow(dead_code)]

use adnet::grid::{GridSpec, GridVector};
use adnet::ingest::GpsFeature;
use adnet::nn::Network;
use rand::Rng;

/// Worst relative error between analytic and central-difference gradients
/// over every parameter, with the parameter's name and index.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-8)`; the floor only matters
/// for gradients that are zero up to rounding.
pub fn finite_difference_check(
    net: &Network,
    grid: &GridVector,
    gps: Option<&GpsFeature>,
    seed: u64,
    h: f64,
) -> (f64, String) {
    let (analytic, _) = net.backward(grid, gps, seed).expect("backward");
    let names = net.layer_names();
    let mut probe = net.clone();
    let mut worst = (0.0f64, String::new());
    for l in 0..net.layers().len() {
        let n_weights = net.layers()[l].weight.data().len();
        let n_bias = net.layers()[l].bias.len();
        for k in 0..n_weights + n_bias {
            let (a, label) = if k < n_weights {
                (analytic.layers[l].weight.data()[k], format!("{}.weight[{k}]", names[l]))
            } else {
                (
                    analytic.layers[l].bias[k - n_weights],
                    format!("{}.bias[{}]", names[l], k - n_weights),
                )
            };
            let eval = |probe: &mut Network, delta: f64| -> f64 {
                let layer = &mut probe.layers_mut()[l];
                let slot = if k < n_weights {
                    &mut layer.weight.data_mut()[k]
                } else {
                    &mut layer.bias[k - n_weights]
                };
                let orig = *slot;
                *slot = orig + delta;
                let f = probe.objective(grid, gps, seed).expect("objective").total;
                let layer = &mut probe.layers_mut()[l];
                let slot = if k < n_weights {
                    &mut layer.weight.data_mut()[k]
                } else {
                    &mut layer.bias[k - n_weights]
                };
                *slot = orig;
                f
            };
            let numeric = (eval(&mut probe, h) - eval(&mut probe, -h)) / (2.0 * h);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > worst.0 {
                worst = (rel, format!("{label}: analytic {a:e} numeric {numeric:e}"));
            }
        }
    }
    worst
}

pub fn random_grid<R: Rng>(spec: GridSpec, density: f64, rng: &mut R) -> GridVector {
    let bits = (0..spec.len()).map(|_| u8::from(rng.random_bool(density))).collect();
    GridVector::from_bits(spec, bits).unwrap()
}

pub fn random_gps<R: Rng>(rng: &mut R) -> GpsFeature {
    GpsFeature::new(rng.random(), rng.random(), rng.random())
}

/// Per-sample mean squared error, averaged over samples, with plain loops.
pub fn brute_force_reconstruction_error(inputs: &[Vec<u8>], outputs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, y) in inputs.iter().zip(outputs) {
        let mut s = 0.0;
        for i in 0..x.len() {
            let d = x[i] as f64 - y[i];
            s += d * d;
        }
        total += s / x.len() as f64;
    }
    total / inputs.len() as f64
}

/// (tp, tn, fp, fn) by direct per-cell case analysis.
pub fn brute_force_confusion(ground: &[u8], model: &[u8]) -> (u64, u64, u64, u64) {
    let (mut tp, mut tn, mut fp, mut fn_) = (0, 0, 0, 0);
    for i in 0..ground.len() {
        match (ground[i], model[i]) {
            (1, 1) => tp += 1,
            (0, 0) => tn += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => unreachable!(),
        }
    }
    (tp, tn, fp, fn_)
}
