mod common;

use std::f64::consts::PI;

use adnet::detect::{binarize, reconstruct};
use adnet::grid::{GridSpec, GridVector};
use adnet::ingest::{split, validate_flight_record, FlightRecord, SplitRatios};
use adnet::nn::{reparameterize, LatentStats, ModelConfig, Network, Variant};
use adnet::seed;
use adnet::synth::world;
use adnet::train::{train, TrainOptions};
use adnet::Error;
use proptest::prelude::*;

#[test]
fn reparameterized_draws_have_unit_variance() {
    const DRAWS: usize = 100_000;
    let stats = LatentStats {
        mu: vec![0.0; 4],
        log_var: vec![0.0; 4],
    };
    let mut rng = seed::rng(21);
    let mut sum = [0.0; 4];
    let mut sq = [0.0; 4];
    for _ in 0..DRAWS {
        for (d, z) in reparameterize(&stats, &mut rng).into_iter().enumerate() {
            sum[d] += z;
            sq[d] += z * z;
        }
    }
    for d in 0..4 {
        let mean = sum[d] / DRAWS as f64;
        let var = sq[d] / DRAWS as f64 - mean * mean;
        assert!((var - 1.0).abs() < 0.05, "dim {d}: variance {var}");
        assert!(mean.abs() < 0.02, "dim {d}: mean {mean}");
    }
}

#[test]
fn copy_crop_output_follows_each_input_bit() {
    let spec = GridSpec::new(2, 2, 100, 100).unwrap();
    for v in [Variant::UavAdNet, Variant::UavAdNetWoGps] {
        let config = ModelConfig {
            hidden_sizes: vec![8],
            latent_dim: 2,
            ..ModelConfig::for_variant(v, spec.len())
        };
        let net = Network::new(config, 3).unwrap();
        let gps = common::random_gps(&mut seed::rng(1));
        let gps = v.use_gps().then_some(&gps);
        let base = GridVector::zeros(spec);
        let z = vec![0.3, -0.2];
        let out = net.decode(&z, gps, Some(&base)).unwrap();
        for i in 0..spec.len() {
            let mut bits = base.bits().to_vec();
            bits[i] = 1;
            let flipped = GridVector::from_bits(spec, bits).unwrap();
            let moved = net.decode(&z, gps, Some(&flipped)).unwrap();
            assert_ne!(moved, out, "{v}: bit {i} has no effect");
        }
    }
    let vae = Network::new(ModelConfig::for_variant(Variant::Vae, spec.len()), 3).unwrap();
    let err = vae.decode(
        &vec![0.0; vae.config().latent_dim],
        None,
        Some(&GridVector::zeros(spec)),
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

fn small_world(n: usize, seed: u64) -> (Vec<adnet::ingest::Sample>, Vec<adnet::ingest::Sample>) {
    let spec = GridSpec::default();
    let parts = split(
        world::generate_samples(&spec, n, seed).unwrap(),
        SplitRatios {
            train: 0.8,
            val: 0.2,
            test: 0.0,
        },
        seed,
    )
    .unwrap();
    (parts.train, parts.val)
}

#[test]
fn training_is_seeded_and_reduces_error() {
    let (tr, va) = small_world(250, 6);
    assert_eq!(tr.len(), 200);
    let spec = GridSpec::default();
    let config = ModelConfig {
        hidden_sizes: vec![64, 32],
        latent_dim: 8,
        kl_weight: 1e-4,
        ..ModelConfig::for_variant(Variant::Vae, spec.len())
    };
    let opts = TrainOptions {
        epochs_max: 50,
        batch_size: 16,
        patience: 50,
        seed: 6,
        ..TrainOptions::default()
    };
    let (net_a, a) = train(&tr, &va, config.clone(), &opts).unwrap();
    let (net_b, b) = train(&tr, &va, config.clone(), &opts).unwrap();
    assert_eq!(a, b);
    assert_eq!(net_a, net_b);
    assert_eq!(a.points.len(), 50);
    assert!(a.points[49].e_train < a.points[0].e_train);

    let (_, c) = train(&tr, &va, config, &TrainOptions { seed: 7, ..opts }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn trained_copy_crop_net_reproduces_training_scenes() {
    let (tr, va) = small_world(250, 8);
    let spec = GridSpec::default();
    let config = ModelConfig {
        hidden_sizes: vec![128, 64],
        latent_dim: 8,
        kl_weight: 1e-4,
        ..ModelConfig::for_variant(Variant::UavAdNet, spec.len())
    };
    let opts = TrainOptions {
        epochs_max: 150,
        batch_size: 12,
        learning_rate: 1.5e-3,
        patience: 150,
        seed: 8,
        ..TrainOptions::default()
    };
    let (net, _) = train(&tr, &va, config, &opts).unwrap();
    let (mut kept, mut set) = (0, 0);
    for s in &tr {
        let m = binarize(&spec, &reconstruct(&net, &s.grid, &s.gps).unwrap(), 0.5).unwrap();
        for (&x, &y) in s.grid.bits().iter().zip(m.bits()) {
            set += usize::from(x == 1);
            kept += usize::from(x == 1 && y == 1);
        }
    }
    let share = kept as f64 / set as f64;
    assert!(share >= 0.95, "reproduced {share:.3} of set cells");
}

fn inside_record() -> FlightRecord {
    world::toy_recording(&GridSpec::default(), 1, 0).unwrap().1.remove(0)
}

const FIELDS: [(&str, f64, f64); 9] = [
    ("lat", -90.0, 90.0),
    ("lon", -180.0, 180.0),
    ("altitude", 0.0, 1e9),
    ("roll", -PI, PI),
    ("pitch", -PI, PI),
    ("yaw", -PI, PI),
    ("vx", 0.0, 1e9),
    ("vy", 0.0, 1e9),
    ("vz", 0.0, 1e9),
];

fn with_field(field: usize, value: f64) -> FlightRecord {
    let mut r = inside_record();
    let slot = match field {
        0 => &mut r.lat,
        1 => &mut r.lon,
        2 => &mut r.altitude,
        3 => &mut r.roll,
        4 => &mut r.pitch,
        5 => &mut r.yaw,
        6 => &mut r.vx,
        7 => &mut r.vy,
        _ => &mut r.vz,
    };
    *slot = value;
    r
}

proptest! {
    #[test]
    fn flight_bounds_accept_inside(field in 0usize..9, u in 0.0..=1.0f64) {
        let (_, lo, hi) = FIELDS[field];
        validate_flight_record(&with_field(field, lo + u * (hi - lo)), 0).unwrap();
    }

    #[test]
    fn flight_bounds_reject_outside(field in 0usize..9, d in 1e-9..10.0f64, below in any::<bool>()) {
        let (name, lo, hi) = FIELDS[field];
        prop_assume!(below || hi < 1e9);
        let v = if below { lo - d } else { hi + d };
        match validate_flight_record(&with_field(field, v), 0) {
            Err(Error::Validation { field: f, .. }) => prop_assert_eq!(f, name),
            other => prop_assert!(false, "{} = {}: {:?}", name, v, other),
        }
    }
}
