//! Random records of every persisted kind and byte-stream fuzzing helpers.

use chartlab::io::{
    decode_chart, decode_dataset, decode_features, decode_model, decode_report, encode_chart, encode_dataset,
    encode_features_with_dim, encode_model, encode_report, CsiDataset, IoError, FORMAT_VERSION, MAGIC,
};
use chartlab::nn::{Activation, DenseLayer};
use chartlab::{ChannelChart, CsiSample, FeatureVector, Method, MetricsReport, MlpModel, NormMode, TrainingMeta};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::panic::{catch_unwind, AssertUnwindSafe};

/// A finite value drawn either from a moderate range or from raw bit
/// patterns, so subnormals, signed zeros and huge exponents all occur.
pub fn any_finite(rng: &mut ChaCha8Rng) -> f64 {
    if rng.random_bool(0.2) {
        loop {
            let v = f64::from_bits(rng.random());
            if v.is_finite() {
                return v;
            }
        }
    }
    rng.random_range(-1e3..1e3)
}

fn vec_of(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| any_finite(rng)).collect()
}

pub fn random_dataset(rng: &mut ChaCha8Rng) -> CsiDataset {
    let (rows, cols, k) = (rng.random_range(1..4), rng.random_range(1..5), rng.random_range(1..6));
    let n = rng.random_range(0..6);
    let samples = (0..n)
        .map(|i| CsiSample {
            matrix: Array2::from_shape_simple_fn((rows * cols, k), || Complex64::new(any_finite(rng), any_finite(rng))),
            timestamp: any_finite(rng),
            true_position: rng.random_bool(0.5).then(|| [any_finite(rng), any_finite(rng)]),
            sample_id: i as u64 * 7 + rng.random_range(0..7),
        })
        .collect();
    CsiDataset { array_rows: rows, array_cols: cols, samples }
}

fn random_norm(rng: &mut ChaCha8Rng) -> NormMode {
    match rng.random_range(0..3) {
        0 => NormMode::UnitNorm,
        1 => NormMode::PathlossScaled { beta: rng.random_range(0.0..2.0) },
        _ => NormMode::Raw,
    }
}

/// Features with their width (kept explicitly so empty sets round-trip).
pub fn random_features(rng: &mut ChaCha8Rng) -> (Vec<FeatureVector>, usize) {
    let f = rng.random_range(1..12);
    let n = rng.random_range(0..8);
    let feats = (0..n)
        .map(|i| FeatureVector {
            values: vec_of(rng, f),
            timestamp: any_finite(rng),
            sample_id: i as u64,
            norm_mode: random_norm(rng),
        })
        .collect();
    (feats, f)
}

pub fn random_chart(rng: &mut ChaCha8Rng) -> ChannelChart {
    let (n, d) = (rng.random_range(1..20), rng.random_range(1..4));
    let mut ids: Vec<u64> = (0..n as u64).map(|i| i * 3).collect();
    ids.shuffle(rng);
    let method = [Method::Pca, Method::Sammon, Method::LaplacianEigenmaps, Method::TripletNet][rng.random_range(0..4)];
    let hyperparameters = (0..rng.random_range(0..4)).map(|i| (format!("h{i}_µ"), any_finite(rng))).collect();
    let (lt, ev) = (rng.random_range(0..10), rng.random_range(0..3));
    let meta = TrainingMeta { seed: rng.random(), hyperparameters, loss_trace: vec_of(rng, lt), eigenvalues: vec_of(rng, ev) };
    let coords = Array2::from_shape_simple_fn((n, d), || any_finite(rng));
    ChannelChart::new(coords, ids, method, meta).unwrap()
}

pub fn random_model(rng: &mut ChaCha8Rng) -> MlpModel {
    let widths: Vec<usize> = (0..rng.random_range(2..5)).map(|_| rng.random_range(1..7)).collect();
    let layers = widths
        .windows(2)
        .map(|w| DenseLayer {
            weights: Array2::from_shape_simple_fn((w[0], w[1]), || any_finite(rng)),
            bias: Array1::from(vec_of(rng, w[1])),
        })
        .collect();
    MlpModel {
        layers,
        activation: if rng.random_bool(0.5) { Activation::Relu } else { Activation::Tanh },
        input_mean: Array1::from(vec_of(rng, widths[0])),
        input_scale: Array1::from(vec_of(rng, widths[0])),
        seed: rng.random(),
    }
}

pub fn random_report(rng: &mut ChaCha8Rng) -> MetricsReport {
    let k_list: Vec<usize> = (0..rng.random_range(0..5)).map(|_| rng.random_range(1..500)).collect();
    MetricsReport {
        trustworthiness: k_list.iter().map(|&k| (k, rng.random())).collect(),
        continuity: k_list.iter().map(|&k| (k, rng.random())).collect(),
        k_list,
        kruskal_stress: any_finite(rng),
        alignment_rmse: rng.random_bool(0.5).then(|| any_finite(rng)),
    }
}

/// One valid encoded record of a random kind.
pub fn random_record(rng: &mut ChaCha8Rng) -> Vec<u8> {
    match rng.random_range(0..5) {
        0 => encode_dataset(&random_dataset(rng)),
        1 => {
            let (f, dim) = random_features(rng);
            encode_features_with_dim(&f, dim)
        }
        2 => encode_chart(&random_chart(rng)),
        3 => encode_model(&random_model(rng)),
        _ => encode_report(&random_report(rng)),
    }
}

/// Result of every decoder on `bytes`, with panics turned into `None`.
pub fn decode_all(bytes: &[u8]) -> Option<[Result<(), IoError>; 5]> {
    catch_unwind(AssertUnwindSafe(|| {
        [
            decode_dataset(bytes).map(drop),
            decode_features(bytes).map(drop),
            decode_chart(bytes).map(drop),
            decode_model(bytes).map(drop),
            decode_report(bytes).map(drop),
        ]
    }))
    .ok()
}

fn header(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut b = MAGIC.to_vec();
    b.extend(rng.random_range(1u32..6).to_le_bytes());
    b.extend(FORMAT_VERSION.to_le_bytes());
    let nd = rng.random_range(0u64..5);
    b.extend(nd.to_le_bytes());
    for _ in 0..nd {
        let d: u64 = if rng.random_bool(0.5) { rng.random_range(0..16) } else { rng.random() };
        b.extend(d.to_le_bytes());
    }
    b
}

/// Tally of a fuzz run: `errors` streams were rejected with a typed error,
/// `decoded` streams decoded by some reader, `panics` crashed a decoder.
#[derive(Debug, Default)]
pub struct FuzzTally {
    pub errors: usize,
    pub decoded: usize,
    pub panics: usize,
}

/// Feeds `count` streams of each family to every decoder: uniformly random
/// bytes, a valid header followed by random payload, and strict prefixes of
/// valid records. All three families must be rejected by every decoder.
pub fn fuzz_invalid(rng: &mut ChaCha8Rng, count: usize) -> FuzzTally {
    let mut t = FuzzTally::default();
    for i in 0..3 * count {
        let bytes = match i % 3 {
            0 => {
                let len = rng.random_range(0..200);
                (0..len).map(|_| rng.random()).collect::<Vec<u8>>()
            }
            1 => {
                let mut b = header(rng);
                let len = rng.random_range(1..200);
                b.extend((0..len).map(|_| rng.random::<u8>()));
                b
            }
            _ => {
                let full = random_record(rng);
                let cut = rng.random_range(0..full.len());
                full[..cut].to_vec()
            }
        };
        tally(&mut t, &bytes);
    }
    t
}

/// Flips random bytes of valid records. These may still decode, so only
/// the absence of panics is meaningful.
pub fn fuzz_mutated(rng: &mut ChaCha8Rng, count: usize) -> FuzzTally {
    let mut t = FuzzTally::default();
    for _ in 0..count {
        let mut b = random_record(rng);
        for _ in 0..rng.random_range(1..4) {
            let at = rng.random_range(0..b.len());
            b[at] = rng.random();
        }
        tally(&mut t, &b);
    }
    t
}

fn tally(t: &mut FuzzTally, bytes: &[u8]) {
    match decode_all(bytes) {
        None => t.panics += 1,
        Some(r) if r.iter().all(|x| x.is_err()) => t.errors += 1,
        Some(_) => t.decoded += 1,
    }
}
