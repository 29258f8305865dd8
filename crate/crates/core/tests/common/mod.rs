//! Independent brute-force oracles shared by the integration tests.
#![allow(dead_code)]

pub mod records;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_points(rng: &mut ChaCha8Rng, n: usize, d: usize, spread: f64) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(-spread..spread))
}

/// Points on a coarse integer grid, so many pairwise distances tie.
pub fn grid_points(rng: &mut ChaCha8Rng, n: usize, d: usize, cells: i32) -> Array2<f64> {
    Array2::from_shape_simple_fn((n, d), || rng.random_range(0..cells) as f64)
}

/// Double-loop Euclidean distance matrix.
pub fn naive_distances(x: &Array2<f64>) -> Array2<f64> {
    let n = x.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..x.ncols() {
                s += (x[[i, k]] - x[[j, k]]).powi(2);
            }
            d[[i, j]] = s.sqrt();
        }
    }
    d
}

/// Rank of every `j ≠ i` in the distance ordering of row `i` (1-based),
/// ties broken by index. Computed by sorting the full row.
fn row_ranks(dist: &Array2<f64>, i: usize) -> Vec<usize> {
    let n = dist.nrows();
    let mut others: Vec<(f64, usize)> = (0..n).filter(|&j| j != i).map(|j| (dist[[i, j]], j)).collect();
    others.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let mut rank = vec![0; n];
    for (pos, &(_, j)) in others.iter().enumerate() {
        rank[j] = pos + 1;
    }
    rank
}

/// Trustworthiness straight from the definition: for each point, the
/// latent K-neighbors that are not reference K-neighbors contribute their
/// reference rank minus K.
pub fn brute_trustworthiness(reference: &Array2<f64>, latent: &Array2<f64>, k: usize) -> f64 {
    let n = reference.nrows();
    let mut total = 0usize;
    for i in 0..n {
        let r_ref = row_ranks(reference, i);
        let r_lat = row_ranks(latent, i);
        for j in 0..n {
            if j != i && r_lat[j] <= k && r_ref[j] > k {
                total += r_ref[j] - k;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * total as f64
}

fn pair_sums(reference: &Array2<f64>, latent: &Array2<f64>, beta: f64) -> (f64, f64) {
    let n = reference.nrows();
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            num += (reference[[i, j]] - beta * latent[[i, j]]).powi(2);
            den += reference[[i, j]].powi(2);
        }
    }
    (num, den)
}

/// Kruskal stress minimized numerically over the scale β by golden-section
/// search on a bracket that provably contains the optimum.
pub fn golden_stress(reference: &Array2<f64>, latent: &Array2<f64>) -> f64 {
    let stress = |b: f64| {
        let (num, den) = pair_sums(reference, latent, b);
        (num / den).sqrt()
    };
    let sum_sq = |m: &Array2<f64>| pair_sums(m, m, 0.0).1;
    let (sr2, sd2) = (sum_sq(reference), sum_sq(latent));
    // β* = Σδd/Σd² ≤ sqrt(Σδ²/Σd²) by Cauchy-Schwarz.
    let hi = if sd2 > 0.0 { 2.0 * (sr2 / sd2).sqrt() } else { 1.0 };
    golden_min(stress, 0.0, hi).1
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden_min(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// RMSE of the best similarity transform for a fixed 2D orthogonal matrix
/// (rotation by `theta`, optionally preceded by a reflection).
fn rmse_for_angle(chart: &Array2<f64>, reference: &Array2<f64>, theta: f64, mirror: bool) -> f64 {
    let n = chart.nrows();
    let mean = |x: &Array2<f64>, k: usize| (0..n).map(|i| x[[i, k]]).sum::<f64>() / n as f64;
    let (cx, cy) = (mean(chart, 0), mean(chart, 1));
    let (rx, ry) = (mean(reference, 0), mean(reference, 1));
    let (s, c) = theta.sin_cos();
    let mut moved = Vec::with_capacity(n);
    for i in 0..n {
        let x = chart[[i, 0]] - cx;
        let y = if mirror { -(chart[[i, 1]] - cy) } else { chart[[i, 1]] - cy };
        moved.push((c * x - s * y, s * x + c * y));
    }
    let (mut cross, mut norm) = (0.0, 0.0);
    for (i, &(x, y)) in moved.iter().enumerate() {
        cross += x * (reference[[i, 0]] - rx) + y * (reference[[i, 1]] - ry);
        norm += x * x + y * y;
    }
    let scale = if norm > 0.0 { (cross / norm).max(0.0) } else { 0.0 };
    let mut sq = 0.0;
    for (i, &(x, y)) in moved.iter().enumerate() {
        sq += (scale * x + rx - reference[[i, 0]]).powi(2) + (scale * y + ry - reference[[i, 1]]).powi(2);
    }
    (sq / n as f64).sqrt()
}

/// Best 2D similarity-alignment RMSE by exhaustive search over rotation
/// angles on a 0.01° grid (both handednesses), refined by golden section
/// around the best grid angle.
pub fn grid_alignment_rmse(chart: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let step = 0.01f64.to_radians();
    let steps = 36_000;
    let mut best = f64::INFINITY;
    for mirror in [false, true] {
        let (mut arg, mut val) = (0.0, f64::INFINITY);
        for s in 0..steps {
            let t = s as f64 * step;
            let v = rmse_for_angle(chart, reference, t, mirror);
            if v < val {
                arg = t;
                val = v;
            }
        }
        let refined = golden_min(|t| rmse_for_angle(chart, reference, t, mirror), arg - step, arg + step).1;
        best = best.min(val).min(refined);
    }
    best
}

/// Plain nested-loop MLP evaluation, independent of the library's layout
/// helpers: standardize, then affine + activation per hidden layer.
pub fn naive_forward(model: &chartlab::MlpModel, x: &[f64]) -> Vec<f64> {
    let mut h: Vec<f64> = (0..x.len()).map(|i| (x[i] - model.input_mean[i]) * model.input_scale[i]).collect();
    for (li, layer) in model.layers.iter().enumerate() {
        let (fan_in, fan_out) = layer.weights.dim();
        let mut next = vec![0.0; fan_out];
        for o in 0..fan_out {
            let mut s = layer.bias[o];
            for i in 0..fan_in {
                s += h[i] * layer.weights[[i, o]];
            }
            next[o] = if li + 1 < model.layers.len() {
                match model.activation {
                    chartlab::nn::Activation::Relu => s.max(0.0),
                    chartlab::nn::Activation::Tanh => s.tanh(),
                }
            } else {
                s
            };
        }
        h = next;
    }
    h
}

/// `‖a − b‖ / max(‖b‖, floor)` over flattened values.
pub fn rel_err(a: &[f64], b: &[f64], floor: f64) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let norm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / norm.max(floor)
}

/// Applies `x ↦ s·Rx + t` to the rows of a 2D point set, with `R` a
/// rotation by `theta`, preceded by a reflection when `mirror`.
pub fn similarity_2d(x: &Array2<f64>, theta: f64, mirror: bool, s: f64, t: [f64; 2]) -> Array2<f64> {
    let (sn, cs) = theta.sin_cos();
    Array2::from_shape_fn(x.raw_dim(), |(i, k)| {
        let a = x[[i, 0]];
        let b = if mirror { -x[[i, 1]] } else { x[[i, 1]] };
        let r = if k == 0 { cs * a - sn * b } else { sn * a + cs * b };
        s * r + t[k]
    })
}

/// A fast end-to-end configuration: a short street walk, a few triplet
/// epochs and both applications.
pub fn small_pipeline(seed: u64) -> chartlab::pipeline::PipelineConfig {
    use chartlab::pipeline::{AppKind, PipelineConfig, Preset, TrajectorySpec};
    let mut cfg = PipelineConfig::preset(Preset::Urban8x4, seed);
    cfg.trajectory = TrajectorySpec::StreetWalk { street_spacing: 50.0, duration: 200.0, speed: 1.0, sample_rate: 1.0 };
    cfg.chart.train.epochs = 2;
    cfg.chart.mining.triplets_per_epoch = 400;
    cfg.chart.mining.t_far = 30.0;
    cfg.apps.run = vec![AppKind::Cells, AppKind::Proximity];
    cfg.apps.test_users = 1;
    cfg.apps.test_duration = 60.0;
    cfg.apps.thresholds = 25;
    cfg
}

/// Every regular file in `dir`, sorted by name, with its bytes.
pub fn dir_contents(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

/// Relative error between the analytic Sammon gradient and central finite
/// differences of the stress on a random 8-point instance.
pub fn sammon_gradient_error(r: &mut ChaCha8Rng) -> f64 {
    use chartlab::dr::{sammon_gradient, sammon_stress};
    use chartlab::linalg::euclidean_distances;
    let h = 1e-5;
    let delta = euclidean_distances(&random_points(r, 8, 4, 1.0));
    let y = random_points(r, 8, 2, 1.0);
    let g = sammon_gradient(&delta, &y);
    let mut fd = Array2::zeros(y.raw_dim());
    for idx in ndarray::indices(y.raw_dim()) {
        let (mut yp, mut ym) = (y.clone(), y.clone());
        yp[idx] += h;
        ym[idx] -= h;
        fd[idx] = (sammon_stress(&delta, &yp) - sammon_stress(&delta, &ym)) / (2.0 * h);
    }
    rel_err(g.as_slice().unwrap(), fd.as_slice().unwrap(), 1e-12)
}

pub fn random_triplets(r: &mut ChaCha8Rng, n: usize, count: usize) -> Vec<chartlab::nn::Triplet> {
    use rand::seq::SliceRandom;
    (0..count)
        .map(|_| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(r);
            chartlab::nn::Triplet { anchor: idx[0], positive: idx[1], negative: idx[2] }
        })
        .collect()
}

/// Relative error between the analytic triplet-network parameter gradient
/// and central finite differences of the loss. Instances alternate tanh and
/// relu networks; two in three include anchor terms.
pub fn triplet_gradient_error(r: &mut ChaCha8Rng, inst: u64) -> f64 {
    use chartlab::nn::{loss_and_gradient, Activation};
    use chartlab::MlpModel;
    let h = 1e-5;
    let act = if inst % 2 == 0 { Activation::Tanh } else { Activation::Relu };
    let model = MlpModel::new(&[5, 4, 2], act, inst).unwrap();
    let x = random_points(r, 10, 5, 1.0);
    let triplets = random_triplets(r, 10, 12);
    let anchors: Vec<(usize, [f64; 2])> = (0..3).map(|i| (i, [r.random_range(-1.0..1.0), 0.5])).collect();
    let (margin, lambda) = (r.random_range(0.1..2.0), if inst % 3 == 0 { 0.0 } else { 0.7 });
    let (_, grads) = loss_and_gradient(&model, &x, &triplets, &anchors, margin, lambda);
    let loss = |m: &MlpModel| loss_and_gradient(m, &x, &triplets, &anchors, margin, lambda).0;
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for (li, (gw, gb)) in grads.iter().enumerate() {
        for idx in ndarray::indices(gw.raw_dim()) {
            let (mut p, mut m) = (model.clone(), model.clone());
            p.layers[li].weights[idx] += h;
            m.layers[li].weights[idx] -= h;
            analytic.push(gw[idx]);
            numeric.push((loss(&p) - loss(&m)) / (2.0 * h));
        }
        for j in 0..gb.len() {
            let (mut p, mut m) = (model.clone(), model.clone());
            p.layers[li].bias[j] += h;
            m.layers[li].bias[j] -= h;
            analytic.push(gb[j]);
            numeric.push((loss(&p) - loss(&m)) / (2.0 * h));
        }
    }
    rel_err(&analytic, &numeric, 1e-12)
}
