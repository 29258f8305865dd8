//! Sammon's mapping: minimizes
//! `E = (1/Σδ) Σ_{i<j} (δ_ij − d_ij)² / δ_ij` over latent coordinates, with
//! δ the input distances and d the latent Euclidean distances.
//!
//! Descent uses Sammon's diagonal pseudo-Newton direction with a backtracking
//! line search, so every accepted step is non-increasing in `E`.

use ndarray::{Array2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_square, ChannelChart, DrError, Method, TrainingMeta};
use crate::linalg::symmetric_eigen;
use crate::par;

#[derive(Clone, Debug, PartialEq)]
pub struct SammonConfig {
    pub dim: usize,
    pub iters: usize,
    /// Initial step length of the line search (Sammon's "magic factor").
    pub lr: f64,
    pub seed: u64,
    /// If set, off-diagonal input distances below this value are raised to it
    /// instead of being rejected.
    pub distance_floor: Option<f64>,
}

impl Default for SammonConfig {
    fn default() -> Self {
        Self { dim: 2, iters: 500, lr: 1.0, seed: 0, distance_floor: None }
    }
}

const MAX_BACKTRACKS: usize = 40;

fn latent_distance(y: &Array2<f64>, i: usize, j: usize) -> f64 {
    y.row(i).iter().zip(y.row(j).iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn normalizer(delta: &Array2<f64>) -> f64 {
    let n = delta.nrows();
    (0..n).map(|i| (i + 1..n).map(|j| delta[[i, j]]).sum::<f64>()).sum()
}

/// Sammon stress of latent configuration `y` (N × d) against distances `delta`.
pub fn sammon_stress(delta: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = delta.nrows();
    let c = normalizer(delta);
    let rows = par::map_range(n, |i| {
        (i + 1..n)
            .map(|j| {
                let dl = delta[[i, j]];
                let e = dl - latent_distance(y, i, j);
                e * e / dl
            })
            .sum::<f64>()
    });
    rows.iter().sum::<f64>() / c
}

/// Analytic gradient `∂E/∂y`.
pub fn sammon_gradient(delta: &Array2<f64>, y: &Array2<f64>) -> Array2<f64> {
    gradient_and_curvature(delta, y, normalizer(delta)).0
}

fn gradient_and_curvature(delta: &Array2<f64>, y: &Array2<f64>, c: f64) -> (Array2<f64>, Array2<f64>) {
    let (n, d) = y.dim();
    let scale = -2.0 / c;
    let rows = par::map_range(n, |i| {
        let mut g = vec![0.0; d];
        let mut h = vec![0.0; d];
        for j in 0..n {
            if j == i {
                continue;
            }
            let dl = delta[[i, j]];
            let dy = latent_distance(y, i, j);
            if dy < 1e-300 {
                continue;
            }
            let prod = dl * dy;
            let diff = dl - dy;
            for k in 0..d {
                let yk = y[[i, k]] - y[[j, k]];
                g[k] += diff / prod * yk;
                h[k] += (diff - yk * yk / dy * (1.0 + diff / dy)) / prod;
            }
        }
        (g, h)
    });
    let mut grad = Array2::zeros((n, d));
    let mut curv = Array2::zeros((n, d));
    for (i, (g, h)) in rows.into_iter().enumerate() {
        for k in 0..d {
            grad[[i, k]] = scale * g[k];
            curv[[i, k]] = scale * h[k];
        }
    }
    (grad, curv)
}

/// Groups exactly coincident samples (zero off-diagonal distance). Returns
/// the representative index of each group and, for every input sample, the
/// position of its group in that list.
pub fn merge_duplicates(delta: &Array2<f64>) -> (Vec<usize>, Vec<usize>) {
    let n = delta.nrows();
    let mut reps: Vec<usize> = Vec::new();
    let mut group = vec![usize::MAX; n];
    for i in 0..n {
        if group[i] != usize::MAX {
            continue;
        }
        group[i] = reps.len();
        for j in i + 1..n {
            if group[j] == usize::MAX && delta[[i, j]] == 0.0 {
                group[j] = reps.len();
            }
        }
        reps.push(i);
    }
    (reps, group)
}

/// Classical (Torgerson) scaling: the PCA embedding implied by a distance
/// matrix.
fn classical_scaling(delta: &Array2<f64>, d: usize) -> Result<Array2<f64>, DrError> {
    let n = delta.nrows();
    let sq = delta.mapv(|v| v * v);
    let row_mean = sq.mean_axis(Axis(1)).expect("n > 0");
    let total = row_mean.mean().expect("n > 0");
    let mut b = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            b[[i, j]] = -0.5 * (sq[[i, j]] - row_mean[i] - row_mean[j] + total);
        }
    }
    let eig = symmetric_eigen(&b)?;
    let mut y = Array2::zeros((n, d));
    for k in 0..d {
        let src = n - 1 - k;
        let s = eig.values[src].max(0.0).sqrt();
        for i in 0..n {
            y[[i, k]] = eig.vectors[[i, src]] * s;
        }
    }
    Ok(y)
}

/// Runs Sammon's mapping on the distance matrix `delta`.
pub fn sammon_embed(delta: &Array2<f64>, config: &SammonConfig) -> Result<ChannelChart, DrError> {
    let n = check_square(delta)?;
    let d = config.dim;
    if d < 1 || n <= d {
        return Err(DrError::TooFewSamples { n, d });
    }
    if !(config.lr > 0.0) {
        return Err(DrError::InvalidInput("Sammon step length must be positive".into()));
    }
    let mut delta = delta.clone();
    for i in 0..n {
        for j in 0..n {
            let v = delta[[i, j]];
            if !v.is_finite() || v < 0.0 {
                return Err(DrError::InvalidInput(format!("distance ({i}, {j}) = {v} is not a finite non-negative number")));
            }
            if i != j && v <= 0.0 {
                match config.distance_floor {
                    Some(eps) if eps > 0.0 => delta[[i, j]] = eps,
                    _ => return Err(DrError::DuplicateSamples(i.min(j), i.max(j))),
                }
            }
        }
    }
    let c = normalizer(&delta);

    let mut y = classical_scaling(&delta, d)?;
    let scale = (c / (n * (n - 1) / 2) as f64).max(f64::MIN_POSITIVE);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    for v in y.iter_mut() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += 1e-8 * scale * z;
    }

    let mut loss = sammon_stress(&delta, &y);
    if !loss.is_finite() {
        return Err(DrError::Divergence(0));
    }
    let mut trace = vec![loss];
    for iter in 1..=config.iters {
        if loss < 1e-15 {
            break;
        }
        let (g, h) = gradient_and_curvature(&delta, &y, c);
        let dir = ndarray::Zip::from(&g).and(&h).map_collect(|&gv, &hv| -gv / hv.abs().max(1e-12));
        let mut step = config.lr;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let cand = &y + &(&dir * step);
            let l = sammon_stress(&delta, &cand);
            if l.is_nan() {
                return Err(DrError::Divergence(iter));
            }
            if l <= loss {
                accepted = Some((cand, l));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, l)) = accepted else { break };
        let improvement = loss - l;
        y = cand;
        loss = l;
        trace.push(loss);
        if improvement <= 1e-14 * loss {
            break;
        }
    }
    let meta = TrainingMeta {
        seed: config.seed,
        hyperparameters: vec![
            ("latent_dim".into(), d as f64),
            ("iters".into(), config.iters as f64),
            ("lr".into(), config.lr),
            ("distance_floor".into(), config.distance_floor.unwrap_or(0.0)),
        ],
        loss_trace: trace,
        eigenvalues: Vec::new(),
    };
    ChannelChart::new(y, (0..n as u64).collect(), Method::Sammon, meta)
}
