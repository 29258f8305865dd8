//! Noisy 2D Archimedean spiral, the classic 1D manifold for unfolding tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::features::{FeatureVector, NormMode};
use crate::Point2;

#[derive(Clone, Debug, PartialEq)]
pub struct SpiralConfig {
    pub samples: usize,
    /// Outer radius in meters.
    pub radius: f64,
    /// Polar angle range, radians. The radius grows linearly with the angle
    /// and reaches `radius` at `theta_max`.
    pub theta_min: f64,
    pub theta_max: f64,
    /// Noise standard deviation as a fraction of `radius`.
    pub noise_fraction: f64,
    pub seed: u64,
}

impl Default for SpiralConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            radius: 10.0,
            theta_min: std::f64::consts::PI,
            theta_max: 4.0 * std::f64::consts::PI,
            noise_fraction: 0.02,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Spiral {
    /// Noisy points as raw 2D features, ordered by arc length.
    pub features: Vec<FeatureVector>,
    /// Arc length of the clean point along the spiral.
    pub arc_length: Vec<f64>,
    pub clean: Vec<Point2>,
}

/// Arc length of `r = bθ` from 0 to θ.
fn arc(b: f64, t: f64) -> f64 {
    0.5 * b * (t * (1.0 + t * t).sqrt() + t.asinh())
}

fn theta_at(b: f64, s: f64, lo: f64, hi: f64) -> f64 {
    let (mut lo, mut hi) = (lo, hi);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if arc(b, mid) < s {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Samples points uniformly in arc length and adds isotropic Gaussian noise.
pub fn generate_spiral(cfg: &SpiralConfig) -> Spiral {
    let b = cfg.radius / cfg.theta_max;
    let (s0, s1) = (arc(b, cfg.theta_min), arc(b, cfg.theta_max));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut s: Vec<f64> = (0..cfg.samples).map(|_| rng.random_range(s0..s1)).collect();
    s.sort_by(f64::total_cmp);
    let noise = Normal::new(0.0, cfg.noise_fraction * cfg.radius).expect("finite noise level");
    let mut features = Vec::with_capacity(cfg.samples);
    let mut clean = Vec::with_capacity(cfg.samples);
    for (i, &si) in s.iter().enumerate() {
        let t = theta_at(b, si, cfg.theta_min, cfg.theta_max);
        let p = [b * t * t.cos(), b * t * t.sin()];
        let values = vec![p[0] + noise.sample(&mut rng), p[1] + noise.sample(&mut rng)];
        clean.push(p);
        features.push(FeatureVector { values, timestamp: i as f64, sample_id: i as u64, norm_mode: NormMode::Raw });
    }
    let arc_length = s.iter().map(|x| x - s0).collect();
    Spiral { features, arc_length, clean }
}
