use ndarray::Array2;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Scenario, SimError, Trajectory, SPEED_OF_LIGHT, UE_HEIGHT};
use crate::{par, Point2, Point3};

/// One CSI snapshot: antennas × subcarriers.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiSample {
    pub matrix: Array2<Complex64>,
    pub timestamp: f64,
    pub true_position: Option<Point2>,
    pub sample_id: u64,
}

impl CsiSample {
    pub fn num_antennas(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_subcarriers(&self) -> usize {
        self.matrix.ncols()
    }
}

/// URA response to a plane wave arriving from unit direction `direction`
/// (pointing from the array towards the source). Entry `row * cols + col`
/// has phase `2π · spacing · (col·u_x + row·u_z)`, spacing in wavelengths.
pub fn steering_vector(rows: usize, cols: usize, spacing: f64, direction: Point3) -> Vec<Complex64> {
    let k = std::f64::consts::TAU * spacing;
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let phase = k * (c as f64 * direction[0] + r as f64 * direction[2]);
            out.push(Complex64::from_polar(1.0, phase));
        }
    }
    out
}

/// Absolute subcarrier frequencies: `f_c + (k − (K−1)/2) · B/K`.
pub fn subcarrier_frequencies(scenario: &Scenario) -> Vec<f64> {
    let k_total = scenario.num_subcarriers;
    let spacing = scenario.bandwidth / k_total as f64;
    let centre = (k_total as f64 - 1.0) / 2.0;
    (0..k_total)
        .map(|k| scenario.carrier_frequency + (k as f64 - centre) * spacing)
        .collect()
}

struct Path {
    amplitude: Complex64,
    direction: Point3,
    delay: f64,
}

fn sub(a: Point3, b: Point3) -> Point3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn norm(v: Point3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn scale(v: Point3, s: f64) -> Point3 {
    [v[0] * s, v[1] * s, v[2] * s]
}

const MIN_PATH_LENGTH: f64 = 1e-9;

fn propagation_paths(scenario: &Scenario, ue: Point2) -> Result<Vec<Path>, SimError> {
    let ue3 = [ue[0], ue[1], UE_HEIGHT];
    let bs = scenario.bs_position;
    let half_exp = -scenario.pathloss_exponent / 2.0;
    let mut paths = Vec::with_capacity(scenario.scatterers.len() + 1);

    let los = sub(ue3, bs);
    let los_len = norm(los);
    if los_len < MIN_PATH_LENGTH {
        return Err(SimError::DegenerateGeometry("user coincides with the base station"));
    }
    let blocked = scenario.los_blockage_regions.iter().any(|r| r.contains(ue));
    if !blocked {
        paths.push(Path {
            amplitude: Complex64::new(los_len.powf(half_exp), 0.0),
            direction: scale(los, 1.0 / los_len),
            delay: los_len / SPEED_OF_LIGHT,
        });
    }
    for s in &scenario.scatterers {
        let leg_in = sub(s.position, bs);
        let d_bs = norm(leg_in);
        let d_ue = norm(sub(ue3, s.position));
        if d_bs < MIN_PATH_LENGTH {
            return Err(SimError::DegenerateGeometry("scatterer coincides with the base station"));
        }
        if d_ue < MIN_PATH_LENGTH {
            return Err(SimError::DegenerateGeometry("user coincides with a scatterer"));
        }
        let len = d_bs + d_ue;
        paths.push(Path {
            amplitude: s.gain * len.powf(half_exp),
            direction: scale(leg_in, 1.0 / d_bs),
            delay: len / SPEED_OF_LIGHT,
        });
    }
    Ok(paths)
}

/// Noiseless channel matrix (antennas × subcarriers) at ground position `ue`.
pub fn synthesize_channel(scenario: &Scenario, ue: Point2) -> Result<Array2<Complex64>, SimError> {
    scenario.validate()?;
    if !scenario.coverage_area.contains(ue) {
        return Err(SimError::OutsideCoverage { x: ue[0], y: ue[1] });
    }
    let freqs = subcarrier_frequencies(scenario);
    Ok(channel_from_paths(scenario, &propagation_paths(scenario, ue)?, &freqs))
}

fn channel_from_paths(scenario: &Scenario, paths: &[Path], freqs: &[f64]) -> Array2<Complex64> {
    let mut h = Array2::<Complex64>::zeros((scenario.num_antennas(), freqs.len()));
    let mut response = vec![Complex64::new(0.0, 0.0); freqs.len()];
    for p in paths {
        let a = steering_vector(scenario.array_rows, scenario.array_cols, scenario.element_spacing, p.direction);
        for (r, &f) in response.iter_mut().zip(freqs) {
            // Reduce the phase modulo 2π before cis() to keep precision at GHz·µs.
            let cycles = f * p.delay;
            let phase = -std::f64::consts::TAU * (cycles - cycles.floor());
            *r = p.amplitude * Complex64::from_polar(1.0, phase);
        }
        for (ant, &av) in a.iter().enumerate() {
            for (k, &rv) in response.iter().enumerate() {
                h[[ant, k]] += av * rv;
            }
        }
    }
    h
}

/// Samples `trajectory`, synthesizes CSI at every position and adds circular
/// complex Gaussian noise of per-entry variance `noise_std²`.
///
/// The noise for sample `i` comes from ChaCha8 seeded with `rng_seed` on
/// stream `i`, so the result does not depend on how samples are scheduled.
pub fn generate_dataset(scenario: &Scenario, trajectory: &Trajectory) -> Result<Vec<CsiSample>, SimError> {
    generate_dataset_from(scenario, trajectory, 0)
}

/// [`generate_dataset`] with sample ids (and noise streams) starting at
/// `first_id`, so datasets of several users can share one id space.
pub fn generate_dataset_from(
    scenario: &Scenario,
    trajectory: &Trajectory,
    first_id: u64,
) -> Result<Vec<CsiSample>, SimError> {
    scenario.validate()?;
    trajectory.validate()?;
    for w in &trajectory.waypoints {
        if !scenario.coverage_area.contains(w.position) {
            return Err(SimError::OutsideCoverage { x: w.position[0], y: w.position[1] });
        }
    }
    let times = trajectory.sample_times();
    let freqs = subcarrier_frequencies(scenario);
    let sigma = scenario.noise_std / std::f64::consts::SQRT_2;
    let samples = par::map_range(times.len(), |i| -> Result<CsiSample, SimError> {
        let t = times[i];
        let pos = trajectory.position_at(t);
        let paths = propagation_paths(scenario, pos)?;
        let mut matrix = channel_from_paths(scenario, &paths, &freqs);
        if scenario.noise_std > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.rng_seed);
            rng.set_stream(first_id + i as u64);
            for v in matrix.iter_mut() {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                *v += Complex64::new(sigma * re, sigma * im);
            }
        }
        Ok(CsiSample { matrix, timestamp: t, true_position: Some(pos), sample_id: first_id + i as u64 })
    });
    samples.into_iter().collect()
}
