//! CSI feature extraction.
//!
//! Every transform works on magnitudes only, so features are invariant to a
//! global phase rotation of the CSI matrix.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;
use thiserror::Error;

use crate::linalg;
use crate::sim::CsiSample;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeatureError {
    #[error("CSI matrix is empty")]
    EmptySample,
    #[error("CSI matrix has {antennas} antennas but the array geometry has {expected}")]
    GeometryMismatch { antennas: usize, expected: usize },
    #[error("cannot normalize sample {0}: zero norm")]
    ZeroNorm(u64),
    #[error("feature dimension mismatch: expected {expected}, found {found} (sample {sample_id})")]
    DimensionMismatch { expected: usize, found: usize, sample_id: u64 },
    #[error("invalid feature configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Transform {
    BeamspaceMagnitude,
    DelayProfile,
    RawSecondMoment,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormMode {
    UnitNorm,
    /// Scale by `‖H‖^(1−β) / ‖H‖` (Frobenius norm of the raw CSI).
    PathlossScaled { beta: f64 },
    Raw,
}

impl NormMode {
    pub(crate) fn code(&self) -> (u64, f64) {
        match *self {
            NormMode::UnitNorm => (0, 0.0),
            NormMode::PathlossScaled { beta } => (1, beta),
            NormMode::Raw => (2, 0.0),
        }
    }

    pub(crate) fn from_code(code: u64, beta: f64) -> Option<Self> {
        match code {
            0 => Some(NormMode::UnitNorm),
            1 => Some(NormMode::PathlossScaled { beta }),
            2 => Some(NormMode::Raw),
            _ => None,
        }
    }
}

impl fmt::Display for Transform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transform::BeamspaceMagnitude => "beamspace-magnitude",
            Transform::DelayProfile => "delay-profile",
            Transform::RawSecondMoment => "raw-second-moment",
        })
    }
}

impl FromStr for Transform {
    type Err = FeatureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "beamspace-magnitude" => Ok(Transform::BeamspaceMagnitude),
            "delay-profile" => Ok(Transform::DelayProfile),
            "raw-second-moment" => Ok(Transform::RawSecondMoment),
            other => Err(FeatureError::InvalidConfig(format!("unknown transform `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub timestamp: f64,
    pub sample_id: u64,
    pub norm_mode: NormMode,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureConfig {
    pub transform: Transform,
    pub normalization: NormMode,
    pub beamspace_oversampling: usize,
    /// Array shape used to fold the antenna axis for the beamspace transform.
    pub array_rows: usize,
    pub array_cols: usize,
}

impl FeatureConfig {
    /// Beamspace magnitude, unit norm, 2× oversampling, for a `rows × cols` array.
    pub fn beamspace(array_rows: usize, array_cols: usize) -> Self {
        Self {
            transform: Transform::BeamspaceMagnitude,
            normalization: NormMode::UnitNorm,
            beamspace_oversampling: 2,
            array_rows,
            array_cols,
        }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.beamspace_oversampling < 1 {
            return Err(FeatureError::InvalidConfig("beamspace_oversampling must be ≥ 1".into()));
        }
        if self.array_rows * self.array_cols < 1 {
            return Err(FeatureError::InvalidConfig("array must have at least one element".into()));
        }
        if let NormMode::PathlossScaled { beta } = self.normalization {
            if !beta.is_finite() {
                return Err(FeatureError::InvalidConfig("pathloss beta must be finite".into()));
            }
        }
        Ok(())
    }

    /// Output dimension for CSI with `num_subcarriers` subcarriers.
    pub fn output_dim(&self, num_subcarriers: usize) -> usize {
        let a = self.array_rows * self.array_cols;
        match self.transform {
            Transform::BeamspaceMagnitude => self.beamspace_oversampling.pow(2) * a,
            Transform::DelayProfile => num_subcarriers,
            Transform::RawSecondMoment => a * (a + 1) / 2,
        }
    }
}

/// Converts one CSI sample into a real feature vector.
pub fn extract_features(sample: &CsiSample, config: &FeatureConfig) -> Result<FeatureVector, FeatureError> {
    let mut planner = FftPlanner::new();
    extract_with_planner(sample, config, &mut planner)
}

/// Batch version of [`extract_features`] sharing FFT plans.
pub fn extract_all(samples: &[CsiSample], config: &FeatureConfig) -> Result<Vec<FeatureVector>, FeatureError> {
    let mut planner = FftPlanner::new();
    samples.iter().map(|s| extract_with_planner(s, config, &mut planner)).collect()
}

fn extract_with_planner(
    sample: &CsiSample,
    config: &FeatureConfig,
    planner: &mut FftPlanner<f64>,
) -> Result<FeatureVector, FeatureError> {
    config.validate()?;
    let h = &sample.matrix;
    if h.is_empty() {
        return Err(FeatureError::EmptySample);
    }
    let mut values = match config.transform {
        Transform::BeamspaceMagnitude => {
            let expected = config.array_rows * config.array_cols;
            if h.nrows() != expected {
                return Err(FeatureError::GeometryMismatch { antennas: h.nrows(), expected });
            }
            beamspace_magnitude(h, config.array_rows, config.array_cols, config.beamspace_oversampling, planner)
        }
        Transform::DelayProfile => delay_profile(h, planner),
        Transform::RawSecondMoment => second_moment(h),
    };
    match config.normalization {
        NormMode::Raw => {}
        NormMode::UnitNorm => {
            let n = l2(&values);
            if n == 0.0 {
                return Err(FeatureError::ZeroNorm(sample.sample_id));
            }
            values.iter_mut().for_each(|v| *v /= n);
        }
        NormMode::PathlossScaled { beta } => {
            let hn = h.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            if hn == 0.0 {
                return Err(FeatureError::ZeroNorm(sample.sample_id));
            }
            let s = hn.powf(1.0 - beta) / hn;
            values.iter_mut().for_each(|v| *v *= s);
        }
    }
    Ok(FeatureVector {
        values,
        timestamp: sample.timestamp,
        sample_id: sample.sample_id,
        norm_mode: config.normalization,
    })
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Zero-padded 2D DFT over (rows, cols) per subcarrier, magnitude, mean over
/// subcarriers. Bin `(u, v)` lands at index `u * (os·cols) + v`.
fn beamspace_magnitude(
    h: &Array2<Complex64>,
    rows: usize,
    cols: usize,
    os: usize,
    planner: &mut FftPlanner<f64>,
) -> Vec<f64> {
    let (nr, nc) = (os * rows, os * cols);
    let fft_r = planner.plan_fft_forward(nr);
    let fft_c = planner.plan_fft_forward(nc);
    let mut acc = vec![0.0; nr * nc];
    let mut grid = vec![Complex64::new(0.0, 0.0); nr * nc];
    let mut column = vec![Complex64::new(0.0, 0.0); nr];
    for k in 0..h.ncols() {
        grid.iter_mut().for_each(|g| *g = Complex64::new(0.0, 0.0));
        for r in 0..rows {
            for c in 0..cols {
                grid[r * nc + c] = h[[r * cols + c, k]];
            }
        }
        for r in 0..rows {
            fft_c.process(&mut grid[r * nc..(r + 1) * nc]);
        }
        for c in 0..nc {
            for r in 0..nr {
                column[r] = grid[r * nc + c];
            }
            fft_r.process(&mut column);
            for r in 0..nr {
                acc[r * nc + c] += column[r].norm();
            }
        }
    }
    let scale = 1.0 / h.ncols() as f64;
    acc.iter_mut().for_each(|v| *v *= scale);
    acc
}

/// Inverse DFT (1/K-normalized) across subcarriers, squared magnitude, mean
/// over antennas.
fn delay_profile(h: &Array2<Complex64>, planner: &mut FftPlanner<f64>) -> Vec<f64> {
    let k = h.ncols();
    let ifft = planner.plan_fft_inverse(k);
    let mut acc = vec![0.0; k];
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let inv_k = 1.0 / k as f64;
    for row in h.rows() {
        buf.iter_mut().zip(row.iter()).for_each(|(b, &v)| *b = v);
        ifft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += (b * inv_k).norm_sqr();
        }
    }
    let inv_a = 1.0 / h.nrows() as f64;
    acc.iter_mut().for_each(|v| *v *= inv_a);
    acc
}

/// Magnitudes of the upper triangle (row-major, diagonal included) of H·Hᴴ/K.
fn second_moment(h: &Array2<Complex64>) -> Vec<f64> {
    let (a, k) = h.dim();
    let mut out = Vec::with_capacity(a * (a + 1) / 2);
    for i in 0..a {
        for j in i..a {
            let s: Complex64 = (0..k).map(|n| h[[i, n]] * h[[j, n]].conj()).sum();
            out.push(s.norm() / k as f64);
        }
    }
    out
}

/// Stacks feature values into an N × F matrix, checking dimensions.
pub fn feature_matrix(features: &[FeatureVector]) -> Result<Array2<f64>, FeatureError> {
    let f = features.first().map_or(0, |v| v.dim());
    let mut m = Array2::zeros((features.len(), f));
    for (i, fv) in features.iter().enumerate() {
        if fv.dim() != f {
            return Err(FeatureError::DimensionMismatch { expected: f, found: fv.dim(), sample_id: fv.sample_id });
        }
        for (j, &v) in fv.values.iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// Pairwise Euclidean distances between feature vectors.
pub fn feature_distance_matrix(features: &[FeatureVector]) -> Result<Array2<f64>, FeatureError> {
    Ok(linalg::euclidean_distances(&feature_matrix(features)?))
}
