//! Dimensionality reduction producing channel charts.
//!
//! Non-parametric baselines live here ([`pca`], [`sammon`], [`laplacian`]
//! over a [`graph::NeighborGraph`]); the parametric triplet network is in
//! [`crate::nn`] and produces the same [`ChannelChart`] type.

pub mod graph;
pub mod laplacian;
pub mod pca;
pub mod sammon;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::features::FeatureError;
use crate::linalg::LinalgError;
use crate::nn::MlpModel;

pub use graph::{build_knn_graph, geodesic_distances, NeighborGraph, WeightMode};
pub use laplacian::{laplacian_eigenmaps_embed, laplacian_matrix};
pub use pca::{pca_embed, pca_fit, PcaProjection};
pub use sammon::{merge_duplicates, sammon_embed, sammon_gradient, sammon_stress, SammonConfig};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DrError {
    #[error("need more samples than latent dimensions (N = {n}, d = {d})")]
    TooFewSamples { n: usize, d: usize },
    #[error("degenerate input: {0}")]
    DegenerateInput(&'static str),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("samples {0} and {1} have zero input distance; merge duplicates or set a distance floor")]
    DuplicateSamples(usize, usize),
    #[error("optimization diverged (non-finite loss) at iteration {0}")]
    Divergence(usize),
    #[error("neighbor graph is disconnected ({0} connected components)")]
    DisconnectedGraph(usize),
    #[error("invalid neighborhood size k = {k} for N = {n}")]
    InvalidK { k: usize, n: usize },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Method {
    Pca,
    Sammon,
    LaplacianEigenmaps,
    TripletNet,
}

impl Method {
    pub(crate) fn code(self) -> u64 {
        match self {
            Method::Pca => 0,
            Method::Sammon => 1,
            Method::LaplacianEigenmaps => 2,
            Method::TripletNet => 3,
        }
    }

    pub(crate) fn from_code(c: u64) -> Option<Self> {
        Some(match c {
            0 => Method::Pca,
            1 => Method::Sammon,
            2 => Method::LaplacianEigenmaps,
            3 => Method::TripletNet,
            _ => return None,
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Pca => "pca",
            Method::Sammon => "sammon",
            Method::LaplacianEigenmaps => "laplacian-eigenmaps",
            Method::TripletNet => "triplet-net",
        })
    }
}

impl FromStr for Method {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pca" => Ok(Method::Pca),
            "sammon" => Ok(Method::Sammon),
            "laplacian-eigenmaps" | "laplacian" => Ok(Method::LaplacianEigenmaps),
            "triplet-net" | "triplet" => Ok(Method::TripletNet),
            other => Err(format!("unknown method `{other}`")),
        }
    }
}

/// Seed, hyperparameters and optimization trace of a chart.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingMeta {
    pub seed: u64,
    pub hyperparameters: Vec<(String, f64)>,
    pub loss_trace: Vec<f64>,
    /// Spectral methods: eigenvalues of the retained coordinates.
    pub eigenvalues: Vec<f64>,
}

impl TrainingMeta {
    pub fn hyperparameter(&self, name: &str) -> Option<f64> {
        self.hyperparameters.iter().find(|(k, _)| k == name).map(|&(_, v)| v)
    }
}

/// Pseudo-positions of every sample in a `d`-dimensional latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelChart {
    /// N × d.
    pub coordinates: Array2<f64>,
    pub sample_ids: Vec<u64>,
    pub method: Method,
    /// Present for parametric charts only.
    pub model: Option<MlpModel>,
    pub meta: TrainingMeta,
}

impl ChannelChart {
    pub fn new(coordinates: Array2<f64>, sample_ids: Vec<u64>, method: Method, meta: TrainingMeta) -> Result<Self, DrError> {
        let chart = Self { coordinates, sample_ids, method, model: None, meta };
        chart.validate()?;
        Ok(chart)
    }

    pub fn validate(&self) -> Result<(), DrError> {
        let (n, d) = self.coordinates.dim();
        if n < 1 || d < 1 {
            return Err(DrError::InvalidInput(format!("chart must be non-empty, got {n}×{d}")));
        }
        if self.sample_ids.len() != n {
            return Err(DrError::InvalidInput(format!("{} sample ids for {n} chart rows", self.sample_ids.len())));
        }
        if self.coordinates.iter().any(|v| !v.is_finite()) {
            return Err(DrError::InvalidInput("chart coordinates must be finite".into()));
        }
        let mut ids = self.sample_ids.clone();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(DrError::InvalidInput("chart sample ids must be unique".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.coordinates.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.coordinates.nrows() == 0
    }

    pub fn latent_dim(&self) -> usize {
        self.coordinates.ncols()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.coordinates.row(i)
    }

    pub fn with_sample_ids(mut self, ids: Vec<u64>) -> Result<Self, DrError> {
        self.sample_ids = ids;
        self.validate()?;
        Ok(self)
    }
}

pub(crate) fn check_square(m: &Array2<f64>) -> Result<usize, DrError> {
    let (r, c) = m.dim();
    if r != c {
        return Err(DrError::InvalidInput(format!("distance matrix must be square, got {r}×{c}")));
    }
    Ok(r)
}
