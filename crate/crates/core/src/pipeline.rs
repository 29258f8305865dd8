//! End-to-end orchestration: presets, config files, and the stages
//! simulate → features → chart → evaluate → apps.
//!
//! Every stage exists twice: as an in-memory function (used by tests and the
//! browser demo) and as a file stage that reads its inputs from, and writes
//! its outputs to, an output directory. All randomness derives from
//! [`PipelineConfig::seed`].

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use thiserror::Error;

use crate::apps::{
    cell_association, default_thresholds, map_out_of_sample, proximity_roc, smooth_positions, AppError,
    CellAssociation, CellLayout, RocCurve,
};
use crate::config::{ConfigError, ConfigFile, Entry};
use crate::dr::{
    build_knn_graph, geodesic_distances, laplacian_eigenmaps_embed, pca_embed, sammon_embed, ChannelChart, DrError,
    Method, SammonConfig, WeightMode,
};
use crate::features::{extract_all, feature_distance_matrix, FeatureConfig, FeatureError, FeatureVector, NormMode};
use crate::io::{self, CsiDataset, IoError};
use crate::metrics::{evaluate, MetricsError, MetricsReport};
use crate::nn::{
    chart_from_model, train, Activation, AnchorSet, ModelConfig, NnError, Optimizer, TrainConfig,
    TripletMiningConfig,
};
use crate::sim::{
    generate_dataset, generate_dataset_from, make_loop_trajectory, street_walk_trajectory, Rect, Scatterer, Scenario,
    SimError, Trajectory,
};
use crate::spiral::{generate_spiral, SpiralConfig};
use crate::Point2;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("simulation: {0}")]
    Sim(#[from] SimError),
    #[error("features: {0}")]
    Feature(#[from] FeatureError),
    #[error("reduction: {0}")]
    Dr(#[from] DrError),
    #[error("training: {0}")]
    Nn(#[from] NnError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("application: {0}")]
    App(#[from] AppError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: IoError },
    #[error("missing input {0}; run the producing stage first")]
    MissingInput(PathBuf),
    #[error("{0}")]
    Invalid(String),
}

impl PipelineError {
    /// Stable machine-readable category.
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Sim(_) => "simulation",
            PipelineError::Feature(_) => "features",
            PipelineError::Dr(_) => "reduction",
            PipelineError::Nn(_) => "training",
            PipelineError::Metrics(_) => "metrics",
            PipelineError::App(_) => "application",
            PipelineError::Io { .. } => "io",
            PipelineError::MissingInput(_) => "missing-input",
            PipelineError::Invalid(_) => "invalid-argument",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    Spiral,
    Urban8x4,
    Loop,
    SevenCells,
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Spiral => "spiral",
            Preset::Urban8x4 => "urban-8x4",
            Preset::Loop => "loop",
            Preset::SevenCells => "seven-cells",
        })
    }
}

impl FromStr for Preset {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "spiral" => Ok(Preset::Spiral),
            "urban-8x4" => Ok(Preset::Urban8x4),
            "loop" => Ok(Preset::Loop),
            "seven-cells" => Ok(Preset::SevenCells),
            _ => Err(format!("unknown preset {s:?} (spiral, urban-8x4, loop, seven-cells)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AppKind {
    Cells,
    Proximity,
}

impl fmt::Display for AppKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AppKind::Cells => "cells",
            AppKind::Proximity => "proximity",
        })
    }
}

impl FromStr for AppKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cells" => Ok(AppKind::Cells),
            "proximity" => Ok(AppKind::Proximity),
            _ => Err(format!("unknown app {s:?} (cells, proximity)")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TrajectorySpec {
    /// Random walk on a street grid, see [`street_walk_trajectory`].
    StreetWalk { street_spacing: f64, duration: f64, speed: f64, sample_rate: f64 },
    /// Repeated laps of an ellipse, see [`make_loop_trajectory`].
    Loop { center: Point2, radii: Point2, laps: usize, speed: f64, sample_rate: f64 },
    Polyline { points: Vec<Point2>, speed: f64, sample_rate: f64 },
}

impl TrajectorySpec {
    pub fn build(&self, area: Rect, seed: u64) -> Result<Trajectory, SimError> {
        match self {
            TrajectorySpec::StreetWalk { street_spacing, duration, speed, sample_rate } => {
                street_walk_trajectory(area, *street_spacing, *duration, *speed, *sample_rate, seed)
            }
            TrajectorySpec::Loop { center, radii, laps, speed, sample_rate } => {
                make_loop_trajectory(*center, *radii, *laps, *speed, *sample_rate)
            }
            TrajectorySpec::Polyline { points, speed, sample_rate } => {
                Trajectory::from_polyline(points, *speed, *sample_rate)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartConfig {
    pub method: Method,
    pub latent_dim: usize,
    /// k of the neighbor graph (Laplacian eigenmaps, geodesic Sammon).
    pub neighbors: usize,
    pub weight: WeightMode,
    /// Run Sammon on k-NN graph geodesics instead of raw feature distances.
    pub geodesic: bool,
    pub sammon: SammonConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub mining: TripletMiningConfig,
    /// Semi-supervised anchors: one known position every this many seconds.
    pub anchor_interval: Option<f64>,
    pub anchor_weight: f64,
}

impl Default for ChartConfig {
    fn default() -> Self {
        Self {
            method: Method::TripletNet,
            latent_dim: 2,
            neighbors: 10,
            weight: WeightMode::Gaussian { sigma: None },
            geodesic: false,
            sammon: SammonConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            mining: TripletMiningConfig::default(),
            anchor_interval: None,
            anchor_weight: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AppConfig {
    /// Applications run by the `pipeline` command.
    pub run: Vec<AppKind>,
    pub vote_k: usize,
    /// Leading share (by time) of the dataset used as labeled reference.
    pub train_fraction: f64,
    pub cells: CellLayout,
    /// k of the inverse-distance out-of-sample map for non-parametric charts.
    pub oos_k: usize,
    pub smoothing_window: f64,
    pub truth_radius: f64,
    pub thresholds: usize,
    pub test_users: usize,
    pub test_duration: f64,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            run: Vec::new(),
            vote_k: 5,
            train_fraction: 0.8,
            cells: CellLayout::hexagonal([100.0, 100.0], 70.0),
            oos_k: 5,
            smoothing_window: 5.0,
            truth_radius: 10.0,
            thresholds: 200,
            test_users: 2,
            test_duration: 300.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub seed: u64,
    pub scenario: Scenario,
    pub trajectory: TrajectorySpec,
    pub features: FeatureConfig,
    pub chart: ChartConfig,
    /// `None` uses the default ⌈1%·N⌉, ⌈5%·N⌉.
    pub k_list: Option<Vec<usize>>,
    pub apps: AppConfig,
    pub spiral: SpiralConfig,
}

impl PipelineConfig {
    pub fn preset(preset: Preset, seed: u64) -> Self {
        let scenario = Scenario::urban_8x4(seed);
        let features = FeatureConfig::beamspace(scenario.array_rows, scenario.array_cols);
        let walk = TrajectorySpec::StreetWalk { street_spacing: 50.0, duration: 2000.0, speed: 1.0, sample_rate: 1.0 };
        let mut chart = ChartConfig::default();
        chart.mining.t_close = 5.0;
        let mut cfg = Self {
            preset,
            seed,
            scenario,
            trajectory: walk,
            features,
            chart,
            k_list: None,
            apps: AppConfig::default(),
            spiral: SpiralConfig::default(),
        };
        match preset {
            Preset::Urban8x4 => cfg.apps.run = vec![AppKind::Proximity],
            Preset::SevenCells => cfg.apps.run = vec![AppKind::Cells],
            Preset::Loop => {
                cfg.trajectory = TrajectorySpec::Loop {
                    center: [100.0, 100.0],
                    radii: [60.0, 40.0],
                    laps: 3,
                    speed: 1.0,
                    sample_rate: 1.0,
                };
            }
            Preset::Spiral => {
                cfg.chart.method = Method::LaplacianEigenmaps;
                cfg.chart.latent_dim = 1;
                cfg.chart.neighbors = 15;
                cfg.chart.geodesic = true;
            }
        }
        cfg.sync();
        cfg
    }

    /// Propagates the global seed and shared dimensions into sub-configs.
    fn sync(&mut self) {
        self.spiral.seed = self.seed;
        self.chart.sammon.seed = self.seed;
        self.chart.sammon.dim = self.chart.latent_dim;
        self.chart.model.latent_dim = self.chart.latent_dim;
        self.chart.train.seed = self.seed;
        self.features.array_rows = self.scenario.array_rows;
        self.features.array_cols = self.scenario.array_cols;
    }

    /// Builds a configuration from a config file. `preset` and `seed`
    /// override the file's `[pipeline]` section when given.
    pub fn from_config(file: &ConfigFile, preset: Option<Preset>, seed: Option<u64>) -> Result<Self, ConfigError> {
        file.check(SCHEMA, REPEATABLE)?;
        let get = |key: &'static str| file.section("pipeline").find(move |e| e.key == key);
        let preset = match (preset, get("preset")) {
            (Some(p), _) => p,
            (None, Some(e)) => e.value.parse().map_err(|m: String| ConfigError::new(e.line, m))?,
            (None, None) => Preset::Urban8x4,
        };
        let seed = match (seed, get("seed")) {
            (Some(s), _) => s,
            (None, Some(e)) => e.parse()?,
            (None, None) => 0,
        };
        let mut cfg = Self::preset(preset, seed);
        apply_scenario(&mut cfg, file)?;
        apply_trajectory(&mut cfg, file)?;
        apply_features(&mut cfg, file)?;
        apply_chart(&mut cfg, file)?;
        apply_apps(&mut cfg, file)?;
        for e in file.section("metrics") {
            cfg.k_list = Some(e.usize_list()?);
        }
        for e in file.section("spiral") {
            match e.key.as_str() {
                "samples" => cfg.spiral.samples = e.parse()?,
                "radius" => cfg.spiral.radius = e.f64()?,
                "theta_min" => cfg.spiral.theta_min = e.f64()?,
                "theta_max" => cfg.spiral.theta_max = e.f64()?,
                _ => cfg.spiral.noise_fraction = e.f64()?,
            }
        }
        cfg.sync();
        Ok(cfg)
    }

    pub fn from_config_text(text: &str, preset: Option<Preset>, seed: Option<u64>) -> Result<Self, ConfigError> {
        Self::from_config(&ConfigFile::parse(text)?, preset, seed)
    }

    pub fn set_method(&mut self, method: Method) {
        self.chart.method = method;
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("pipeline", &["preset", "seed"]),
    (
        "scenario",
        &[
            "carrier_frequency",
            "bandwidth",
            "num_subcarriers",
            "array_rows",
            "array_cols",
            "element_spacing",
            "bs_position",
            "area",
            "num_scatterers",
            "scatterer",
            "pathloss_exponent",
            "noise_std",
            "blockage",
        ],
    ),
    (
        "trajectory",
        &["kind", "street_spacing", "duration", "speed", "sample_rate", "center", "radii", "laps", "waypoint"],
    ),
    ("features", &["transform", "normalization", "beta", "oversampling"]),
    (
        "chart",
        &[
            "method",
            "latent_dim",
            "neighbors",
            "weight",
            "sigma",
            "geodesic",
            "sammon_iters",
            "sammon_step",
            "distance_floor",
            "hidden",
            "activation",
            "epochs",
            "lr",
            "batch_size",
            "optimizer",
            "momentum",
            "decay_every",
            "decay_factor",
            "t_close",
            "t_far",
            "triplets_per_epoch",
            "margin",
            "anchor_interval",
            "anchor_weight",
        ],
    ),
    ("metrics", &["k_list"]),
    (
        "apps",
        &[
            "run",
            "vote_k",
            "train_fraction",
            "cell",
            "cell_spacing",
            "oos_k",
            "smoothing_window",
            "truth_radius",
            "thresholds",
            "test_users",
            "test_duration",
        ],
    ),
    ("spiral", &["samples", "radius", "theta_min", "theta_max", "noise_fraction"]),
];

const REPEATABLE: &[&str] = &["scatterer", "blockage", "waypoint", "cell"];

fn point2(e: &Entry) -> Result<Point2, ConfigError> {
    let v = e.f64_list(Some(2))?;
    Ok([v[0], v[1]])
}

fn apply_scenario(cfg: &mut PipelineConfig, file: &ConfigFile) -> Result<(), ConfigError> {
    let s = &mut cfg.scenario;
    let mut scatterers: Vec<Scatterer> = Vec::new();
    let mut blockages: Vec<Rect> = Vec::new();
    let mut last_line = 0;
    for e in file.section("scenario") {
        last_line = e.line;
        match e.key.as_str() {
            "carrier_frequency" => s.carrier_frequency = e.f64()?,
            "bandwidth" => s.bandwidth = e.f64()?,
            "num_subcarriers" => s.num_subcarriers = e.parse()?,
            "array_rows" => s.array_rows = e.parse()?,
            "array_cols" => s.array_cols = e.parse()?,
            "element_spacing" => s.element_spacing = e.f64()?,
            "bs_position" => {
                let v = e.f64_list(Some(3))?;
                s.bs_position = [v[0], v[1], v[2]];
            }
            "area" => {
                let v = e.f64_list(Some(4))?;
                s.coverage_area = Rect::new([v[0], v[1]], [v[2], v[3]]);
            }
            "num_scatterers" => {
                let n: usize = e.parse()?;
                s.scatterers = crate::sim::seeded_scatterers(cfg.seed, s.coverage_area, n);
            }
            "scatterer" => {
                let v = e.f64_list(Some(5))?;
                scatterers.push(Scatterer {
                    position: [v[0], v[1], v[2]],
                    gain: num_complex::Complex64::new(v[3], v[4]),
                });
            }
            "pathloss_exponent" => s.pathloss_exponent = e.f64()?,
            "noise_std" => s.noise_std = e.f64()?,
            _ => {
                let v = e.f64_list(Some(4))?;
                blockages.push(Rect::new([v[0], v[1]], [v[2], v[3]]));
            }
        }
    }
    if !scatterers.is_empty() {
        s.scatterers = scatterers;
    }
    if !blockages.is_empty() {
        s.los_blockage_regions = blockages;
    }
    s.validate().map_err(|err| ConfigError::new(last_line, err.to_string()))
}

fn apply_trajectory(cfg: &mut PipelineConfig, file: &ConfigFile) -> Result<(), ConfigError> {
    let entries: Vec<&Entry> = file.section("trajectory").collect();
    if entries.is_empty() {
        return Ok(());
    }
    let find = |k: &str| entries.iter().find(|e| e.key == k).copied();
    let kind = match find("kind") {
        Some(e) => e.value.clone(),
        None => match cfg.trajectory {
            TrajectorySpec::StreetWalk { .. } => "street-walk".into(),
            TrajectorySpec::Loop { .. } => "loop".into(),
            TrajectorySpec::Polyline { .. } => "polyline".into(),
        },
    };
    let f = |k: &str, d: f64| find(k).map_or(Ok(d), |e| e.f64());
    let (speed, rate) = (f("speed", 1.0)?, f("sample_rate", 1.0)?);
    cfg.trajectory = match kind.as_str() {
        "street-walk" => TrajectorySpec::StreetWalk {
            street_spacing: f("street_spacing", 40.0)?,
            duration: f("duration", 2000.0)?,
            speed,
            sample_rate: rate,
        },
        "loop" => TrajectorySpec::Loop {
            center: find("center").map_or(Ok([100.0, 100.0]), point2)?,
            radii: find("radii").map_or(Ok([60.0, 40.0]), point2)?,
            laps: find("laps").map_or(Ok(3), |e| e.parse())?,
            speed,
            sample_rate: rate,
        },
        "polyline" => TrajectorySpec::Polyline {
            points: entries.iter().filter(|e| e.key == "waypoint").map(|e| point2(e)).collect::<Result<_, _>>()?,
            speed,
            sample_rate: rate,
        },
        other => {
            let line = find("kind").map_or(0, |e| e.line);
            return Err(ConfigError::new(line, format!("unknown trajectory kind {other:?} (street-walk, loop, polyline)")));
        }
    };
    Ok(())
}

fn apply_features(cfg: &mut PipelineConfig, file: &ConfigFile) -> Result<(), ConfigError> {
    let mut beta = 1.0;
    let mut pathloss = false;
    for e in file.section("features") {
        match e.key.as_str() {
            "transform" => {
                cfg.features.transform =
                    e.value.parse().map_err(|m: FeatureError| ConfigError::new(e.line, m.to_string()))?
            }
            "normalization" => match e.value.as_str() {
                "unit-norm" => cfg.features.normalization = NormMode::UnitNorm,
                "raw" => cfg.features.normalization = NormMode::Raw,
                "pathloss-scaled" => pathloss = true,
                v => return Err(ConfigError::new(e.line, format!("unknown normalization {v:?}"))),
            },
            "beta" => beta = e.f64()?,
            _ => cfg.features.beamspace_oversampling = e.parse()?,
        }
    }
    if pathloss {
        cfg.features.normalization = NormMode::PathlossScaled { beta };
    }
    Ok(())
}

fn apply_chart(cfg: &mut PipelineConfig, file: &ConfigFile) -> Result<(), ConfigError> {
    let c = &mut cfg.chart;
    let mut sigma = None;
    let mut gaussian = matches!(c.weight, WeightMode::Gaussian { .. });
    let mut momentum = 0.9;
    let mut adam = matches!(c.train.optimizer, Optimizer::Adam { .. });
    for e in file.section("chart") {
        match e.key.as_str() {
            "method" => c.method = e.value.parse().map_err(|m: String| ConfigError::new(e.line, m))?,
            "latent_dim" => c.latent_dim = e.parse()?,
            "neighbors" => c.neighbors = e.parse()?,
            "weight" => match e.value.as_str() {
                "binary" => gaussian = false,
                "gaussian" => gaussian = true,
                v => return Err(ConfigError::new(e.line, format!("unknown weight mode {v:?}"))),
            },
            "sigma" => sigma = Some(e.f64()?),
            "geodesic" => c.geodesic = e.bool()?,
            "sammon_iters" => c.sammon.iters = e.parse()?,
            "sammon_step" => c.sammon.lr = e.f64()?,
            "distance_floor" => c.sammon.distance_floor = Some(e.f64()?),
            "hidden" => c.model.hidden = e.usize_list()?,
            "activation" => {
                c.model.activation = e.value.parse::<Activation>().map_err(|m| ConfigError::new(e.line, m))?
            }
            "epochs" => c.train.epochs = e.parse()?,
            "lr" => c.train.lr = e.f64()?,
            "batch_size" => c.train.batch_size = e.parse()?,
            "optimizer" => match e.value.as_str() {
                "sgd" => adam = false,
                "adam" => adam = true,
                v => return Err(ConfigError::new(e.line, format!("unknown optimizer {v:?} (sgd, adam)"))),
            },
            "momentum" => momentum = e.f64()?,
            "decay_every" => c.train.decay_every = e.parse()?,
            "decay_factor" => c.train.decay_factor = e.f64()?,
            "t_close" => c.mining.t_close = e.f64()?,
            "t_far" => c.mining.t_far = e.f64()?,
            "triplets_per_epoch" => c.mining.triplets_per_epoch = e.parse()?,
            "margin" => c.mining.margin = e.f64()?,
            "anchor_interval" => c.anchor_interval = Some(e.f64()?),
            _ => c.anchor_weight = e.f64()?,
        }
    }
    c.weight = if gaussian { WeightMode::Gaussian { sigma } } else { WeightMode::Binary };
    c.train.optimizer = if adam { Optimizer::adam() } else { Optimizer::SgdMomentum { momentum } };
    Ok(())
}

fn apply_apps(cfg: &mut PipelineConfig, file: &ConfigFile) -> Result<(), ConfigError> {
    let a = &mut cfg.apps;
    let mut cells = Vec::new();
    let mut cells_line = 0;
    for e in file.section("apps") {
        match e.key.as_str() {
            "run" => {
                a.run = e
                    .value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse().map_err(|m: String| ConfigError::new(e.line, m)))
                    .collect::<Result<_, _>>()?
            }
            "vote_k" => a.vote_k = e.parse()?,
            "train_fraction" => a.train_fraction = e.f64()?,
            "cell" => {
                cells.push(point2(e)?);
                cells_line = e.line;
            }
            "cell_spacing" => {
                let area = cfg.scenario.coverage_area;
                let c = [(area.min[0] + area.max[0]) / 2.0, (area.min[1] + area.max[1]) / 2.0];
                a.cells = CellLayout::hexagonal(c, e.f64()?);
            }
            "oos_k" => a.oos_k = e.parse()?,
            "smoothing_window" => a.smoothing_window = e.f64()?,
            "truth_radius" => a.truth_radius = e.f64()?,
            "thresholds" => a.thresholds = e.parse()?,
            "test_users" => a.test_users = e.parse()?,
            _ => a.test_duration = e.f64()?,
        }
    }
    if !cells.is_empty() {
        a.cells = CellLayout::new(cells).map_err(|err| ConfigError::new(cells_line, err.to_string()))?;
    }
    Ok(())
}

/// Ground-truth coordinates per sample id.
#[derive(Clone, Debug, PartialEq)]
pub struct Truth {
    pub ids: Vec<u64>,
    pub coords: Array2<f64>,
}

impl Truth {
    pub fn from_samples(samples: &[crate::CsiSample]) -> Self {
        let ids = samples.iter().map(|s| s.sample_id).collect();
        let coords = Array2::from_shape_fn((samples.len(), 2), |(i, j)| {
            samples[i].true_position.map_or(f64::NAN, |p| p[j])
        });
        Self { ids, coords }
    }

    pub fn to_map(&self) -> HashMap<u64, Vec<f64>> {
        self.ids.iter().zip(self.coords.rows()).map(|(&id, r)| (id, r.to_vec())).collect()
    }

    fn position(&self, map: &HashMap<u64, usize>, id: u64) -> Result<Point2, PipelineError> {
        let &r = map.get(&id).ok_or_else(|| PipelineError::Invalid(format!("no ground truth for sample {id}")))?;
        if self.coords.ncols() != 2 {
            return Err(PipelineError::Invalid("this application needs 2D ground-truth positions".into()));
        }
        Ok([self.coords[[r, 0]], self.coords[[r, 1]]])
    }

    fn index(&self) -> HashMap<u64, usize> {
        self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect()
    }
}

/// Output of the simulation stage.
#[derive(Clone, Debug)]
pub enum Simulated {
    Csi(CsiDataset),
    /// The spiral preset produces features directly.
    Features(Vec<FeatureVector>),
}

pub fn simulate(cfg: &PipelineConfig) -> Result<(Simulated, Truth), PipelineError> {
    if cfg.preset == Preset::Spiral {
        let sp = generate_spiral(&cfg.spiral);
        let ids = sp.features.iter().map(|f| f.sample_id).collect();
        let coords = Array2::from_shape_vec((sp.arc_length.len(), 1), sp.arc_length).expect("one column");
        return Ok((Simulated::Features(sp.features), Truth { ids, coords }));
    }
    let traj = cfg.trajectory.build(cfg.scenario.coverage_area, cfg.seed)?;
    let samples = generate_dataset(&cfg.scenario, &traj)?;
    let truth = Truth::from_samples(&samples);
    let ds = CsiDataset { array_rows: cfg.scenario.array_rows, array_cols: cfg.scenario.array_cols, samples };
    Ok((Simulated::Csi(ds), truth))
}

pub fn compute_features(cfg: &PipelineConfig, dataset: &CsiDataset) -> Result<Vec<FeatureVector>, PipelineError> {
    let mut fc = cfg.features.clone();
    fc.array_rows = dataset.array_rows;
    fc.array_cols = dataset.array_cols;
    Ok(extract_all(&dataset.samples, &fc)?)
}

/// Fits the configured reduction. `truth` is only consulted for anchors.
pub fn compute_chart(
    cfg: &ChartConfig,
    features: &[FeatureVector],
    truth: Option<&Truth>,
) -> Result<ChannelChart, PipelineError> {
    let ids: Vec<u64> = features.iter().map(|f| f.sample_id).collect();
    let d = cfg.latent_dim;
    let graph_dist = || -> Result<Array2<f64>, PipelineError> { Ok(feature_distance_matrix(features)?) };
    let chart = match cfg.method {
        Method::Pca => pca_embed(features, d)?,
        Method::Sammon => {
            let mut delta = graph_dist()?;
            if cfg.geodesic {
                delta = geodesic_distances(&build_knn_graph(&delta, cfg.neighbors, WeightMode::Binary)?)?;
            }
            let sc = SammonConfig { dim: d, ..cfg.sammon.clone() };
            sammon_embed(&delta, &sc)?.with_sample_ids(ids)?
        }
        Method::LaplacianEigenmaps => {
            let g = build_knn_graph(&graph_dist()?, cfg.neighbors, cfg.weight)?;
            laplacian_eigenmaps_embed(&g, d)?.with_sample_ids(ids)?
        }
        Method::TripletNet => {
            let anchors = match (cfg.anchor_interval, truth) {
                (Some(interval), Some(t)) => {
                    let index = t.index();
                    let mut rows = features
                        .iter()
                        .map(|f| Ok((f.sample_id, f.timestamp, t.position(&index, f.sample_id)?)))
                        .collect::<Result<Vec<_>, PipelineError>>()?;
                    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
                    Some(AnchorSet::every(&rows, interval, cfg.anchor_weight)?)
                }
                (Some(_), None) => return Err(PipelineError::Invalid("anchors need ground-truth positions".into())),
                _ => None,
            };
            let model = ModelConfig { latent_dim: d, ..cfg.model.clone() };
            let out = train(features, &model, &cfg.mining, anchors.as_ref(), &cfg.train)?;
            for (epoch, l) in out.loss_trace.iter().enumerate() {
                log::info!("epoch {epoch}: loss {l:.6}");
            }
            let mut chart = chart_from_model(&out.model, features)?;
            chart.meta.loss_trace = out.loss_trace;
            chart.meta.hyperparameters = vec![
                ("epochs".into(), cfg.train.epochs as f64),
                ("lr".into(), cfg.train.lr),
                ("batch_size".into(), cfg.train.batch_size as f64),
                ("t_close".into(), cfg.mining.t_close),
                ("t_far".into(), cfg.mining.t_far),
                ("triplets_per_epoch".into(), cfg.mining.triplets_per_epoch as f64),
                ("margin".into(), cfg.mining.margin),
                ("anchors".into(), anchors.as_ref().map_or(0.0, |a| a.anchors.len() as f64)),
                ("anchor_weight".into(), anchors.as_ref().map_or(0.0, |a| a.weight)),
            ];
            chart
        }
    };
    Ok(chart)
}

pub fn evaluate_chart(
    chart: &ChannelChart,
    truth: &Truth,
    k_list: Option<&[usize]>,
) -> Result<MetricsReport, PipelineError> {
    Ok(evaluate(chart, &truth.to_map(), k_list)?)
}

fn features_by_id(features: &[FeatureVector]) -> HashMap<u64, &FeatureVector> {
    features.iter().map(|f| (f.sample_id, f)).collect()
}

/// Restricts `chart` to the given sample ids (in that order).
fn sub_chart(chart: &ChannelChart, ids: &[u64]) -> Result<ChannelChart, PipelineError> {
    let row: HashMap<u64, usize> = chart.sample_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let mut coords = Array2::zeros((ids.len(), chart.latent_dim()));
    for (i, id) in ids.iter().enumerate() {
        let &r = row.get(id).ok_or_else(|| PipelineError::Invalid(format!("sample {id} is not in the chart")))?;
        coords.row_mut(i).assign(&chart.point(r));
    }
    let mut sub = ChannelChart::new(coords, ids.to_vec(), chart.method, chart.meta.clone())?;
    sub.model = chart.model.clone();
    Ok(sub)
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub association: CellAssociation,
    pub adjacency: Vec<Vec<bool>>,
    /// Share of errors on geometrically adjacent cells (`None` without errors).
    pub adjacent_error_fraction: Option<f64>,
    pub train_count: usize,
}

/// Cell association: the first `train_fraction` of samples (by time) are the
/// labeled reference, the rest are mapped into the chart out of sample and
/// classified by k-NN vote.
pub fn cell_experiment(
    cfg: &AppConfig,
    area: Rect,
    chart: &ChannelChart,
    features: &[FeatureVector],
    truth: &Truth,
) -> Result<CellOutcome, PipelineError> {
    if !(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0) {
        return Err(PipelineError::Invalid("train_fraction must lie in (0, 1)".into()));
    }
    let mut order: Vec<&FeatureVector> = features.iter().collect();
    order.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp).then(a.sample_id.cmp(&b.sample_id)));
    let n_train = ((order.len() as f64) * cfg.train_fraction).floor() as usize;
    if n_train == 0 || n_train == order.len() {
        return Err(PipelineError::Invalid("train/test split leaves an empty side".into()));
    }
    let (train_f, test_f): (Vec<FeatureVector>, Vec<FeatureVector>) = (
        order[..n_train].iter().map(|f| (*f).clone()).collect(),
        order[n_train..].iter().map(|f| (*f).clone()).collect(),
    );
    let train_ids: Vec<u64> = train_f.iter().map(|f| f.sample_id).collect();
    let reference = sub_chart(chart, &train_ids)?;
    let index = truth.index();
    let label = |id| truth.position(&index, id).map(|p| cfg.cells.label(p));
    let train_labels = train_ids.iter().map(|&id| label(id).map(Some)).collect::<Result<Vec<_>, _>>()?;
    let test_truth = test_f.iter().map(|f| label(f.sample_id)).collect::<Result<Vec<_>, _>>()?;
    let test_points = map_out_of_sample(&reference, &train_f, &test_f, cfg.oos_k)?;
    let association =
        cell_association(&reference, &train_labels, &test_points, &test_truth, cfg.cells.len(), cfg.vote_k)?;
    let adjacency = cfg.cells.adjacency(area, 0.5);
    let adjacent_error_fraction = association.adjacent_error_fraction(&adjacency);
    Ok(CellOutcome { association, adjacency, adjacent_error_fraction, train_count: n_train })
}

/// Proximity detection between freshly simulated test users: each user walks
/// the street grid, their CSI is mapped into `chart`, smoothed over a
/// trailing window, and all pairs of test samples are scored.
pub fn proximity_experiment(
    cfg: &PipelineConfig,
    chart: &ChannelChart,
    training: &[FeatureVector],
) -> Result<RocCurve, PipelineError> {
    if cfg.preset == Preset::Spiral {
        return Err(PipelineError::Invalid("proximity needs a simulated radio scenario".into()));
    }
    let a = &cfg.apps;
    if a.test_users < 1 {
        return Err(PipelineError::Invalid("need at least one test user".into()));
    }
    let ordered: Vec<FeatureVector> = {
        let by_id = features_by_id(training);
        chart
            .sample_ids
            .iter()
            .map(|id| by_id.get(id).map(|f| (*f).clone()))
            .collect::<Option<_>>()
            .ok_or_else(|| PipelineError::Invalid("features do not cover every chart sample".into()))?
    };
    let mut points: Vec<Array2<f64>> = Vec::new();
    let mut truth: Vec<Point2> = Vec::new();
    for u in 0..a.test_users {
        let spacing = match cfg.trajectory {
            TrajectorySpec::StreetWalk { street_spacing, .. } => street_spacing,
            _ => 40.0,
        };
        let seed = cfg.seed.wrapping_add(0x7e57_0000 + u as u64);
        let traj = street_walk_trajectory(cfg.scenario.coverage_area, spacing, a.test_duration, 1.0, 1.0, seed)?;
        let samples = generate_dataset_from(&cfg.scenario, &traj, (u as u64 + 1) << 32)?;
        let ds = CsiDataset { array_rows: cfg.scenario.array_rows, array_cols: cfg.scenario.array_cols, samples };
        let feats = compute_features(cfg, &ds)?;
        let mapped = map_out_of_sample(chart, &ordered, &feats, a.oos_k)?;
        let ts: Vec<f64> = feats.iter().map(|f| f.timestamp).collect();
        points.push(smooth_positions(&mapped, &ts, a.smoothing_window)?);
        truth.extend(ds.samples.iter().map(|s| s.true_position.expect("simulated samples carry positions")));
    }
    let views: Vec<_> = points.iter().map(|p| p.view()).collect();
    let all = ndarray::concatenate(ndarray::Axis(0), &views).map_err(|e| PipelineError::Invalid(e.to_string()))?;
    let thresholds = default_thresholds(&all, a.thresholds);
    Ok(proximity_roc(&all, &truth, a.truth_radius, &thresholds)?)
}

/// File names used inside an output directory.
pub mod files {
    pub const DATASET: &str = "dataset.bin";
    pub const TRUTH: &str = "truth.csv";
    pub const FEATURES: &str = "features.bin";
    pub const CHART: &str = "chart.bin";
    pub const CHART_CSV: &str = "chart.csv";
    pub const MODEL: &str = "model.bin";
    pub const REPORT: &str = "report.bin";
    pub const REPORT_CSV: &str = "report.csv";
    pub const REPORT_TXT: &str = "report.txt";
    pub const CONFUSION_CSV: &str = "cells_confusion.csv";
    pub const CELLS_TXT: &str = "cells.txt";
    pub const ROC_CSV: &str = "roc.csv";
    pub const PROXIMITY_TXT: &str = "proximity.txt";
}

fn io_err(path: &Path) -> impl FnOnce(IoError) -> PipelineError + '_ {
    move |source| PipelineError::Io { path: path.to_path_buf(), source }
}

fn input(out: &Path, name: &str) -> Result<PathBuf, PipelineError> {
    let p = out.join(name);
    if p.is_file() {
        Ok(p)
    } else {
        Err(PipelineError::MissingInput(p))
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::write(path, text).map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e.into() })
}

fn read_text(path: &Path) -> Result<String, PipelineError> {
    fs::read_to_string(path).map_err(|e| PipelineError::Io { path: path.to_path_buf(), source: e.into() })
}

fn load_truth(out: &Path) -> Result<Truth, PipelineError> {
    let p = input(out, files::TRUTH)?;
    let (ids, coords) = io::parse_truth_csv(&read_text(&p)?).map_err(io_err(&p))?;
    Ok(Truth { ids, coords })
}

fn load_features(out: &Path) -> Result<Vec<FeatureVector>, PipelineError> {
    let p = input(out, files::FEATURES)?;
    io::read_features(&p).map_err(io_err(&p))
}

/// Loads the chart and, for parametric charts, its network.
pub fn load_chart(out: &Path) -> Result<ChannelChart, PipelineError> {
    let p = input(out, files::CHART)?;
    let mut chart = io::read_chart(&p).map_err(io_err(&p))?;
    if chart.method == Method::TripletNet {
        let m = input(out, files::MODEL)?;
        chart.model = Some(io::read_model(&m).map_err(io_err(&m))?);
    }
    Ok(chart)
}

/// Simulates and writes `dataset.bin` (or `features.bin` for the spiral)
/// plus `truth.csv`. Returns a one-line summary.
pub fn stage_simulate(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let (sim, truth) = simulate(cfg)?;
    write_text(&out.join(files::TRUTH), &io::truth_to_csv(&truth.ids, &truth.coords))?;
    match sim {
        Simulated::Csi(ds) => {
            let p = out.join(files::DATASET);
            io::write_dataset(&p, &ds).map_err(io_err(&p))?;
            let (first, last) = match (ds.samples.first(), ds.samples.last()) {
                (Some(a), Some(b)) => (a.timestamp, b.timestamp),
                _ => (0.0, 0.0),
            };
            Ok(format!(
                "simulated {} samples over {:.1} s ({} antennas, {} subcarriers)",
                ds.samples.len(),
                last - first,
                ds.array_rows * ds.array_cols,
                cfg.scenario.num_subcarriers
            ))
        }
        Simulated::Features(f) => {
            let p = out.join(files::FEATURES);
            io::write_features(&p, &f).map_err(io_err(&p))?;
            Ok(format!("generated {} spiral samples", f.len()))
        }
    }
}

pub fn stage_features(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    if cfg.preset == Preset::Spiral {
        let f = load_features(out)?;
        return Ok(format!("spiral features already present ({} samples)", f.len()));
    }
    let p = input(out, files::DATASET)?;
    let ds = io::read_dataset(&p).map_err(io_err(&p))?;
    let feats = compute_features(cfg, &ds)?;
    let dim = cfg.features.output_dim(ds.samples.first().map_or(cfg.scenario.num_subcarriers, |s| s.matrix.ncols()));
    let fp = out.join(files::FEATURES);
    fs::write(&fp, io::encode_features_with_dim(&feats, dim))
        .map_err(|e| PipelineError::Io { path: fp.clone(), source: e.into() })?;
    Ok(format!("extracted {} feature vectors of dimension {dim} ({})", feats.len(), cfg.features.transform))
}

pub fn stage_chart(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let feats = load_features(out)?;
    let truth = if cfg.chart.anchor_interval.is_some() { Some(load_truth(out)?) } else { None };
    let chart = compute_chart(&cfg.chart, &feats, truth.as_ref())?;
    let p = out.join(files::CHART);
    io::write_chart(&p, &chart).map_err(io_err(&p))?;
    write_text(&out.join(files::CHART_CSV), &io::chart_to_csv(&chart))?;
    if let Some(model) = &chart.model {
        let m = out.join(files::MODEL);
        io::write_model(&m, model).map_err(io_err(&m))?;
    }
    Ok(format!("{} chart with {} points in {} dimension(s)", chart.method, chart.len(), chart.latent_dim()))
}

pub fn stage_evaluate(cfg: &PipelineConfig, out: &Path) -> Result<String, PipelineError> {
    let chart = load_chart(out)?;
    let truth = load_truth(out)?;
    let report = evaluate_chart(&chart, &truth, cfg.k_list.as_deref())?;
    let p = out.join(files::REPORT);
    io::write_report(&p, &report).map_err(io_err(&p))?;
    write_text(&out.join(files::REPORT_CSV), &io::report_to_csv(&report))?;
    let summary = report.summary();
    write_text(&out.join(files::REPORT_TXT), &summary)?;
    Ok(summary.trim_end().to_string())
}

pub fn stage_app(cfg: &PipelineConfig, app: AppKind, out: &Path) -> Result<String, PipelineError> {
    let chart = load_chart(out)?;
    let feats = load_features(out)?;
    match app {
        AppKind::Cells => {
            let truth = load_truth(out)?;
            let res = cell_experiment(&cfg.apps, cfg.scenario.coverage_area, &chart, &feats, &truth)?;
            write_text(&out.join(files::CONFUSION_CSV), &io::confusion_to_csv(&res.association.confusion))?;
            let adj = res.adjacent_error_fraction.map_or("n/a (no errors)".to_string(), |f| format!("{f:.4}"));
            let text = format!(
                "cell association accuracy {:.4} on {} test samples; errors on adjacent cells {adj}\n",
                res.association.accuracy,
                res.association.predictions.len()
            );
            write_text(&out.join(files::CELLS_TXT), &text)?;
            Ok(text.trim_end().to_string())
        }
        AppKind::Proximity => {
            let roc = proximity_experiment(cfg, &chart, &feats)?;
            write_text(&out.join(files::ROC_CSV), &io::roc_to_csv(&roc))?;
            let text = format!("proximity ROC: auc {:.4}, TPR at 10% FPR {:.4}\n", roc.auc, roc.tpr_at_fpr(0.1));
            write_text(&out.join(files::PROXIMITY_TXT), &text)?;
            Ok(text.trim_end().to_string())
        }
    }
}

/// Runs every stage in order, then the configured applications.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Vec<String>, PipelineError> {
    let mut log = vec![stage_simulate(cfg, out)?, stage_features(cfg, out)?, stage_chart(cfg, out)?, stage_evaluate(cfg, out)?];
    for &app in &cfg.apps.run {
        log.push(stage_app(cfg, app, out)?);
    }
    Ok(log)
}
