//! Channel-charting workbench.
//!
//! The crate covers the whole two-phase charting workflow:
//!
//! * [`sim`] synthesizes multipath CSI for a base-station antenna array and a
//!   user walking through a 2D coverage area;
//! * [`features`] turns raw CSI into phase-robust real feature vectors;
//! * [`dr`] holds the non-parametric reductions (PCA, Sammon's mapping,
//!   Laplacian eigenmaps) and [`nn`] the parametric triplet network with its
//!   own reverse-mode gradient engine;
//! * [`metrics`] scores charts (trustworthiness, continuity, Kruskal stress,
//!   similarity alignment);
//! * [`apps`] runs chart-based cell association and proximity detection;
//! * [`io`] and [`config`] handle files, and [`pipeline`] chains everything.

pub mod apps;
pub mod config;
pub mod dr;
pub mod features;
pub mod io;
pub mod linalg;
pub mod metrics;
pub mod nn;
pub mod pipeline;
pub mod sim;
pub mod spiral;

mod par;

pub use par::set_thread_count;
pub use dr::{ChannelChart, Method, TrainingMeta};
pub use features::{FeatureConfig, FeatureVector, NormMode, Transform};
pub use metrics::MetricsReport;
pub use nn::MlpModel;
pub use sim::{CsiSample, Scenario, Trajectory};

/// A point in the 2D coverage area, meters.
pub type Point2 = [f64; 2];
/// A point in 3D space, meters.
pub type Point3 = [f64; 3];
