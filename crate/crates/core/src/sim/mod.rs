//! Geometric multipath CSI simulator.
//!
//! A base station with a uniform rectangular array (URA) receives pilots from
//! a single-antenna user at fixed height [`UE_HEIGHT`]. The channel is a sum
//! of plane waves: a line-of-sight path (unless the user stands in a blockage
//! region) plus one single-bounce path per scatterer.

mod channel;
mod scenario;
mod trajectory;

pub use channel::{generate_dataset, generate_dataset_from, steering_vector, subcarrier_frequencies, synthesize_channel, CsiSample};
pub use scenario::{seeded_scatterers, Rect, Scatterer, Scenario, UE_HEIGHT};
pub use trajectory::{make_loop_trajectory, street_walk_trajectory, Trajectory, Waypoint};

use thiserror::Error;

/// Speed of light, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("trajectory is empty (needs at least two waypoints)")]
    EmptyTrajectory,
    #[error("position ({x:.3}, {y:.3}) lies outside the coverage area")]
    OutsideCoverage { x: f64, y: f64 },
    #[error("degenerate geometry: zero-length propagation path ({0})")]
    DegenerateGeometry(&'static str),
}
