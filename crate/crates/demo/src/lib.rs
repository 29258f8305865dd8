//! WebAssembly bindings behind the static page in `www/`.
//!
//! Every export returns a flat `Float64Array` whose layout is documented on
//! the function; failures surface as JavaScript errors.

use chartlab::features::extract_features;
use chartlab::metrics::{align_similarity, spearman};
use chartlab::pipeline::{compute_chart, compute_features, evaluate_chart, simulate, PipelineConfig, Preset, Simulated, TrajectorySpec};
use chartlab::sim::synthesize_channel;
use chartlab::{CsiSample, FeatureConfig, Method, NormMode, Scenario};
use wasm_bindgen::prelude::*;

fn method(name: &str) -> Result<Method, JsError> {
    name.parse().map_err(|e: String| JsError::new(&e))
}

fn js<E: std::fmt::Display>(e: E) -> JsError {
    JsError::new(&e.to_string())
}

/// Unfolds a noisy 2D spiral into a 1D chart.
///
/// Layout: `[spearman, x0, y0, arc0, c0, x1, y1, arc1, c1, ...]` where
/// `(x, y)` is the noisy point, `arc` its arc length and `c` its chart
/// coordinate.
#[wasm_bindgen]
pub fn unfold_spiral(samples: usize, noise_fraction: f64, method_name: &str, seed: u64) -> Result<Vec<f64>, JsError> {
    let mut cfg = PipelineConfig::preset(Preset::Spiral, seed);
    cfg.spiral.samples = samples;
    cfg.spiral.noise_fraction = noise_fraction;
    cfg.set_method(method(method_name)?);
    cfg.chart.sammon.iters = 200;
    cfg.chart.train.epochs = 5;
    let (sim, truth) = simulate(&cfg).map_err(js)?;
    let Simulated::Features(features) = sim else { return Err(JsError::new("spiral preset yields features")) };
    let chart = compute_chart(&cfg.chart, &features, Some(&truth)).map_err(js)?;
    let coords: Vec<f64> = chart.coordinates.column(0).to_vec();
    let arc: Vec<f64> = truth.coords.column(0).to_vec();
    let mut out = Vec::with_capacity(1 + 4 * coords.len());
    out.push(spearman(&coords, &arc));
    for (i, f) in features.iter().enumerate() {
        out.extend([f.values[0], f.values[1], arc[i], coords[i]]);
    }
    Ok(out)
}

/// Beamspace magnitude of the 4 × 8 urban array seen from `(x, y)`.
///
/// Layout: 8 rows of 16 values, row-major (2× oversampled DFT grid),
/// normalized to unit Euclidean norm.
#[wasm_bindgen]
pub fn beamspace(x: f64, y: f64, seed: u64) -> Result<Vec<f64>, JsError> {
    let scenario = Scenario::urban_8x4(seed);
    let h = synthesize_channel(&scenario, [x, y]).map_err(js)?;
    let sample = CsiSample { matrix: h, timestamp: 0.0, sample_id: 0, true_position: Some([x, y]) };
    let cfg = FeatureConfig { normalization: NormMode::UnitNorm, ..FeatureConfig::beamspace(scenario.array_rows, scenario.array_cols) };
    Ok(extract_features(&sample, &cfg).map_err(js)?.values)
}

/// Charts a street walk through the urban scenario in 2D.
///
/// Layout: `[trustworthiness, continuity, kruskal_stress, alignment_rmse,
/// tx0, ty0, cx0, cy0, ...]` with the true position `(tx, ty)` and the chart
/// point `(cx, cy)` after the best similarity alignment onto the truth.
#[wasm_bindgen]
pub fn street_chart(duration: f64, method_name: &str, seed: u64) -> Result<Vec<f64>, JsError> {
    let mut cfg = PipelineConfig::preset(Preset::Urban8x4, seed);
    cfg.trajectory = TrajectorySpec::StreetWalk { street_spacing: 50.0, duration, speed: 1.0, sample_rate: 1.0 };
    cfg.set_method(method(method_name)?);
    cfg.chart.sammon.iters = 200;
    cfg.chart.train.epochs = 5;
    cfg.chart.mining.triplets_per_epoch = 2000;
    let (sim, truth) = simulate(&cfg).map_err(js)?;
    let Simulated::Csi(dataset) = sim else { return Err(JsError::new("urban preset yields CSI")) };
    let features = compute_features(&cfg, &dataset).map_err(js)?;
    let chart = compute_chart(&cfg.chart, &features, Some(&truth)).map_err(js)?;
    let report = evaluate_chart(&chart, &truth, None).map_err(js)?;
    let k = report.k_list[0];
    let aligned = align_similarity(&chart.coordinates, &truth.coords).map_err(js)?;
    let mut out = vec![
        report.trustworthiness_at(k).unwrap_or(f64::NAN),
        report.continuity_at(k).unwrap_or(f64::NAN),
        report.kruskal_stress,
        aligned.rmse,
    ];
    for (t, c) in truth.coords.rows().into_iter().zip(aligned.transformed.rows()) {
        out.extend([t[0], t[1], c[0], c[1]]);
    }
    Ok(out)
}
