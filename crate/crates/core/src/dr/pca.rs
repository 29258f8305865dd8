use ndarray::{Array1, Array2, ArrayView1, Axis};

use super::{ChannelChart, DrError, Method, TrainingMeta};
use crate::features::{feature_matrix, FeatureVector};
use crate::linalg::symmetric_eigen;

/// Mean and top principal directions of a data set.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaProjection {
    pub mean: Array1<f64>,
    /// F × d, orthonormal columns.
    pub components: Array2<f64>,
    /// Covariance eigenvalues (1/N normalization) of the kept directions,
    /// non-increasing.
    pub variances: Vec<f64>,
}

impl PcaProjection {
    pub fn project(&self, x: ArrayView1<f64>) -> Array1<f64> {
        (&x - &self.mean).dot(&self.components)
    }

    pub fn project_rows(&self, x: &Array2<f64>) -> Array2<f64> {
        (x - &self.mean.view().insert_axis(Axis(0))).dot(&self.components)
    }
}

/// Fits a `d`-component PCA to the rows of `x`.
pub fn pca_fit(x: &Array2<f64>, d: usize) -> Result<PcaProjection, DrError> {
    let (n, f) = x.dim();
    if d < 1 || n <= d {
        return Err(DrError::TooFewSamples { n, d });
    }
    if d > f {
        return Err(DrError::InvalidInput(format!("latent dimension {d} exceeds feature dimension {f}")));
    }
    let mean = x.mean_axis(Axis(0)).expect("n > 0");
    let centered = x - &mean.view().insert_axis(Axis(0));
    let cov = centered.t().dot(&centered) / n as f64;
    let eig = symmetric_eigen(&cov)?;
    let top = eig.values[f - 1];
    if !(top > 0.0) {
        return Err(DrError::DegenerateInput("all samples are identical"));
    }
    let mut components = Array2::zeros((f, d));
    let mut variances = Vec::with_capacity(d);
    for k in 0..d {
        let src = f - 1 - k;
        let mut col = eig.vectors.column(src).to_owned();
        // Sign convention: largest-magnitude loading is positive.
        let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col.mapv_inplace(|v| -v);
        }
        components.column_mut(k).assign(&col);
        variances.push(eig.values[src].max(0.0));
    }
    Ok(PcaProjection { mean, components, variances })
}

/// Projects features onto their top-`d` principal directions.
pub fn pca_embed(features: &[FeatureVector], d: usize) -> Result<ChannelChart, DrError> {
    let x = feature_matrix(features)?;
    let proj = pca_fit(&x, d)?;
    let coords = proj.project_rows(&x);
    let meta = TrainingMeta {
        hyperparameters: vec![("latent_dim".into(), d as f64)],
        eigenvalues: proj.variances.clone(),
        ..TrainingMeta::default()
    };
    ChannelChart::new(coords, features.iter().map(|f| f.sample_id).collect(), Method::Pca, meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::NormMode;

    fn fv(id: u64, v: Vec<f64>) -> FeatureVector {
        FeatureVector { values: v, timestamp: id as f64, sample_id: id, norm_mode: NormMode::Raw }
    }

    #[test]
    fn two_points_one_dimension() {
        let chart = pca_embed(&[fv(0, vec![1.0, 1.0]), fv(1, vec![4.0, 5.0])], 1).unwrap();
        let half = 2.5;
        let c = chart.coordinates.column(0);
        assert!((c[0].abs() - half).abs() < 1e-12);
        assert!((c[1].abs() - half).abs() < 1e-12);
        assert!((c[0] + c[1]).abs() < 1e-12);
    }

    #[test]
    fn identical_points_are_degenerate() {
        let pts: Vec<_> = (0..4).map(|i| fv(i, vec![1.0, 2.0, 3.0])).collect();
        assert_eq!(pca_embed(&pts, 2).unwrap_err(), DrError::DegenerateInput("all samples are identical"));
    }

    #[test]
    fn too_few_samples() {
        let pts = vec![fv(0, vec![0.0, 1.0]), fv(1, vec![1.0, 0.0])];
        assert!(matches!(pca_embed(&pts, 2), Err(DrError::TooFewSamples { .. })));
    }

    #[test]
    fn zero_mean_and_ordered_variances() {
        let pts: Vec<_> = (0..30)
            .map(|i| {
                let t = i as f64;
                fv(i, vec![t.sin() * 3.0, t.cos(), (0.3 * t).sin() * 0.2, 0.1 * t])
            })
            .collect();
        let chart = pca_embed(&pts, 3).unwrap();
        let mean = chart.coordinates.mean_axis(Axis(0)).unwrap();
        assert!(mean.iter().all(|m| m.abs() < 1e-12));
        let var = chart.coordinates.var_axis(Axis(0), 0.0);
        assert!(var[0] >= var[1] && var[1] >= var[2]);
    }
}
