use ndarray::Array2;

use super::{ChannelChart, DrError, Method, NeighborGraph, TrainingMeta};
use crate::linalg::symmetric_eigen;

/// Graph Laplacian `L = D − W`.
pub fn laplacian_matrix(graph: &NeighborGraph) -> Array2<f64> {
    let mut l = graph.weight_matrix().mapv(|w| -w);
    for i in 0..graph.num_nodes() {
        let deg: f64 = graph.adjacency[i].iter().map(|e| e.weight).sum();
        l[[i, i]] = deg;
    }
    l
}

/// Laplacian eigenmaps: solves `L y = λ D y` through the similarity transform
/// `D^{-1/2} L D^{-1/2}` and keeps the eigenvectors of the `d` smallest
/// non-zero eigenvalues, scaled so that `yᵀ D y = 1`.
pub fn laplacian_eigenmaps_embed(graph: &NeighborGraph, d: usize) -> Result<ChannelChart, DrError> {
    let n = graph.num_nodes();
    if d < 1 || n <= d + 1 {
        return Err(DrError::TooFewSamples { n, d });
    }
    let comps = graph.connected_components();
    if comps > 1 {
        return Err(DrError::DisconnectedGraph(comps));
    }
    let l = laplacian_matrix(graph);
    let inv_sqrt_deg: Vec<f64> = (0..n).map(|i| 1.0 / l[[i, i]].sqrt()).collect();
    let mut sym = l.clone();
    for i in 0..n {
        for j in 0..n {
            sym[[i, j]] *= inv_sqrt_deg[i] * inv_sqrt_deg[j];
        }
    }
    let eig = symmetric_eigen(&sym)?;
    let mut coords = Array2::zeros((n, d));
    let mut eigenvalues = Vec::with_capacity(d);
    for k in 0..d {
        let src = k + 1;
        eigenvalues.push(eig.values[src]);
        let col = eig.vectors.column(src);
        let pivot = col.iter().copied().fold(0.0_f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[[i, k]] = sign * col[i] * inv_sqrt_deg[i];
        }
    }
    let meta = TrainingMeta {
        hyperparameters: vec![
            ("latent_dim".into(), d as f64),
            ("k".into(), graph.k as f64),
            ("sigma".into(), graph.sigma.unwrap_or(0.0)),
        ],
        eigenvalues,
        ..TrainingMeta::default()
    };
    ChannelChart::new(coords, (0..n as u64).collect(), Method::LaplacianEigenmaps, meta)
}
