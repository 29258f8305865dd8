//! Chart quality against a reference space.
//!
//! Ranks are computed with ties broken by ascending index; [`evaluate`] orders
//! samples by id first, so index order is sample-id order.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::DMatrix;
use ndarray::{Array1, Array2, Axis};
use thiserror::Error;

use crate::dr::graph::knn_indices;
use crate::dr::ChannelChart;
use crate::linalg::euclidean_distances;
use crate::par;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("neighborhood size K = {k} out of range for N = {n} (need 1 ≤ K < N/2)")]
    KOutOfRange { k: usize, n: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("not a distance matrix: {0}")]
    NotDistanceMatrix(String),
    #[error("all reference distances are zero")]
    ZeroReference,
    #[error("reference points are all identical")]
    DegenerateReference,
    #[error("no reference position for sample {0}")]
    MissingReference(u64),
}

fn check_distance_matrix(m: &Array2<f64>, name: &str) -> Result<usize, MetricsError> {
    let (r, c) = m.dim();
    if r != c {
        return Err(MetricsError::NotDistanceMatrix(format!("{name} is {r}×{c}")));
    }
    for i in 0..r {
        if m[[i, i]] != 0.0 {
            return Err(MetricsError::NotDistanceMatrix(format!("{name} has non-zero diagonal at {i}")));
        }
        for j in 0..i {
            let v = m[[i, j]];
            if !(v.is_finite() && v >= 0.0) || v != m[[j, i]] {
                return Err(MetricsError::NotDistanceMatrix(format!(
                    "{name} entry ({i}, {j}) is negative, non-finite or asymmetric"
                )));
            }
        }
    }
    Ok(r)
}

fn check_pair(reference: &Array2<f64>, latent: &Array2<f64>) -> Result<usize, MetricsError> {
    let n = check_distance_matrix(reference, "reference")?;
    let m = check_distance_matrix(latent, "latent")?;
    if n != m {
        return Err(MetricsError::ShapeMismatch(format!("reference has {n} points, latent has {m}")));
    }
    Ok(n)
}

/// Trustworthiness at neighborhood size `k`: penalizes latent-space
/// neighbors that are not reference-space neighbors, weighted by how far
/// down the reference ranking they sit.
pub fn trustworthiness(reference: &Array2<f64>, latent: &Array2<f64>, k: usize) -> Result<f64, MetricsError> {
    let n = check_pair(reference, latent)?;
    if k < 1 || 2 * k >= n {
        return Err(MetricsError::KOutOfRange { k, n });
    }
    let penalties = par::map_range(n, |i| {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| reference[[i, a]].total_cmp(&reference[[i, b]]).then(a.cmp(&b)));
        let mut rank = vec![0u64; n];
        for (pos, &j) in order.iter().enumerate() {
            rank[j] = pos as u64 + 1;
        }
        knn_indices(latent, i, k)
            .into_iter()
            .map(|j| rank[j].saturating_sub(k as u64))
            .sum::<u64>()
    });
    let total: u64 = penalties.iter().sum();
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * total as f64)
}

/// Continuity: trustworthiness with the two spaces exchanged.
pub fn continuity(reference: &Array2<f64>, latent: &Array2<f64>, k: usize) -> Result<f64, MetricsError> {
    trustworthiness(latent, reference, k)
}

/// Scale-optimal Kruskal stress
/// `min_β sqrt(Σ(δ − βd)² / Σδ²)` over pairs `i < j`, with
/// `β = Σδd / Σd²`. All-zero latent distances give 1.
pub fn kruskal_stress(reference: &Array2<f64>, latent: &Array2<f64>) -> Result<f64, MetricsError> {
    let n = check_pair(reference, latent)?;
    let (mut sdd, mut sd2, mut sr2) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in i + 1..n {
            let (r, l) = (reference[[i, j]], latent[[i, j]]);
            sdd += r * l;
            sd2 += l * l;
            sr2 += r * r;
        }
    }
    if sr2 == 0.0 {
        return Err(MetricsError::ZeroReference);
    }
    if sd2 == 0.0 {
        return Ok(1.0);
    }
    let beta = sdd / sd2;
    let mut resid = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            let e = reference[[i, j]] - beta * latent[[i, j]];
            resid += e * e;
        }
    }
    Ok((resid / sr2).sqrt())
}

/// Result of [`align_similarity`]: `transformed = scale · (chart − c̄) · rotation + r̄`.
#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    pub transformed: Array2<f64>,
    pub rmse: f64,
    pub scale: f64,
    /// Orthogonal, may include a reflection.
    pub rotation: Array2<f64>,
}

/// Best similarity transform (rotation or reflection, uniform scale,
/// translation) of `chart` onto `reference` in the least-squares sense,
/// via orthogonal Procrustes on the centered point sets.
pub fn align_similarity(chart: &Array2<f64>, reference: &Array2<f64>) -> Result<Alignment, MetricsError> {
    if chart.dim() != reference.dim() {
        return Err(MetricsError::ShapeMismatch(format!(
            "chart is {:?}, reference is {:?}",
            chart.dim(),
            reference.dim()
        )));
    }
    let (n, d) = chart.dim();
    if n == 0 || d == 0 {
        return Err(MetricsError::ShapeMismatch("empty point sets".into()));
    }
    let cm = chart.mean_axis(Axis(0)).expect("n > 0");
    let rm = reference.mean_axis(Axis(0)).expect("n > 0");
    let xc = chart - &cm.view().insert_axis(Axis(0));
    let yc = reference - &rm.view().insert_axis(Axis(0));
    if yc.iter().all(|&v| v == 0.0) {
        return Err(MetricsError::DegenerateReference);
    }
    let cross = xc.t().dot(&yc);
    let svd = DMatrix::from_fn(d, d, |i, j| cross[[i, j]]).svd(true, true);
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let r = u * vt;
    let rotation = Array2::from_shape_fn((d, d), |(i, j)| r[(i, j)]);
    let xnorm: f64 = xc.iter().map(|v| v * v).sum();
    let scale = if xnorm > 0.0 { svd.singular_values.sum() / xnorm } else { 0.0 };
    let transformed = xc.dot(&rotation) * scale + &rm.view().insert_axis(Axis(0));
    let sq: f64 = (&transformed - reference).iter().map(|v| v * v).sum();
    Ok(Alignment { transformed, rmse: (sq / n as f64).sqrt(), scale, rotation })
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let ra = average_ranks(a);
    let rb = average_ranks(b);
    pearson(&ra, &rb)
}

fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&x, &y| v[x].total_cmp(&v[y]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// `{⌈0.01N⌉, ⌈0.05N⌉}`, restricted to valid sizes and deduplicated.
pub fn default_k_list(n: usize) -> Vec<usize> {
    let mut ks: Vec<usize> = [0.01, 0.05]
        .iter()
        .map(|f| (f * n as f64).ceil() as usize)
        .filter(|&k| k >= 1 && 2 * k < n)
        .collect();
    ks.dedup();
    ks
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub k_list: Vec<usize>,
    pub trustworthiness: Vec<(usize, f64)>,
    pub continuity: Vec<(usize, f64)>,
    pub kruskal_stress: f64,
    /// `None` when chart and reference dimensions differ.
    pub alignment_rmse: Option<f64>,
}

impl MetricsReport {
    pub fn trustworthiness_at(&self, k: usize) -> Option<f64> {
        self.trustworthiness.iter().find(|e| e.0 == k).map(|e| e.1)
    }

    pub fn continuity_at(&self, k: usize) -> Option<f64> {
        self.continuity.iter().find(|e| e.0 == k).map(|e| e.1)
    }

    /// Human-readable summary.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        for (&(k, tw), &(_, ct)) in self.trustworthiness.iter().zip(&self.continuity) {
            let _ = writeln!(s, "K = {k:>4}: trustworthiness {tw:.4}  continuity {ct:.4}");
        }
        let _ = writeln!(s, "Kruskal stress (scale-optimal): {:.4}", self.kruskal_stress);
        match self.alignment_rmse {
            Some(r) => {
                let _ = writeln!(s, "similarity-alignment RMSE: {r:.4}");
            }
            None => {
                let _ = writeln!(s, "similarity-alignment RMSE: n/a (dimension mismatch)");
            }
        }
        s
    }
}

/// Scores `chart` against reference coordinates given per sample id.
/// `k_list = None` uses [`default_k_list`].
pub fn evaluate(
    chart: &ChannelChart,
    reference: &HashMap<u64, Vec<f64>>,
    k_list: Option<&[usize]>,
) -> Result<MetricsReport, MetricsError> {
    let n = chart.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| chart.sample_ids[i]);
    let ref_dim = reference.values().next().map_or(0, Vec::len);
    let mut ref_pts = Array2::zeros((n, ref_dim));
    for (row, &i) in order.iter().enumerate() {
        let id = chart.sample_ids[i];
        let p = reference.get(&id).ok_or(MetricsError::MissingReference(id))?;
        if p.len() != ref_dim {
            return Err(MetricsError::ShapeMismatch(format!("reference for sample {id} has dimension {}", p.len())));
        }
        ref_pts.row_mut(row).assign(&Array1::from(p.clone()));
    }
    let latent_pts = chart.coordinates.select(Axis(0), &order);
    let dr = euclidean_distances(&ref_pts);
    let dl = euclidean_distances(&latent_pts);
    let k_list = match k_list {
        Some(ks) => ks.to_vec(),
        None => default_k_list(n),
    };
    let mut tw = Vec::with_capacity(k_list.len());
    let mut ct = Vec::with_capacity(k_list.len());
    for &k in &k_list {
        tw.push((k, trustworthiness(&dr, &dl, k)?));
        ct.push((k, continuity(&dr, &dl, k)?));
    }
    let kruskal = kruskal_stress(&dr, &dl)?;
    let alignment_rmse = if ref_dim == chart.latent_dim() {
        Some(align_similarity(&latent_pts, &ref_pts)?.rmse)
    } else {
        None
    };
    Ok(MetricsReport { k_list, trustworthiness: tw, continuity: ct, kruskal_stress: kruskal, alignment_rmse })
}
