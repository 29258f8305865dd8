//! Applications on top of a learned chart: out-of-sample mapping, cell
//! association by chart k-NN voting, trajectory smoothing and proximity
//! detection with ROC evaluation.

use ndarray::{Array2, ArrayView1};
use thiserror::Error;

use crate::dr::ChannelChart;
use crate::features::FeatureVector;
use crate::linalg::row_distance;
use crate::nn::NnError;
use crate::sim::Rect;
use crate::{par, Point2};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AppError {
    #[error("chart is empty")]
    EmptyChart,
    #[error("invalid k = {k} (have {n} reference points)")]
    InvalidK { k: usize, n: usize },
    #[error("training sample {0} has no cell label")]
    UnlabeledSample(u64),
    #[error("ground truth contains no neighboring pairs within the truth radius")]
    NoPositivePairs,
    #[error("ground truth contains no non-neighboring pairs")]
    NoNegativePairs,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Nn(#[from] NnError),
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Maps a new feature vector into an existing chart.
///
/// Parametric charts run the stored network. Non-parametric charts use
/// inverse-distance weighting over the `k` nearest training features
/// (`training[i]` must correspond to chart row `i`); a query that coincides
/// with training features returns the mean chart position of those matches.
pub fn out_of_sample_map(
    chart: &ChannelChart,
    training: &[FeatureVector],
    query: &FeatureVector,
    k: usize,
) -> Result<Vec<f64>, AppError> {
    if chart.is_empty() {
        return Err(AppError::EmptyChart);
    }
    if let Some(model) = &chart.model {
        return Ok(model.forward(&query.values)?);
    }
    let n = chart.len();
    if training.len() != n {
        return Err(AppError::InvalidInput(format!("{} training features for a chart of {n} points", training.len())));
    }
    if k < 1 || k > n {
        return Err(AppError::InvalidK { k, n });
    }
    let mut cand: Vec<(f64, u64, usize)> = training
        .iter()
        .enumerate()
        .map(|(i, f)| {
            if f.values.len() != query.values.len() {
                return Err(AppError::InvalidInput("feature dimension mismatch".into()));
            }
            Ok((dist(&f.values, &query.values), chart.sample_ids[i], i))
        })
        .collect::<Result<_, _>>()?;
    let cmp = |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < n {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_by(cmp);
    let d = chart.latent_dim();
    let mut out = vec![0.0; d];
    let exact: Vec<usize> = cand.iter().filter(|c| c.0 == 0.0).map(|c| c.2).collect();
    if !exact.is_empty() {
        for &i in &exact {
            for (o, v) in out.iter_mut().zip(chart.point(i)) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= exact.len() as f64);
        return Ok(out);
    }
    let mut wsum = 0.0;
    for &(dq, _, i) in &cand {
        let w = 1.0 / dq;
        wsum += w;
        for (o, v) in out.iter_mut().zip(chart.point(i)) {
            *o += w * v;
        }
    }
    out.iter_mut().for_each(|o| *o /= wsum);
    Ok(out)
}

/// [`out_of_sample_map`] for a batch of queries, one chart row per query.
pub fn map_out_of_sample(
    chart: &ChannelChart,
    training: &[FeatureVector],
    queries: &[FeatureVector],
    k: usize,
) -> Result<Array2<f64>, AppError> {
    let d = chart.latent_dim();
    let mut out = Array2::zeros((queries.len(), d));
    if let Some(model) = &chart.model {
        let x = crate::features::feature_matrix(queries).map_err(NnError::from)?;
        if queries.is_empty() {
            return Ok(out);
        }
        return Ok(model.forward_batch(&x)?);
    }
    let rows = par::map_range(queries.len(), |i| out_of_sample_map(chart, training, &queries[i], k));
    for (i, r) in rows.into_iter().enumerate() {
        for (j, v) in r?.into_iter().enumerate() {
            out[[i, j]] = v;
        }
    }
    Ok(out)
}

/// Base-station sites of a cellular layer; users associate with the nearest.
#[derive(Clone, Debug, PartialEq)]
pub struct CellLayout {
    pub cells: Vec<Point2>,
}

impl CellLayout {
    pub fn new(cells: Vec<Point2>) -> Result<Self, AppError> {
        if cells.len() < 2 {
            return Err(AppError::InvalidInput("a cell layout needs at least two cells".into()));
        }
        for i in 0..cells.len() {
            for j in 0..i {
                if cells[i] == cells[j] {
                    return Err(AppError::InvalidInput(format!("cells {j} and {i} share a position")));
                }
            }
        }
        Ok(Self { cells })
    }

    /// Seven sites: `center` plus a hexagonal ring at distance `spacing`.
    pub fn hexagonal(center: Point2, spacing: f64) -> Self {
        let mut cells = vec![center];
        for k in 0..6 {
            let a = std::f64::consts::FRAC_PI_3 * k as f64;
            cells.push([center[0] + spacing * a.cos(), center[1] + spacing * a.sin()]);
        }
        Self { cells }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Nearest cell by physical distance (lowest index on ties).
    pub fn label(&self, p: Point2) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in self.cells.iter().enumerate() {
            let d = (c[0] - p[0]).hypot(c[1] - p[1]);
            if d < best.0 {
                best = (d, i);
            }
        }
        best.1
    }

    /// Cells whose nearest-cell regions touch inside `area`, found by scanning
    /// a grid of `resolution`-meter spacing for label changes between
    /// horizontally or vertically adjacent grid points.
    pub fn adjacency(&self, area: Rect, resolution: f64) -> Vec<Vec<bool>> {
        let n = self.len();
        let mut adj = vec![vec![false; n]; n];
        let nx = (area.width() / resolution).ceil() as usize + 1;
        let ny = (area.height() / resolution).ceil() as usize + 1;
        let at = |i: usize, j: usize| {
            let x = (area.min[0] + i as f64 * resolution).min(area.max[0]);
            let y = (area.min[1] + j as f64 * resolution).min(area.max[1]);
            self.label([x, y])
        };
        let mut prev_row: Vec<usize> = (0..nx).map(|i| at(i, 0)).collect();
        for j in 0..ny {
            let row: Vec<usize> = if j == 0 { prev_row.clone() } else { (0..nx).map(|i| at(i, j)).collect() };
            for i in 0..nx {
                let mut link = |a: usize, b: usize| {
                    if a != b {
                        adj[a][b] = true;
                        adj[b][a] = true;
                    }
                };
                if i + 1 < nx {
                    link(row[i], row[i + 1]);
                }
                link(row[i], prev_row[i]);
            }
            prev_row = row;
        }
        adj
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellAssociation {
    pub predictions: Vec<usize>,
    pub accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<usize>>,
}

impl CellAssociation {
    /// Share of misclassified test samples whose predicted cell is adjacent
    /// to the true one (`None` when there are no errors).
    pub fn adjacent_error_fraction(&self, adjacency: &[Vec<bool>]) -> Option<f64> {
        let mut errors = 0usize;
        let mut adjacent = 0usize;
        for (t, row) in self.confusion.iter().enumerate() {
            for (p, &c) in row.iter().enumerate() {
                if t != p {
                    errors += c;
                    if adjacency[t][p] {
                        adjacent += c;
                    }
                }
            }
        }
        (errors > 0).then(|| adjacent as f64 / errors as f64)
    }
}

/// Majority vote over the `k` chart-nearest labeled training points.
/// Ties in the vote go to the label with the smallest summed chart distance.
fn vote(chart: &ChannelChart, labels: &[usize], q: ArrayView1<f64>, k: usize, num_cells: usize) -> usize {
    let mut cand: Vec<(f64, u64, usize)> = (0..chart.len())
        .map(|i| (row_distance(chart.point(i), q), chart.sample_ids[i], i))
        .collect();
    let cmp = |a: &(f64, u64, usize), b: &(f64, u64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    let mut counts = vec![0usize; num_cells];
    let mut dsum = vec![0.0; num_cells];
    for &(d, _, i) in &cand {
        counts[labels[i]] += 1;
        dsum[labels[i]] += d;
    }
    (0..num_cells)
        .filter(|&c| counts[c] > 0)
        .min_by(|&a, &b| counts[b].cmp(&counts[a]).then(dsum[a].total_cmp(&dsum[b])).then(a.cmp(&b)))
        .expect("k ≥ 1 voters")
}

/// Predicts the cell of each test chart point by k-NN voting among labeled
/// training chart points and scores it against `test_truth`.
pub fn cell_association(
    chart: &ChannelChart,
    training_labels: &[Option<usize>],
    test_points: &Array2<f64>,
    test_truth: &[usize],
    num_cells: usize,
    k: usize,
) -> Result<CellAssociation, AppError> {
    if chart.is_empty() {
        return Err(AppError::EmptyChart);
    }
    if k < 1 || k > chart.len() {
        return Err(AppError::InvalidK { k, n: chart.len() });
    }
    if training_labels.len() != chart.len() {
        return Err(AppError::InvalidInput("one label per chart point required".into()));
    }
    if test_points.nrows() != test_truth.len() || test_points.ncols() != chart.latent_dim() {
        return Err(AppError::InvalidInput("test points do not match truth labels or chart dimension".into()));
    }
    let labels: Vec<usize> = training_labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or(AppError::UnlabeledSample(chart.sample_ids[i])))
        .collect::<Result<_, _>>()?;
    if labels.iter().chain(test_truth).any(|&l| l >= num_cells) {
        return Err(AppError::InvalidInput(format!("cell label out of range (num_cells = {num_cells})")));
    }
    let predictions = par::map_range(test_points.nrows(), |i| vote(chart, &labels, test_points.row(i), k, num_cells));
    let mut confusion = vec![vec![0usize; num_cells]; num_cells];
    for (&t, &p) in test_truth.iter().zip(&predictions) {
        confusion[t][p] += 1;
    }
    let correct: usize = (0..num_cells).map(|c| confusion[c][c]).sum();
    let accuracy = if predictions.is_empty() { 0.0 } else { correct as f64 / predictions.len() as f64 };
    Ok(CellAssociation { predictions, accuracy, confusion })
}

/// Trailing moving average: output `i` is the mean of all positions with
/// timestamps in `[t_i − window, t_i]`.
pub fn smooth_positions(points: &Array2<f64>, timestamps: &[f64], window: f64) -> Result<Array2<f64>, AppError> {
    if !(window > 0.0) {
        return Err(AppError::InvalidInput("smoothing window must be positive".into()));
    }
    if points.nrows() != timestamps.len() {
        return Err(AppError::InvalidInput("one timestamp per point required".into()));
    }
    if timestamps.windows(2).any(|w| w[1] < w[0]) {
        return Err(AppError::InvalidInput("timestamps must be sorted".into()));
    }
    let mut out = Array2::zeros(points.raw_dim());
    let mut start = 0;
    for i in 0..points.nrows() {
        let lo = timestamps[i] - window - 1e-9 * window.max(timestamps[i].abs());
        while timestamps[start] < lo {
            start += 1;
        }
        let count = (i - start + 1) as f64;
        for j in 0..points.ncols() {
            let s: f64 = (start..=i).map(|r| points[[r, j]]).sum();
            out[[i, j]] = s / count;
        }
    }
    Ok(out)
}

/// ROC of the "chart distance below threshold" neighbor test.
#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// Ascending, starting at 0 and ending at +∞.
    pub thresholds: Vec<f64>,
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
    pub auc: f64,
}

impl RocCurve {
    /// TPR at the given FPR by linear interpolation along the curve.
    pub fn tpr_at_fpr(&self, target: f64) -> f64 {
        for i in 1..self.fpr.len() {
            if self.fpr[i] >= target {
                let (f0, f1) = (self.fpr[i - 1], self.fpr[i]);
                let (t0, t1) = (self.tpr[i - 1], self.tpr[i]);
                if f1 == f0 {
                    return t1;
                }
                return t0 + (t1 - t0) * (target - f0) / (f1 - f0);
            }
        }
        *self.tpr.last().unwrap_or(&1.0)
    }
}

/// `count` log-spaced thresholds spanning the non-zero pairwise distances of
/// `points`.
pub fn default_thresholds(points: &Array2<f64>, count: usize) -> Vec<f64> {
    let n = points.nrows();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..n {
        for j in i + 1..n {
            let d = row_distance(points.row(i), points.row(j));
            if d > 0.0 {
                lo = lo.min(d);
                hi = hi.max(d);
            }
        }
    }
    if !(lo.is_finite() && hi > 0.0) || count < 2 {
        return vec![hi.max(1.0)];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp()).collect()
}

/// Proximity detection: a pair is declared neighboring when its chart
/// distance is strictly below the threshold, and truly neighboring when its
/// physical distance is strictly below `true_radius`. All unordered pairs
/// are counted. Threshold 0 and +∞ are always added as endpoints.
pub fn proximity_roc(
    chart_points: &Array2<f64>,
    true_positions: &[Point2],
    true_radius: f64,
    thresholds: &[f64],
) -> Result<RocCurve, AppError> {
    let n = chart_points.nrows();
    if n < 2 || true_positions.len() != n {
        return Err(AppError::InvalidInput("need at least two points with true positions".into()));
    }
    let per_row = par::map_range(n, |i| {
        let mut pos = Vec::new();
        let mut neg = Vec::new();
        for j in i + 1..n {
            let c = row_distance(chart_points.row(i), chart_points.row(j));
            let (a, b) = (true_positions[i], true_positions[j]);
            if (a[0] - b[0]).hypot(a[1] - b[1]) < true_radius {
                pos.push(c);
            } else {
                neg.push(c);
            }
        }
        (pos, neg)
    });
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    for (p, q) in per_row {
        pos.extend(p);
        neg.extend(q);
    }
    if pos.is_empty() {
        return Err(AppError::NoPositivePairs);
    }
    if neg.is_empty() {
        return Err(AppError::NoNegativePairs);
    }
    pos.sort_by(f64::total_cmp);
    neg.sort_by(f64::total_cmp);
    let mut ths: Vec<f64> = thresholds.iter().copied().filter(|t| *t > 0.0 && t.is_finite()).collect();
    ths.push(0.0);
    ths.push(f64::INFINITY);
    ths.sort_by(f64::total_cmp);
    ths.dedup();
    let below = |v: &[f64], t: f64| v.partition_point(|&d| d < t) as f64;
    let tpr: Vec<f64> = ths.iter().map(|&t| below(&pos, t) / pos.len() as f64).collect();
    let fpr: Vec<f64> = ths.iter().map(|&t| below(&neg, t) / neg.len() as f64).collect();
    let auc = fpr
        .windows(2)
        .zip(tpr.windows(2))
        .map(|(f, t)| (f[1] - f[0]) * (t[0] + t[1]) / 2.0)
        .sum();
    Ok(RocCurve { thresholds: ths, fpr, tpr, auc })
}
