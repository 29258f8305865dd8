use std::cmp::Ordering;
use std::collections::BinaryHeap;

use ndarray::Array2;

use super::{check_square, DrError};
use crate::par;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum WeightMode {
    Binary,
    /// `w = exp(−δ²/σ²)`; `None` picks σ as the median k-NN distance.
    Gaussian { sigma: Option<f64> },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub to: usize,
    pub weight: f64,
    /// Input-space distance of the edge.
    pub distance: f64,
}

/// k-nearest-neighbor graph, symmetrized by union.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborGraph {
    pub k: usize,
    /// Sorted by neighbor index; no self-loops.
    pub adjacency: Vec<Vec<Edge>>,
    pub symmetric: bool,
    /// Bandwidth actually used in Gaussian mode.
    pub sigma: Option<f64>,
}

impl NeighborGraph {
    pub fn num_nodes(&self) -> usize {
        self.adjacency.len()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i].iter().find(|e| e.to == j).map_or(0.0, |e| e.weight)
    }

    pub fn weight_matrix(&self) -> Array2<f64> {
        let n = self.num_nodes();
        let mut w = Array2::zeros((n, n));
        for (i, edges) in self.adjacency.iter().enumerate() {
            for e in edges {
                w[[i, e.to]] = e.weight;
            }
        }
        w
    }

    /// Number of connected components (edges treated as undirected).
    pub fn connected_components(&self) -> usize {
        let n = self.num_nodes();
        let mut seen = vec![false; n];
        let mut count = 0;
        let mut stack = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            count += 1;
            seen[s] = true;
            stack.push(s);
            while let Some(u) = stack.pop() {
                for e in &self.adjacency[u] {
                    if !seen[e.to] {
                        seen[e.to] = true;
                        stack.push(e.to);
                    }
                }
            }
        }
        count
    }
}

/// Indices of the `k` nearest neighbors of `i` (excluding `i`), closest
/// first; equal distances go to the lower index.
pub fn knn_indices(distances: &Array2<f64>, i: usize, k: usize) -> Vec<usize> {
    let n = distances.nrows();
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    let cmp = |&a: &usize, &b: &usize| distances[[i, a]].total_cmp(&distances[[i, b]]).then(a.cmp(&b));
    if k < idx.len() {
        idx.select_nth_unstable_by(k, cmp);
        idx.truncate(k);
    }
    idx.sort_by(cmp);
    idx
}

/// Builds the union-symmetrized k-NN graph of a distance matrix.
pub fn build_knn_graph(distances: &Array2<f64>, k: usize, mode: WeightMode) -> Result<NeighborGraph, DrError> {
    let n = check_square(distances)?;
    if k == 0 || k >= n {
        return Err(DrError::InvalidK { k, n });
    }
    let neighbors = par::map_range(n, |i| knn_indices(distances, i, k));
    let sigma = match mode {
        WeightMode::Binary => None,
        WeightMode::Gaussian { sigma: Some(s) } => {
            if !(s > 0.0 && s.is_finite()) {
                return Err(DrError::InvalidInput(format!("Gaussian bandwidth must be positive, got {s}")));
            }
            Some(s)
        }
        WeightMode::Gaussian { sigma: None } => {
            let mut all: Vec<f64> = neighbors
                .iter()
                .enumerate()
                .flat_map(|(i, nb)| nb.iter().map(move |&j| distances[[i, j]]))
                .collect();
            all.sort_by(f64::total_cmp);
            let median = all[all.len() / 2];
            let fallback = all.last().copied().unwrap_or(0.0);
            Some(if median > 0.0 { median } else if fallback > 0.0 { fallback } else { 1.0 })
        }
    };
    let weight = |dist: f64| match sigma {
        None => 1.0,
        Some(s) => (-(dist * dist) / (s * s)).exp(),
    };
    let mut adjacency: Vec<Vec<Edge>> = vec![Vec::new(); n];
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            let dist = distances[[i, j]];
            for (a, b) in [(i, j), (j, i)] {
                if !adjacency[a].iter().any(|e| e.to == b) {
                    adjacency[a].push(Edge { to: b, weight: weight(dist), distance: dist });
                }
            }
        }
    }
    for edges in &mut adjacency {
        edges.sort_by_key(|e| e.to);
    }
    Ok(NeighborGraph { k, adjacency, symmetric: true, sigma })
}

#[derive(PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl Ord for Frontier {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// All-pairs shortest-path lengths over graph edges weighted by their input
/// distance (Dijkstra from every node).
pub fn geodesic_distances(graph: &NeighborGraph) -> Result<Array2<f64>, DrError> {
    let n = graph.num_nodes();
    let comps = graph.connected_components();
    if comps > 1 {
        return Err(DrError::DisconnectedGraph(comps));
    }
    let rows = par::map_range(n, |s| {
        let mut dist = vec![f64::INFINITY; n];
        let mut heap = BinaryHeap::new();
        dist[s] = 0.0;
        heap.push(Frontier(0.0, s));
        while let Some(Frontier(d, u)) = heap.pop() {
            if d > dist[u] {
                continue;
            }
            for e in &graph.adjacency[u] {
                let nd = d + e.distance;
                if nd < dist[e.to] {
                    dist[e.to] = nd;
                    heap.push(Frontier(nd, e.to));
                }
            }
        }
        dist
    });
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            // Symmetrize against floating-point path-order differences.
            out[[i, j]] = if i < j { rows[i][j] } else { rows[j][i] };
        }
    }
    Ok(out)
}
