mod common;

use chartlab::apps::{cell_association, out_of_sample_map, proximity_roc};
use chartlab::dr::{build_knn_graph, laplacian_matrix, pca_embed, WeightMode};
use chartlab::features::{extract_features, feature_distance_matrix};
use chartlab::linalg::euclidean_distances;
use chartlab::metrics::{align_similarity, continuity, kruskal_stress, trustworthiness};
use chartlab::nn::{mine_triplets, NnError, TripletMiningConfig};
use chartlab::sim::steering_vector;
use chartlab::{ChannelChart, CsiSample, FeatureConfig, FeatureVector, Method, NormMode, Transform, TrainingMeta};
use common::*;
use ndarray::Array2;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

fn chart_of(points: Array2<f64>) -> ChannelChart {
    let n = points.nrows() as u64;
    ChannelChart::new(points, (0..n).collect(), Method::Pca, TrainingMeta::default()).unwrap()
}

fn csi(seed: u64, antennas: usize, subcarriers: usize) -> CsiSample {
    let mut r = rng(seed);
    let matrix = Array2::from_shape_simple_fn((antennas, subcarriers), || {
        Complex64::new(r.random_range(-1.0..1.0), r.random_range(-1.0..1.0))
    });
    CsiSample { matrix, timestamp: 0.0, true_position: None, sample_id: seed }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_are_similarity_invariant(
        seed in any::<u64>(),
        n in 12usize..50,
        theta in 0.0..std::f64::consts::TAU,
        mirror in any::<bool>(),
        scale in 0.05f64..20.0,
        tx in -100.0f64..100.0,
        ty in -100.0f64..100.0,
    ) {
        let mut r = rng(seed);
        let reference = random_points(&mut r, n, 2, 10.0);
        let chart = &reference + &random_points(&mut r, n, 2, 3.0);
        let moved = similarity_2d(&chart, theta, mirror, scale, [tx, ty]);
        let dr = euclidean_distances(&reference);
        let (d0, d1) = (euclidean_distances(&chart), euclidean_distances(&moved));
        for k in 1..n.div_ceil(2).min(6) {
            prop_assert!((trustworthiness(&dr, &d0, k).unwrap() - trustworthiness(&dr, &d1, k).unwrap()).abs() < 1e-9);
            prop_assert!((continuity(&dr, &d0, k).unwrap() - continuity(&dr, &d1, k).unwrap()).abs() < 1e-9);
        }
        prop_assert!((kruskal_stress(&dr, &d0).unwrap() - kruskal_stress(&dr, &d1).unwrap()).abs() < 1e-9);
        let (a0, a1) = (align_similarity(&chart, &reference).unwrap(), align_similarity(&moved, &reference).unwrap());
        prop_assert!((a0.rmse - a1.rmse).abs() < 1e-9);
    }

    #[test]
    fn continuity_is_dual_and_metrics_stay_in_range(seed in any::<u64>(), n in 5usize..50, grid in any::<bool>()) {
        let mut r = rng(seed);
        let (a, b) = if grid {
            (grid_points(&mut r, n, 2, 4), grid_points(&mut r, n, 3, 3))
        } else {
            (random_points(&mut r, n, 3, 1.0), random_points(&mut r, n, 2, 1.0))
        };
        let (da, db) = (euclidean_distances(&a), euclidean_distances(&b));
        for k in (1..n).filter(|&k| 2 * k < n) {
            let tw = trustworthiness(&da, &db, k).unwrap();
            let ct = continuity(&db, &da, k).unwrap();
            prop_assert_eq!(continuity(&da, &db, k).unwrap(), trustworthiness(&db, &da, k).unwrap());
            prop_assert!((0.0..=1.0).contains(&tw) && (0.0..=1.0).contains(&ct));
            prop_assert_eq!(tw, brute_trustworthiness(&da, &db, k));
        }
    }

    #[test]
    fn laplacian_is_psd_with_zero_row_sums(seed in any::<u64>(), n in 6usize..40, k in 1usize..5, gaussian in any::<bool>()) {
        let mut r = rng(seed);
        let d = euclidean_distances(&random_points(&mut r, n, 3, 1.0));
        let mode = if gaussian { WeightMode::Gaussian { sigma: None } } else { WeightMode::Binary };
        let g = build_knn_graph(&d, k.min(n - 1), mode).unwrap();
        let l = laplacian_matrix(&g);
        for i in 0..n {
            prop_assert!(l.row(i).sum().abs() < 1e-12);
            for j in 0..n {
                prop_assert_eq!(l[[i, j]], l[[j, i]]);
            }
        }
        for _ in 0..10 {
            let v = random_points(&mut r, n, 1, 1.0);
            let q = v.t().dot(&l).dot(&v)[[0, 0]];
            prop_assert!(q >= -1e-9);
        }
    }

    #[test]
    fn features_ignore_global_phase(seed in any::<u64>(), phi in 0.0..std::f64::consts::TAU, t in 0usize..3, unit in any::<bool>()) {
        let s = csi(seed, 8, 16);
        let rotated = CsiSample { matrix: s.matrix.mapv(|v| v * Complex64::from_polar(1.0, phi)), ..s.clone() };
        let transform = [Transform::BeamspaceMagnitude, Transform::DelayProfile, Transform::RawSecondMoment][t];
        let normalization = if unit { NormMode::UnitNorm } else { NormMode::PathlossScaled { beta: 0.7 } };
        let cfg = FeatureConfig { transform, normalization, ..FeatureConfig::beamspace(2, 4) };
        let (a, b) = (extract_features(&s, &cfg).unwrap(), extract_features(&rotated, &cfg).unwrap());
        for (x, y) in a.values.iter().zip(&b.values) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
        if unit {
            let norm = a.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn feature_distances_are_a_metric(seed in any::<u64>(), n in 2usize..25, f in 1usize..10) {
        let mut r = rng(seed);
        let feats: Vec<FeatureVector> = (0..n)
            .map(|i| FeatureVector {
                values: (0..f).map(|_| r.random_range(-1.0..1.0)).collect(),
                timestamp: 0.0,
                sample_id: i as u64,
                norm_mode: NormMode::Raw,
            })
            .collect();
        let d = feature_distance_matrix(&feats).unwrap();
        for i in 0..n {
            prop_assert_eq!(d[[i, i]], 0.0);
            for j in 0..n {
                prop_assert!(d[[i, j]] >= 0.0);
                prop_assert_eq!(d[[i, j]], d[[j, i]]);
                for k in 0..n {
                    prop_assert!(d[[i, k]] <= d[[i, j]] + d[[j, k]] + 1e-9);
                }
            }
        }
    }

    #[test]
    fn steering_entries_have_unit_modulus(
        rows in 1usize..6, cols in 1usize..9, spacing in 0.1f64..2.0,
        az in 0.0..std::f64::consts::TAU, el in -1.5f64..1.5,
    ) {
        let dir = [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()];
        for a in steering_vector(rows, cols, spacing, dir) {
            prop_assert!((a.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn roc_is_monotone(seed in any::<u64>(), n in 5usize..60, radius in 1.0f64..20.0) {
        let mut r = rng(seed);
        let truth_pts = random_points(&mut r, n, 2, 20.0);
        let chart = &truth_pts + &random_points(&mut r, n, 2, 8.0);
        let truth: Vec<[f64; 2]> = truth_pts.rows().into_iter().map(|p| [p[0], p[1]]).collect();
        let thresholds: Vec<f64> = (1..40).map(|i| i as f64).collect();
        let Ok(roc) = proximity_roc(&chart, &truth, radius, &thresholds) else {
            return Ok(());
        };
        prop_assert_eq!((roc.fpr[0], roc.tpr[0]), (0.0, 0.0));
        prop_assert_eq!((*roc.fpr.last().unwrap(), *roc.tpr.last().unwrap()), (1.0, 1.0));
        for w in roc.fpr.windows(2).chain(roc.tpr.windows(2)) {
            prop_assert!(w[1] >= w[0]);
        }
        prop_assert!(roc.thresholds.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!((0.0..=1.0).contains(&roc.auc));
    }

    #[test]
    fn vote_ignores_training_order(seed in any::<u64>(), n in 8usize..60, k in 1usize..8) {
        let mut r = rng(seed);
        let pts = grid_points(&mut r, n, 2, 5);
        let labels: Vec<Option<usize>> = (0..n).map(|_| Some(r.random_range(0..4))).collect();
        let test = grid_points(&mut r, 15, 2, 5);
        let truth: Vec<usize> = (0..15).map(|_| r.random_range(0..4)).collect();
        let k = k.min(n);
        let base = cell_association(&chart_of(pts.clone()), &labels, &test, &truth, 4, k).unwrap();
        let mut perm: Vec<usize> = (0..n).collect();
        perm.shuffle(&mut r);
        let shuffled = pts.select(ndarray::Axis(0), &perm);
        let ids: Vec<u64> = perm.iter().map(|&i| i as u64).collect();
        let chart = ChannelChart::new(shuffled, ids, Method::Pca, TrainingMeta::default()).unwrap();
        let plabels: Vec<Option<usize>> = perm.iter().map(|&i| labels[i]).collect();
        let other = cell_association(&chart, &plabels, &test, &truth, 4, k).unwrap();
        prop_assert_eq!(base.predictions, other.predictions);
    }

    #[test]
    fn one_nearest_out_of_sample_returns_the_training_point(seed in any::<u64>(), n in 4usize..40) {
        let mut r = rng(seed);
        let x = random_points(&mut r, n, 5, 1.0);
        let feats: Vec<FeatureVector> = x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, row)| FeatureVector { values: row.to_vec(), timestamp: i as f64, sample_id: i as u64, norm_mode: NormMode::Raw })
            .collect();
        let chart = pca_embed(&feats, 2).unwrap();
        for (i, f) in feats.iter().enumerate() {
            prop_assert_eq!(out_of_sample_map(&chart, &feats, f, 1).unwrap(), chart.point(i).to_vec());
        }
    }

    #[test]
    fn mined_triplets_respect_time_constraints(seed in any::<u64>(), n in 30usize..300, close in 1.5f64..5.0, far in 6.0f64..40.0) {
        let mut r = rng(seed);
        let mut ts: Vec<f64> = (0..n).map(|i| i as f64 + r.random_range(0.0..0.5)).collect();
        ts.shuffle(&mut r);
        let cfg = TripletMiningConfig { t_close: close, t_far: far, triplets_per_epoch: 500, margin: 1.0 };
        // Samples are under 1.5 s apart, so every sample has a positive and
        // a negative exists exactly when the recording outlasts t_far.
        let span = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max) - ts.iter().copied().fold(f64::INFINITY, f64::min);
        if span < far {
            prop_assert!(matches!(mine_triplets(&ts, &cfg, seed), Err(NnError::InsufficientTemporalDiversity(_))));
            return Ok(());
        }
        let triplets = mine_triplets(&ts, &cfg, seed).unwrap();
        prop_assert_eq!(triplets.len(), 500);
        for t in &triplets {
            prop_assert!(t.anchor != t.positive);
            prop_assert!((ts[t.anchor] - ts[t.positive]).abs() <= close);
            prop_assert!((ts[t.anchor] - ts[t.negative]).abs() >= far);
        }
        prop_assert_eq!(triplets, mine_triplets(&ts, &cfg, seed).unwrap());
    }
}
