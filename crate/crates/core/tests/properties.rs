//! Property tests for the numeric building blocks.

use autoeval::baselines::{
    average_confidence, entropy_score_estimate, frechet_distance, prediction_score_estimate, GaussianSummary,
};
use autoeval::featureset;
use autoeval::regress::{fit, fit_with_validation, gradient_check, initial_model, Pair, RegressorModel, TrainConfig};
use autoeval::represent::kmeans::kmeans;
use autoeval::represent::sampling::farthest_point_indices;
use autoeval::represent::{
    assemble, build_reference_frame, canonical_rows, shape_of_points, KMeansParams, RepresentationOptions,
};
use autoeval::{Error, FeatureSet, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Greedy farthest-point selection written directly from its definition.
fn fps_oracle(points: &[Vec<f64>], s: usize) -> Vec<usize> {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n).collect();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut picked = Vec::new();
    let mut best = 0;
    for i in 1..points.len() {
        if sq(&points[i], &mean) > sq(&points[best], &mean) {
            best = i;
        }
    }
    picked.push(best);
    while picked.len() < s {
        let mut arg = None;
        let mut arg_d = f64::NEG_INFINITY;
        for i in 0..points.len() {
            if picked.contains(&i) {
                continue;
            }
            let nearest = picked
                .iter()
                .map(|&j| sq(&points[i], &points[j]))
                .fold(f64::INFINITY, f64::min);
            if nearest > arg_d {
                arg_d = nearest;
                arg = Some(i);
            }
        }
        picked.push(arg.unwrap());
    }
    picked
}

/// Rows of small integers so that exact distance ties are common.
fn grid_points() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=8, 1usize..=64).prop_flat_map(|(d, n)| {
        proptest::collection::vec(proptest::collection::vec((-3i32..=3).prop_map(f64::from), d), n)
    })
}

fn real_points(max_n: usize, max_d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    (1usize..=max_d, 2usize..=max_n)
        .prop_flat_map(|(d, n)| proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, d), n))
}

fn feature_set(points: &[Vec<f64>], labels: Vec<i32>, classes: usize) -> FeatureSet {
    let flat: Vec<f32> = points.iter().flatten().map(|&v| v as f32).collect();
    FeatureSet::new(points.len(), points[0].len(), flat, "prop")
        .unwrap()
        .with_labels(classes, labels)
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_matches_oracle_on_grids(points in grid_points(), s_seed in 0usize..8) {
        let s = 1 + s_seed % points.len().min(8);
        let m = Matrix::from_rows(&points).unwrap();
        prop_assert_eq!(farthest_point_indices(&m, s).unwrap(), fps_oracle(&points, s));
    }

    #[test]
    fn fps_matches_oracle_on_reals(points in real_points(64, 8), s_seed in 0usize..8) {
        let s = 1 + s_seed % points.len().min(8);
        let m = Matrix::from_rows(&points).unwrap();
        let idx = farthest_point_indices(&m, s).unwrap();
        let mut unique = idx.clone();
        unique.sort_unstable();
        unique.dedup();
        prop_assert_eq!(unique.len(), s);
        prop_assert_eq!(idx, fps_oracle(&points, s));
    }

    #[test]
    fn kmeans_objective_never_increases(points in real_points(60, 6), k in 1usize..6, seed in 0u64..1000) {
        prop_assume!(points.len() >= k);
        let m = Matrix::from_rows(&points).unwrap();
        let r = kmeans(&m, &KMeansParams { k, seed, max_iters: 100, tol: 0.0 }).unwrap();
        for w in r.objective_history.windows(2) {
            prop_assert!(w[1] <= w[0], "objective rose from {} to {}", w[0], w[1]);
        }
        prop_assert!(r.objective <= *r.objective_history.last().unwrap());
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points.iter().zip(&r.assignments).filter(|(_, &a)| a == c).map(|(p, _)| p).collect();
            prop_assert!(!members.is_empty());
            for j in 0..m.cols() {
                let mean = members.iter().map(|p| p[j]).sum::<f64>() / members.len() as f64;
                prop_assert!((r.centers.get(c, j) - mean).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn histogram_rows_sum_to_one_and_ignore_row_order(
        points in real_points(80, 5),
        shift in -30.0f64..30.0,
        rotate in 0usize..80,
    ) {
        let n = points.len();
        let source = feature_set(&points, vec![0; n], 1);
        let opts = RepresentationOptions { bins: 7, samples: 1, ..Default::default() };
        let frame = build_reference_frame(&source, &opts).unwrap();
        // shifted copies push mass outside the source range
        let moved: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|v| v + shift).collect()).collect();
        let m = Matrix::from_rows(&moved).unwrap();
        let shape = shape_of_points(&m, &frame).unwrap();
        for row in shape.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
        let mut permuted = moved.clone();
        permuted.rotate_left(rotate % n);
        permuted.reverse();
        let pm = Matrix::from_rows(&permuted).unwrap();
        prop_assert_eq!(shape_of_points(&pm, &frame).unwrap(), shape);
    }

    #[test]
    fn representation_ignores_row_order(points in real_points(40, 4), rotate in 0usize..40) {
        let n = points.len();
        prop_assume!(n >= 4);
        let labels: Vec<i32> = (0..n as i32).map(|i| i % 2).collect();
        let source = feature_set(&points, labels.clone(), 2);
        let opts = RepresentationOptions { bins: 5, samples: 3, ..Default::default() };
        let frame = build_reference_frame(&source, &opts).unwrap();
        let a = assemble(&source, &frame, &opts).unwrap();
        let mut order: Vec<usize> = (0..n).collect();
        order.rotate_left(rotate % n);
        let permuted: Vec<Vec<f64>> = order.iter().map(|&i| points[i].clone()).collect();
        let b = assemble(&feature_set(&permuted, labels, 2), &frame, &opts).unwrap();
        prop_assert_eq!(a.flat, b.flat);
    }

    #[test]
    fn canonical_rows_is_a_sorted_permutation(points in real_points(30, 3)) {
        let m = Matrix::from_rows(&points).unwrap();
        let c = canonical_rows(&m);
        let mut expected = points.clone();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        prop_assert_eq!(c.to_rows(), expected);
    }

    #[test]
    fn frechet_is_symmetric_and_zero_on_self(
        d in 1usize..5,
        raw in proptest::collection::vec(-2.0f64..2.0, 2 * 5 * 5 + 10),
    ) {
        let summary = |off: usize| {
            let mut a = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    a.set(i, j, raw[off + i * 5 + j]);
                }
            }
            // A A^T + I is symmetric positive definite
            let mut cov = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let v: f64 = (0..d).map(|k| a.get(i, k) * a.get(j, k)).sum();
                    cov.set(i, j, v + if i == j { 1.0 } else { 0.0 });
                }
            }
            GaussianSummary { mean: raw[50 + off / 10..50 + off / 10 + d].to_vec(), covariance: cov }
        };
        let p = summary(0);
        let q = summary(25);
        prop_assert!(frechet_distance(&p, &p).unwrap() <= 1e-8);
        let pq = frechet_distance(&p, &q).unwrap();
        let qp = frechet_distance(&q, &p).unwrap();
        prop_assert!((pq - qp).abs() <= 1e-8);
        prop_assert!(pq >= 0.0);
    }

    #[test]
    fn frechet_matches_diagonal_closed_form(
        stats in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0, 0.01f64..4.0, 0.01f64..4.0), 1..8),
    ) {
        let d = stats.len();
        let mut ca = Matrix::zeros(d, d);
        let mut cb = Matrix::zeros(d, d);
        let mut expected = 0.0;
        for (i, &(ma, mb, va, vb)) in stats.iter().enumerate() {
            ca.set(i, i, va);
            cb.set(i, i, vb);
            expected += (ma - mb).powi(2) + (va.sqrt() - vb.sqrt()).powi(2);
        }
        let a = GaussianSummary { mean: stats.iter().map(|s| s.0).collect(), covariance: ca };
        let b = GaussianSummary { mean: stats.iter().map(|s| s.1).collect(), covariance: cb };
        prop_assert!((frechet_distance(&a, &b).unwrap() - expected).abs() <= 1e-6);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(20))]

    #[test]
    fn analytic_gradients_match_finite_differences(
        seed in 0u64..10_000,
        dims in (1usize..6, 1usize..6, 1usize..5),
        target in 0.0f64..1.0,
    ) {
        let model = RegressorModel::random(&[dims.0, dims.1, dims.2, 1], seed);
        let rep: Vec<f64> = (0..dims.0).map(|i| ((seed + i as u64) % 7) as f64 / 3.0 - 1.0).collect();
        prop_assert!(gradient_check(&model, &rep, target, seed).unwrap() < 1e-4);
    }

    #[test]
    fn first_epoch_does_not_raise_training_loss(seed in any::<u64>()) {
        let pairs = toy_pairs(seed, 60);
        let cfg = TrainConfig { hidden: vec![32, 16], epochs: 1, seed, ..TrainConfig::default() };
        let train = &pairs[..50];
        let before = initial_model(train, &cfg).unwrap().mse(train).unwrap();
        let after = fit_with_validation(train, &pairs[50..], &cfg).unwrap().model.mse(train).unwrap();
        prop_assert!(after <= before, "{after} > {before}");
    }

    #[test]
    fn training_ignores_pair_order(seed in 0u64..1000, rotate in 1usize..30) {
        let mut pairs = toy_pairs(seed, 30);
        let cfg = TrainConfig { hidden: vec![8, 4], epochs: 3, seed, ..TrainConfig::default() };
        let a = fit(&pairs, &cfg).unwrap().model;
        pairs.rotate_left(rotate);
        pairs.reverse();
        let b = fit(&pairs, &cfg).unwrap().model;
        let probe = vec![0.3, -0.2, 1.0];
        prop_assert_eq!(a.predict(&probe).unwrap(), b.predict(&probe).unwrap());
    }
}

fn toy_pairs(seed: u64, n: usize) -> Vec<Pair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x: f64 = rng.random_range(-1.0..1.0);
            let z: f64 = rng.random_range(-1.0..1.0);
            Pair::new(vec![x, x * x, z], 0.5 + 0.3 * x - 0.1 * z)
        })
        .collect()
}

fn softmax_set() -> impl Strategy<Value = FeatureSet> {
    (1usize..30, 2usize..6).prop_flat_map(|(n, c)| {
        proptest::collection::vec(proptest::collection::vec(0.001f32..1.0, c), n).prop_map(move |rows| {
            let mut probs = Vec::with_capacity(n * c);
            for r in rows {
                let total: f32 = r.iter().sum();
                probs.extend(r.iter().map(|v| v / total));
            }
            FeatureSet::new(n, 1, vec![0.0; n], "soft")
                .unwrap()
                .with_softmax(c, probs)
                .unwrap()
        })
    })
}

fn any_feature_set() -> impl Strategy<Value = FeatureSet> {
    (1usize..12, 1usize..5, 2usize..4, any::<bool>(), any::<bool>()).prop_flat_map(|(n, d, c, soft, lab)| {
        (
            proptest::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), n * d),
            proptest::collection::vec(0usize..c, n),
        )
            .prop_map(move |(features, labels)| {
                let mut set = FeatureSet::new(n, d, features, "rt").unwrap();
                if soft {
                    let probs = (0..n)
                        .flat_map(|i| (0..c).map(move |j| if j == i % c { 1.0 } else { 0.0 }))
                        .collect();
                    set = set.with_softmax(c, probs).unwrap();
                }
                if lab {
                    set = set.with_labels(c, labels.iter().map(|&y| y as i32).collect()).unwrap();
                }
                set
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fset_round_trip_is_bit_exact(set in any_feature_set()) {
        let bytes = featureset::encode(&set).unwrap();
        let back = featureset::decode(&bytes, "rt").unwrap();
        prop_assert_eq!(featureset::encode(&back).unwrap(), bytes);
        let same_bits = back.features.iter().zip(&set.features).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same_bits);
    }

    #[test]
    fn truncated_payload_is_rejected(set in any_feature_set(), cut in 1usize..64) {
        let bytes = featureset::encode(&set).unwrap();
        let keep = bytes.len().saturating_sub(cut).max(featureset::HEADER_LEN);
        prop_assume!(keep < bytes.len());
        prop_assert!(matches!(featureset::decode(&bytes[..keep], "rt"), Err(Error::Format(_))));
    }

    #[test]
    fn threshold_estimators_are_monotone(set in softmax_set(), t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(prediction_score_estimate(&set, hi).unwrap() <= prediction_score_estimate(&set, lo).unwrap());
        prop_assert!(entropy_score_estimate(&set, lo).unwrap() <= entropy_score_estimate(&set, hi).unwrap());
    }

    #[test]
    fn estimators_ignore_row_order(set in softmax_set(), rotate in 0usize..30) {
        let c = set.classes;
        let mut rows: Vec<&[f32]> = set.softmax.as_ref().unwrap().chunks_exact(c).collect();
        rows.rotate_left(rotate % set.n);
        let probs: Vec<f32> = rows.concat();
        let other = FeatureSet::new(set.n, 1, vec![0.0; set.n], "soft").unwrap().with_softmax(c, probs).unwrap();
        prop_assert_eq!(prediction_score_estimate(&set, 0.5).unwrap(), prediction_score_estimate(&other, 0.5).unwrap());
        prop_assert_eq!(entropy_score_estimate(&set, 0.5).unwrap(), entropy_score_estimate(&other, 0.5).unwrap());
        prop_assert!((average_confidence(&set).unwrap() - average_confidence(&other).unwrap()).abs() <= 1e-12);
    }

    #[test]
    fn scaling_features_scales_components(points in real_points(30, 3), exp in -3i32..4) {
        let n = points.len();
        prop_assume!(n >= 3);
        // powers of two keep the f32 round trip exact
        let c = 2f64.powi(exp);
        let labels: Vec<i32> = (0..n as i32).map(|i| i % 2).collect();
        let opts = RepresentationOptions { bins: 6, samples: 2, include_global_mean: true, ..Default::default() };
        let base = feature_set(&points, labels.clone(), 2);
        let scaled_points: Vec<Vec<f64>> = points.iter().map(|p| p.iter().map(|v| v * c).collect()).collect();
        let scaled = feature_set(&scaled_points, labels, 2);
        let frame = build_reference_frame(&base, &opts).unwrap();
        let mut frame_c = frame.clone();
        frame_c.bin_edges = frame.bin_edges.scaled(c);
        frame_c.class_centroids = frame.class_centroids.scaled(c);
        let a = assemble(&base, &frame, &opts).unwrap();
        let b = assemble(&scaled, &frame_c, &opts).unwrap();
        prop_assert_eq!(&a.shape, &b.shape);
        for (x, y) in a.clusters.as_slice().iter().zip(b.clusters.as_slice()) {
            prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
        prop_assert_eq!(a.samples.scaled(c), b.samples);
        let (ga, gb) = (a.global_mean.unwrap(), b.global_mean.unwrap());
        for (x, y) in ga.iter().zip(&gb) {
            prop_assert!((x * c - y).abs() <= 1e-9 * (1.0 + y.abs()));
        }
    }
}
