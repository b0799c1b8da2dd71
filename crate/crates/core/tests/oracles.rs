mod common;

use proptest::prelude::*;
use rand::Rng;

use micrec::encoder::{aggregate_modal, template_encode, ModelParams};
use micrec::features::{build_neighbor_index, FusionWeight, Modality, SimilarityMode};
use micrec::graph::DomainTag;
use micrec::numeric::{spmm, DenseMatrix, NormalizedAdjacency};

use common::*;

#[test]
fn template_encoding_matches_direct_formula() {
    let worst = template_encode_oracle(100, 11);
    assert!(worst <= 1e-12, "max deviation {worst:e}");
}

#[test]
fn propagation_matches_dense_power_series() {
    let worst = propagation_oracle(60, 12);
    assert!(worst <= 1e-10, "max deviation {worst:e}");
}

#[test]
fn neighbor_index_matches_brute_force() {
    let (mismatches, worst) = index_oracle(50, 13);
    assert_eq!(mismatches, 0);
    assert!(worst <= 1e-12, "score deviation {worst:e}");
}

#[test]
fn fused_similarity_symmetric_and_scale_invariant() {
    let (asym, scale) = similarity_symmetry_and_scale(500, 14);
    assert!(asym <= 1e-12 && scale <= 1e-12, "asymmetry {asym:e}, scale deviation {scale:e}");
}

#[test]
fn neighbor_lists_survive_feature_rescaling() {
    let mut rng = rng(15);
    for _ in 0..20 {
        let n = rng.gen_range(2..40);
        let t = random_features(n, 5, Modality::Text, &mut rng);
        let v = random_features(n, 3, Modality::Visual, &mut rng);
        let c: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.gen_range(-2.0..2.0))).collect();
        let scale = |m: &micrec::features::FeatureMatrix, modality| {
            let rows: Vec<Vec<f64>> = (0..n).map(|r| m.row(r).iter().map(|x| x * c[r]).collect()).collect();
            micrec::features::FeatureMatrix::from_rows(modality, &rows).unwrap()
        };
        let mode = SimilarityMode::Fused(FusionWeight::new(0.9).unwrap());
        let a = build_neighbor_index(&t, &v, mode, 3).unwrap();
        let b = build_neighbor_index(&scale(&t, Modality::Text), &scale(&v, Modality::Visual), mode, 3).unwrap();
        for q in 0..n {
            assert_eq!(a.neighbors(q), b.neighbors(q));
        }
    }
}

#[test]
fn metrics_match_brute_force() {
    assert_eq!(metric_oracle(200, 16), 0);
}

#[test]
fn random_scores_reach_chance_recall() {
    let (mean, expected, sigma) = random_recall_check(20);
    assert!((mean - expected).abs() <= 3.0 * sigma, "mean {mean} vs {expected} ± {}", 3.0 * sigma);
}

fn dense_of(m: &DenseMatrix<f64>) -> Vec<f64> {
    m.as_slice().to_vec()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spmm_is_linear(seed in 0u64..10_000, a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let g = random_graph(DomainTag::A, r.gen_range(1..8), r.gen_range(1..8), 0.4, &mut r);
        let adj = NormalizedAdjacency::<f64>::from_user_adjacency(g.user_adjacency(), g.n_items()).unwrap();
        let n = adj.n_nodes();
        let x = DenseMatrix::from_fn(n, 3, |_, _| r.gen_range(-1.0..1.0));
        let y = DenseMatrix::from_fn(n, 3, |_, _| r.gen_range(-1.0..1.0));
        let mut comb = x.clone();
        comb.scale(a);
        comb.add_scaled(&y, b);
        let lhs = spmm(&adj, &comb).unwrap();
        let mut rhs = spmm(&adj, &x).unwrap();
        rhs.scale(a);
        rhs.add_scaled(&spmm(&adj, &y).unwrap(), b);
        for (p, q) in dense_of(&lhs).iter().zip(dense_of(&rhs)) {
            prop_assert!((p - q).abs() <= 1e-12);
        }
    }

    #[test]
    fn normalized_adjacency_is_symmetric_with_unit_spectral_bound(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let g = random_graph(DomainTag::B, r.gen_range(1..8), r.gen_range(1..8), 0.4, &mut r);
        let adj = NormalizedAdjacency::<f64>::from_user_adjacency(g.user_adjacency(), g.n_items()).unwrap();
        let d = adj.to_dense();
        let n = adj.n_nodes();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((d.get(i, j) - d.get(j, i)).abs() <= 1e-15);
            }
        }
        // ‖Â x‖ ≤ ‖x‖ for the symmetric normalization
        let x = DenseMatrix::from_fn(n, 1, |_, _| r.gen_range(-1.0..1.0));
        let y = spmm(&adj, &x).unwrap();
        prop_assert!(y.squared_norm() <= x.squared_norm() * (1.0 + 1e-12));
    }

    #[test]
    fn template_encoding_is_linear_in_parameters(seed in 0u64..10_000, c in -2.0f64..2.0) {
        let mut r = rng(seed);
        let g = random_graph(DomainTag::A, r.gen_range(1..7), r.gen_range(1..7), 0.4, &mut r);
        let dims = (g.template_users().len(), g.template_items().len());
        let p = ModelParams::<f64>::init(3, [dims, (1, 1)], &mut r).domains[0].clone();
        let q = ModelParams::<f64>::init(3, [dims, (1, 1)], &mut r).domains[0].clone();
        let mut pq = p.clone();
        pq.user_templates.add_scaled(&q.user_templates, c);
        pq.item_templates.add_scaled(&q.item_templates, c);
        let alpha = r.gen_range(0.5..1.0);
        let lhs = template_encode(&g, &pq, alpha);
        let mut rhs = template_encode(&g, &p, alpha);
        rhs.add_scaled(&template_encode(&g, &q, alpha), c);
        for (x, y) in dense_of(&lhs).iter().zip(dense_of(&rhs)) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn aggregation_adds_neighbor_mean_and_skips_unseen(seed in 0u64..10_000) {
        let mut r = rng(seed);
        let n_items = r.gen_range(2..10);
        let g = random_graph(DomainTag::A, r.gen_range(1..6), n_items, 0.4, &mut r);
        let t = random_features(n_items, 3, Modality::Text, &mut r);
        let v = random_features(n_items, 3, Modality::Visual, &mut r);
        let mode = SimilarityMode::Fused(FusionWeight::new(0.9).unwrap());
        let idx = micrec::features::build_domain_index(&g, &t, &v, mode, 2, micrec::features::IndexScope::Seen).unwrap();
        let rows = g.n_users() + g.n_items();
        let x = DenseMatrix::from_fn(rows, 2, |_, _| r.gen_range(-1.0..1.0));
        let agg = aggregate_modal(&x, &idx, g.n_users());
        for u in 0..g.n_users() {
            let mut want: Vec<f64> = x.row(u).to_vec();
            for &w in idx.users.neighbors(u) {
                for (a, b) in want.iter_mut().zip(x.row(w)) {
                    *a += b / 2.0;
                }
            }
            for (a, b) in agg.row(u).iter().zip(&want) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            if !g.population().is_seen_user(u) {
                prop_assert_eq!(agg.row(u), x.row(u));
            }
        }
    }
}
