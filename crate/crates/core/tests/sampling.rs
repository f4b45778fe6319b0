mod common;

use common::*;
use nalgebra::DMatrix;
use pfm_core::models::{ModelOptions, NodeWeights, Partition, Scale};
use pfm_core::par::derive_seed;
use pfm_core::sampling::{
    degree_concentration_check, degree_concentration_monte_carlo, degree_failure_bound, read_edge_list,
    sample_adjacency, sample_degrees, sample_matrix, write_edge_list, SampledGraph,
};
use pfm_core::{hpfm_matrix, Execution, PfmModel};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn six_node_model() -> PfmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let frame = random_frame(2, &mut rng);
    let p = Partition::from_sizes(&[3, 3]).unwrap();
    let w = NodeWeights::new(vec![0.4, 0.7, 0.9, 0.5, 0.8, 0.6]).unwrap();
    hpfm_matrix(&frame, &p, &w, Scale::Fixed(0.6), ModelOptions::default()).unwrap()
}

fn dense(g: &SampledGraph) -> DMatrix<f64> {
    g.adjacency.to_dense()
}

#[test]
fn complete_graph_from_all_ones() {
    let g = sample_matrix(&DMatrix::from_element(7, 7, 1.0), false, 11);
    assert_eq!(g.edge_count(), 21);
    assert!(g.degrees.iter().all(|&d| d == 6.0));
    assert_eq!(g.d_hat_min, 6.0);
}

#[test]
fn self_loops_count_once() {
    let g = sample_matrix(&DMatrix::from_element(4, 4, 1.0), true, 0);
    assert!(g.degrees.iter().all(|&d| d == 4.0));
    assert_eq!(g.edge_count(), 10);
}

#[test]
fn entry_means_match_probabilities() {
    let model = six_node_model();
    let seeds = 10_000;
    let mut mean = DMatrix::<f64>::zeros(6, 6);
    for r in 0..seeds {
        mean += dense(&sample_adjacency(&model, derive_seed(99, r)));
    }
    mean /= seeds as f64;
    for i in 0..6 {
        for j in 0..6 {
            let p = model.s[(i, j)];
            let se = (p * (1.0 - p) / seeds as f64).sqrt();
            assert!((mean[(i, j)] - p).abs() <= 4.0 * se.max(1e-12), "({i},{j}) mean {} vs {p}", mean[(i, j)]);
        }
    }
}

#[test]
fn degree_means_converge() {
    let model = random_hpfm(3, 10, 20, &mut ChaCha8Rng::seed_from_u64(8));
    let seeds = 2000;
    let (mean, _) = degree_concentration_monte_carlo(&model, &[], seeds, 5, Execution::Parallel);
    for (m, d) in mean.iter().zip(&model.degrees) {
        assert!((m - d).abs() <= 4.0 * (d / seeds as f64).sqrt(), "mean {m} vs {d}");
    }
}

#[test]
fn chernoff_bound_holds_empirically() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let frame = random_frame(2, &mut rng);
    let p = Partition::from_sizes(&[100, 100]).unwrap();
    let w = NodeWeights::uniform(200, 0.5, 1.0, &mut rng).unwrap();
    let model = hpfm_with_target(&frame, &p, &w, 20.0, ModelOptions::default()).unwrap();
    let (_, reports) = degree_concentration_monte_carlo(&model, &[2.0], 1000, 77, Execution::Parallel);
    let r = &reports[0];
    assert!(r.within(3.0), "worst excess {} se", r.worst_excess_in_se);
    let d_min = model.degrees.iter().copied().fold(f64::INFINITY, f64::min);
    let worst = degree_failure_bound(2.0, d_min);
    assert!((worst - 2.0 * (-4.0 / (2.0 + 2.0 / d_min.sqrt())).exp()).abs() < 1e-15);
}

#[test]
fn huge_epsilon_never_fails() {
    let model = six_node_model();
    let (_, reports) = degree_concentration_monte_carlo(&model, &[1e6], 50, 1, Execution::Sequential);
    assert!(reports[0].failure_fraction.iter().all(|&f| f == 0.0));
    assert!(reports[0].failure_bound.iter().all(|&b| 1.0 - b == 1.0));
}

#[test]
fn deterministic_matrix_has_no_deviation() {
    let mut s = DMatrix::from_element(6, 6, 1.0);
    for i in 0..6 {
        s[(i, i)] = 0.0;
    }
    let model = PfmModel::from_matrix(
        s,
        Partition::from_sizes(&[6]).unwrap(),
        pfm_core::ModelKind::Pfm,
        ModelOptions {
            allow_self_loops: false,
            ..ModelOptions::default()
        },
        None,
    )
    .unwrap();
    let g = sample_adjacency(&model, 4);
    let report = degree_concentration_check(&model, &g, 0.5);
    assert!(report.deviations.iter().all(|&x| x == 0.0));
    assert_eq!(report.violations, 0);
}

#[test]
fn sampled_degrees_agree_with_graph() {
    let model = random_pfm(3, 5, 15, &mut ChaCha8Rng::seed_from_u64(2));
    for seed in 0..20 {
        assert_eq!(sample_degrees(&model, seed), sample_adjacency(&model, seed).degrees);
    }
}

#[test]
fn edge_list_round_trip() {
    let model = random_hpfm(2, 10, 30, &mut ChaCha8Rng::seed_from_u64(4));
    let g = sample_adjacency(&model, 13);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("graph.csv");
    write_edge_list(&g, &path).unwrap();
    let back = read_edge_list(&path, Some(model.n())).unwrap();
    assert_eq!(back, g);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn adjacency_is_symmetric_binary(seed in any::<u64>(), model_seed in 0u64..1000) {
        let model = random_pfm(3, 3, 12, &mut ChaCha8Rng::seed_from_u64(model_seed));
        let g = sample_adjacency(&model, seed);
        let a = dense(&g);
        prop_assert!(a == a.transpose());
        prop_assert!(a.iter().all(|&x| x == 0.0 || x == 1.0));
        for i in 0..model.n() {
            prop_assert_eq!(a.row(i).sum(), g.degrees[i]);
        }
        if !model.allow_self_loops {
            prop_assert!((0..model.n()).all(|i| a[(i, i)] == 0.0));
        }
        prop_assert_eq!(sample_adjacency(&model, seed), g);
    }
}
