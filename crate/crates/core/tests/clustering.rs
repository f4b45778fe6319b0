mod common;

use common::*;
use nalgebra::DMatrix;
use pfm_core::clustering::{
    confusion_matrix, kmeans, lloyd, max_weight_assignment, min_cross_cluster_distance2, misclustering_rate,
    separation_gmax, KmeansOptions,
};
use pfm_core::models::{ModelOptions, NodeWeights, Partition, Scale};
use pfm_core::spectral::top_k_eigen;
use pfm_core::{hpfm_matrix, sbm_pq_frame, Error, Execution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute_rate(found: &[usize], truth: &[usize], k: usize) -> f64 {
    let best = permutations(k)
        .iter()
        .map(|phi| found.iter().zip(truth).filter(|(f, t)| phi[**f] == **t).count())
        .max()
        .unwrap();
    (found.len() - best) as f64 / found.len() as f64
}

fn labels_strategy(k: usize, n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    // every community of the truth is nonempty
    (prop::collection::vec(0..k, n), prop::collection::vec(0..k, n)).prop_map(move |(mut t, f)| {
        for (c, slot) in t.iter_mut().take(k).enumerate() {
            *slot = c;
        }
        (t, f)
    })
}

#[test]
fn equal_shares_give_two_k() {
    for k in 2..6 {
        let sizes = vec![8; k];
        let frame = sbm_pq_frame(0.6, 0.1, &sizes).unwrap();
        let p = Partition::from_sizes(&sizes).unwrap();
        let w = NodeWeights::new(vec![0.5; 8 * k]).unwrap();
        let model = hpfm_matrix(&frame, &p, &w, Scale::Fixed(1.0), ModelOptions::default()).unwrap();
        let sep = separation_gmax(&model.frame, &model).unwrap();
        assert!((sep.c_max - 1.0).abs() < 1e-12 && (sep.c_min - 1.0).abs() < 1e-12);
        assert!((sep.g_max - 2.0 * k as f64).abs() < 1e-9, "k={k}: {}", sep.g_max);
    }
}

#[test]
fn expected_pipeline_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    let mut checked = 0;
    for _ in 0..30 {
        let model = random_hpfm(3, 5, 20, &mut rng);
        let sep = separation_gmax(&model.frame, &model).unwrap();
        let emb = top_k_eigen(&model.laplacian(), 3, Some(&model.degrees)).unwrap();
        if sep.g_max <= 0.0 || emb.degenerate_gap {
            continue;
        }
        checked += 1;
        let v = emb.v.unwrap();
        let observed = min_cross_cluster_distance2(&v, &model.partition);
        assert!(observed >= sep.g_max / model.d_tot - 1e-10, "{observed} < {}", sep.g_max / model.d_tot);
        let c = kmeans(&v, 3, &KmeansOptions::default()).unwrap();
        assert_eq!(misclustering_rate(&c.labels, &model.partition).unwrap(), 0.0);
    }
    assert!(checked >= 10, "only {checked} models had g_max > 0");
}

#[test]
fn too_few_distinct_points() {
    let points = DMatrix::from_row_slice(4, 1, &[1.0, 1.0, 2.0, 2.0]);
    assert!(matches!(
        kmeans(&points, 3, &KmeansOptions::default()),
        Err(Error::DegenerateInput { k: 3, distinct: 2 })
    ));
}

#[test]
fn restarts_agree_across_execution_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let points = DMatrix::from_fn(200, 3, |_, _| rng.random_range(0.0..1.0));
    let seq = kmeans(&points, 4, &KmeansOptions { execution: Execution::Sequential, seed: 5, ..Default::default() }).unwrap();
    let par = kmeans(&points, 4, &KmeansOptions { execution: Execution::Parallel, seed: 5, ..Default::default() }).unwrap();
    assert_eq!(seq, par);
}

#[test]
fn confusion_counts_every_node() {
    let truth = Partition::from_labels(vec![0, 0, 1, 1, 2, 2, 2], 3).unwrap();
    let m = confusion_matrix(&[2, 2, 0, 1, 1, 1, 1], &truth).unwrap();
    assert_eq!(m, vec![vec![0, 1, 0], vec![0, 1, 3], vec![2, 0, 0]]);
    assert!((misclustering_rate(&[2, 2, 0, 1, 1, 1, 1], &truth).unwrap() - 1.0 / 7.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn misclustering_properties((truth, found) in (2usize..6).prop_flat_map(|k| labels_strategy(k, 3 * k + 5)), shift in 1usize..5) {
        let k = truth.iter().max().unwrap() + 1;
        let part = Partition::from_labels(truth.clone(), k).unwrap();
        prop_assert_eq!(misclustering_rate(&truth, &part).unwrap(), 0.0);
        let rate = misclustering_rate(&found, &part).unwrap();
        prop_assert!(rate <= 1.0 - 1.0 / k as f64 + 1e-15);
        prop_assert_eq!(rate, brute_rate(&found, &truth, k));
        let relabelled: Vec<usize> = found.iter().map(|l| (l + shift) % k).collect();
        prop_assert_eq!(misclustering_rate(&relabelled, &part).unwrap(), rate);
        // swapping the roles of the two labelings gives the same overlap
        let found_k = found.iter().max().unwrap() + 1;
        if found_k == k && (0..k).all(|c| found.contains(&c)) {
            let swapped = Partition::from_labels(found.clone(), k).unwrap();
            prop_assert_eq!(misclustering_rate(&truth, &swapped).unwrap(), rate);
        }
    }

    #[test]
    fn assignment_is_optimal(k in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w: Vec<Vec<f64>> = (0..k).map(|_| (0..k).map(|_| rng.random_range(0.0..10.0)).collect()).collect();
        let phi = max_weight_assignment(&w);
        let mut sorted = phi.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..k).collect::<Vec<_>>());
        let got: f64 = phi.iter().enumerate().map(|(r, &c)| w[r][c]).sum();
        let best = permutations(k)
            .iter()
            .map(|p| p.iter().enumerate().map(|(r, &c)| w[r][c]).sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((got - best).abs() < 1e-9);
    }

    #[test]
    fn lloyd_objective_never_rises(seed in any::<u64>(), k in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = DMatrix::from_fn(60, 2, |_, _| rng.random_range(-1.0..1.0));
        let init = DMatrix::from_fn(k, 2, |r, c| points[(r * 7, c)]);
        let (c, trace) = lloyd(&points, init, 100);
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        prop_assert!(c.objective >= 0.0);
        prop_assert!(c.labels.iter().all(|&l| l < k));
    }
}
