use std::collections::BTreeMap;

use proptest::prelude::*;
use topoguard::community::connected_components;
use topoguard::tomato::{
    automato, bottleneck_distance, estimate_density, knn_graph, persistence_diagram, tomato_cluster, ClusterConfig,
    DensityScale,
};
use topoguard::Matrix;

fn points(max: usize) -> impl Strategy<Value = Matrix> {
    prop::collection::vec((-10.0..10.0f64, -10.0..10.0f64), 2..max)
        .prop_map(|p| Matrix::from_rows(&p.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>()))
}

/// Labels equal up to a renaming of cluster ids.
fn same_partition(a: &[usize], b: &[usize]) -> bool {
    let mut fwd = BTreeMap::new();
    let mut back = BTreeMap::new();
    a.iter().zip(b).all(|(&x, &y)| *fwd.entry(x).or_insert(y) == y && *back.entry(y).or_insert(x) == x)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn knn_lists_are_sorted_and_sized(x in points(40), k in 1usize..12) {
        let g = knn_graph(&x, k).unwrap();
        let n = x.nrows();
        for (i, list) in g.adjacency.iter().enumerate() {
            prop_assert_eq!(list.len(), k.min(n - 1));
            prop_assert!(list.iter().all(|&(j, d)| j != i && d >= 0.0));
            prop_assert!(list.windows(2).all(|w| w[0].1 <= w[1].1));
        }
    }

    #[test]
    fn labels_match_diagram(x in points(40), k in 1usize..8, tau in 0.0..4.0f64) {
        let g = knn_graph(&x, k).unwrap();
        let density = estimate_density(&g);
        let (labels, diagram) = tomato_cluster(&g, &density.log_values, tau).unwrap();
        prop_assert_eq!(labels.labels.len(), x.nrows());
        prop_assert_eq!(labels.count, diagram.count_at_least(tau));
        // ids are contiguous: every id below count is used
        let used: std::collections::BTreeSet<usize> = labels.labels.iter().copied().collect();
        prop_assert_eq!(used.into_iter().collect::<Vec<_>>(), (0..labels.count).collect::<Vec<_>>());
        prop_assert!(diagram.pairs.iter().all(|p| p.prominence() >= 0.0));
        let components = connected_components(&g.symmetric_adjacency()).len();
        prop_assert_eq!(diagram.essential_count(), components);
    }

    #[test]
    fn raising_tau_never_adds_clusters(x in points(40), k in 1usize..8, t1 in 0.0..4.0f64, t2 in 0.0..4.0f64) {
        let g = knn_graph(&x, k).unwrap();
        let density = estimate_density(&g);
        let (lo, hi) = (t1.min(t2), t1.max(t2));
        let c_lo = tomato_cluster(&g, &density.log_values, lo).unwrap().0.count;
        let c_hi = tomato_cluster(&g, &density.log_values, hi).unwrap().0.count;
        prop_assert!(c_hi <= c_lo);
    }

    #[test]
    fn permuting_points_permutes_labels(x in points(30), k in 1usize..6, tau in 0.0..3.0f64, perm_seed in any::<u64>()) {
        let n = x.nrows();
        let mut perm: Vec<usize> = (0..n).collect();
        // Fisher-Yates driven by a simple LCG so the case stays shrinkable
        let mut s = perm_seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            perm.swap(i, (s >> 33) as usize % (i + 1));
        }
        let y = x.select_rows(&perm);
        let g = knn_graph(&x, k).unwrap();
        // mutual neighbours share a k-th distance, so break density ties with a
        // per-point offset that travels with the point
        let d: Vec<f64> =
            estimate_density(&g).log_values.iter().enumerate().map(|(i, v)| v + i as f64 * 1e-9).collect();
        let a = tomato_cluster(&g, &d, tau).unwrap().0;
        let gy = knn_graph(&y, k).unwrap();
        let dy: Vec<f64> = perm.iter().map(|&i| d[i]).collect();
        let b = tomato_cluster(&gy, &dy, tau).unwrap().0;
        let a_permuted: Vec<usize> = perm.iter().map(|&i| a.labels[i]).collect();
        prop_assert!(same_partition(&a_permuted, &b.labels));
    }

    #[test]
    fn diagram_is_at_zero_bottleneck_from_itself(x in points(40), k in 1usize..8) {
        let g = knn_graph(&x, k).unwrap();
        let d = persistence_diagram(&g.symmetric_adjacency(), estimate_density(&g).scaled(DensityScale::Log));
        prop_assert_eq!(bottleneck_distance(&d, &d), 0.0);
    }

    #[test]
    fn automato_labels_every_point(x in points(30), k in 1usize..6, seed in any::<u64>()) {
        let cfg = ClusterConfig { bootstrap_replicates: 5, ..ClusterConfig::default() };
        let out = automato(&x, k, &cfg, seed).unwrap();
        prop_assert_eq!(out.labels.labels.len(), x.nrows());
        prop_assert!(out.labels.labels.iter().all(|&l| l < out.labels.count));
        prop_assert!(out.tau >= 0.0);
        let again = automato(&x, k, &cfg, seed).unwrap();
        prop_assert_eq!(again.labels, out.labels);
    }
}
