use std::collections::BTreeSet;

use proptest::prelude::*;
use topoguard::dataio::CustomerFeatureMatrix;
use topoguard::mapper::{axis_intervals, build_cover, build_mapper, MapperParams};
use topoguard::tomato::ClusterConfig;
use topoguard::Matrix;

fn features() -> impl Strategy<Value = CustomerFeatureMatrix> {
    prop::collection::vec(prop::array::uniform4(-5.0..5.0f64), 3..60).prop_map(|rows| {
        let ids = (0..rows.len()).map(|i| format!("c{i:03}")).collect();
        let names = ["a", "b", "c", "d"].map(String::from).to_vec();
        CustomerFeatureMatrix::new(ids, names, Matrix::from_rows(&rows), true).unwrap()
    })
}

fn params() -> impl Strategy<Value = MapperParams> {
    (0.05..0.6f64, 1usize..6, 1usize..6).prop_map(|(g, r, k)| MapperParams::new(g, r, k).unwrap())
}

fn cluster() -> ClusterConfig {
    ClusterConfig { bootstrap_replicates: 5, ..ClusterConfig::default() }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn cover_reaches_every_point(pts in prop::collection::vec((-3.0..3.0f64, -3.0..3.0f64), 1..50),
                                 g in 0.0..0.9f64, r in 1usize..8) {
        let x = Matrix::from_rows(&pts.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>());
        let cover = build_cover(&x, g, r).unwrap();
        for (i, &(a, b)) in pts.iter().enumerate() {
            prop_assert!(!cover.index[i].is_empty());
            for &p in &cover.index[i] {
                prop_assert!(cover.patches[p].contains(a, b));
            }
            let all: Vec<usize> = (0..cover.patches.len()).filter(|&p| cover.patches[p].contains(a, b)).collect();
            prop_assert_eq!(&cover.index[i], &all);
        }
    }

    #[test]
    fn consecutive_intervals_overlap_by_gain(lo in -5.0..5.0f64, width in 0.1..10.0f64, g in 0.0..0.9f64, r in 2usize..10) {
        let iv = axis_intervals(lo, lo + width, r, g);
        prop_assert_eq!(iv.len(), r);
        prop_assert_eq!(iv[0].0, lo);
        prop_assert_eq!(iv[r - 1].1, lo + width);
        let base = width / r as f64;
        for w in iv.windows(2) {
            prop_assert!((w[0].1 - w[1].0 - g * base).abs() < 1e-9 * width.max(1.0));
        }
    }

    #[test]
    fn graph_is_the_nerve_of_its_nodes(x in features(), theta in params(), seed in any::<u64>()) {
        let graph = build_mapper(&x, &theta, &cluster(), seed).unwrap();
        let edges: BTreeSet<(usize, usize)> = graph.edges().iter().copied().collect();
        let nodes = graph.nodes();
        for a in 0..nodes.len() {
            prop_assert!(nodes[a].size() >= 1);
            for b in a + 1..nodes.len() {
                let shared = nodes[a].members.iter().any(|m| nodes[b].members.binary_search(m).is_ok());
                if nodes[a].patch_id == nodes[b].patch_id {
                    prop_assert!(!shared, "clusters of one patch overlap");
                    prop_assert!(!edges.contains(&(a, b)));
                } else {
                    prop_assert_eq!(shared, edges.contains(&(a, b)));
                }
            }
        }
    }

    #[test]
    fn node_sizes_count_multi_membership(x in features(), theta in params(), seed in any::<u64>()) {
        let graph = build_mapper(&x, &theta, &cluster(), seed).unwrap();
        let m = x.len();
        let total: usize = graph.node_sizes().iter().sum();
        let multi = (0..m).any(|c| graph.nodes_of(c).len() > 1);
        prop_assert!((0..m).all(|c| !graph.nodes_of(c).is_empty()));
        prop_assert!(total >= m);
        prop_assert_eq!(total == m, !multi);
    }

    #[test]
    fn same_inputs_give_same_graph(x in features(), theta in params(), seed in any::<u64>()) {
        let a = build_mapper(&x, &theta, &cluster(), seed).unwrap();
        let b = build_mapper(&x, &theta, &cluster(), seed).unwrap();
        prop_assert_eq!(a, b);
    }
}
