use proptest::prelude::*;
use topoguard::mapper::{MapperGraph, MapperParams};
use topoguard::stability::{graphs_instability, stable_region, theta_opt, GraphDistance, StabilityRecord};

fn graph(n: usize, edges: &[(usize, usize)]) -> MapperGraph {
    let theta = MapperParams::new(0.3, 2, 2).unwrap();
    let ids = (0..n).map(|i| i.to_string()).collect();
    let nodes = (0..n).map(|i| (i, vec![i])).collect();
    MapperGraph::from_parts(theta, ids, nodes, edges.iter().copied().filter(|(a, b)| a != b)).unwrap()
}

fn graphs() -> impl Strategy<Value = Vec<(usize, Vec<(usize, usize)>)>> {
    let one = (1usize..9).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..2 * n)));
    prop::collection::vec(one, 2..6)
}

fn build(spec: &[(usize, Vec<(usize, usize)>)]) -> Vec<MapperGraph> {
    spec.iter().map(|(n, e)| graph(*n, e)).collect()
}

fn record(g: f64, a: f64, b: f64) -> StabilityRecord {
    StabilityRecord {
        theta: MapperParams::new(g, 4, 3).unwrap(),
        score_netsimile: Some(a),
        score_spectral: Some(b),
        n_samples: 5,
        sample_fraction: 0.8,
        seed: 0,
        error: None,
    }
}

fn records() -> impl Strategy<Value = Vec<StabilityRecord>> {
    prop::collection::vec((0.0..2.0f64, 0.0..2.0f64), 1..30)
        .prop_map(|s| s.iter().enumerate().map(|(i, &(a, b))| record(0.01 + i as f64 * 0.01, a, b)).collect())
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn instability_is_non_negative_and_order_free(spec in graphs(), rot in 0usize..6) {
        let gs = build(&spec);
        let mut moved = gs.clone();
        moved.rotate_left(rot % gs.len());
        moved.reverse();
        for d in [GraphDistance::Netsimile, GraphDistance::Spectral] {
            let a = graphs_instability(&gs, d).unwrap();
            let b = graphs_instability(&moved, d).unwrap();
            prop_assert!(a >= 0.0);
            prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        }
    }

    #[test]
    fn isomorphic_samples_are_perfectly_stable((n, edges) in (1usize..9).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n, 0..n), 0..2 * n))),
                                               copies in 2usize..5) {
        // each copy relabels node v as v + i (mod n)
        let gs: Vec<MapperGraph> = (0..copies)
            .map(|i| graph(n, &edges.iter().map(|&(a, b)| ((a + i) % n, (b + i) % n)).collect::<Vec<_>>()))
            .collect();
        prop_assert_eq!(graphs_instability(&gs, GraphDistance::Netsimile).unwrap(), 0.0);
        prop_assert!(graphs_instability(&gs, GraphDistance::Spectral).unwrap() < 1e-9);
    }

    #[test]
    fn looser_thresholds_never_drop_members(recs in records(), e1 in 0.0..2.5f64, e2 in 0.0..2.5f64, d1 in 0.0..1.0f64, d2 in 0.0..1.0f64) {
        let small = stable_region(&recs, e1, e2);
        let big = stable_region(&recs, e1 + d1, e2 + d2);
        for m in &small.members {
            prop_assert!(big.members.contains(m));
            let (a, b) = m.scores().unwrap();
            prop_assert!(a < e1 && b < e2);
        }
        let sums: Vec<f64> = big.members.iter().map(|r| r.scores().map(|(a, b)| a + b).unwrap()).collect();
        prop_assert!(sums.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn theta_opt_has_the_smallest_sum(recs in records()) {
        let best = theta_opt(&recs).unwrap();
        let sum = |r: &StabilityRecord| r.scores().map(|(a, b)| a + b).unwrap();
        let chosen = recs.iter().find(|r| r.theta == best).unwrap();
        prop_assert!(recs.iter().all(|r| sum(chosen) <= sum(r)));
    }
}

#[test]
fn failed_records_are_never_members_or_optimal() {
    let mut bad = record(0.5, 0.0, 0.0);
    bad.score_netsimile = None;
    bad.score_spectral = None;
    bad.error = Some("empty graph".into());
    let good = record(0.2, 0.4, 0.4);
    let recs = [bad, good.clone()];
    assert_eq!(stable_region(&recs, 1.0, 1.0).members, std::slice::from_ref(&good));
    assert_eq!(theta_opt(&recs), Some(good.theta));
}
