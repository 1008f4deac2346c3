//! Community detection on a Mapper graph. Node sizes act as a density and the
//! mode-seeking sweep from [`crate::tomato`] runs with the graph itself as
//! neighbourhood structure. Only the largest connected component is
//! segmented; every other node lands in community 0.

use std::collections::{BTreeMap, VecDeque};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapper::MapperGraph;
use crate::tomato::{persistence_cluster, PersistenceDiagram};

/// Node sizes as reals.
pub fn node_density(graph: &MapperGraph) -> Vec<f64> {
    graph.nodes().iter().map(|n| n.size() as f64).collect()
}

/// Connected components, each sorted, ordered by smallest node id.
pub fn connected_components(adj: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut seen = vec![false; adj.len()];
    let mut out = Vec::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        let mut comp = vec![s];
        let mut q = VecDeque::from([s]);
        while let Some(v) = q.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    comp.push(w);
                    q.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

/// Largest component; on equal size the one holding the smallest node id.
pub fn largest_component(adj: &[Vec<usize>]) -> Vec<usize> {
    connected_components(adj).into_iter().fold(Vec::new(), |best, c| if c.len() > best.len() { c } else { best })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityPartition {
    /// Community of each Mapper node; 0 means outside the processed component.
    pub node_assignment: Vec<usize>,
    /// Number of non-zero communities.
    pub count: usize,
    pub tau: f64,
    /// Diagram of the processed component.
    pub diagram: PersistenceDiagram,
}

impl CommunityPartition {
    pub fn communities(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count + 1];
        for (v, &c) in self.node_assignment.iter().enumerate() {
            out[c].push(v);
        }
        out
    }
}

fn restrict(adj: &[Vec<usize>], comp: &[usize]) -> Vec<Vec<usize>> {
    let mut local = vec![usize::MAX; adj.len()];
    for (i, &v) in comp.iter().enumerate() {
        local[v] = i;
    }
    comp.iter().map(|&v| adj[v].iter().map(|&w| local[w]).filter(|&w| w != usize::MAX).collect()).collect()
}

fn component_diagram(graph: &MapperGraph, f: &[f64]) -> Result<(Vec<usize>, Vec<Vec<usize>>)> {
    if graph.is_empty() {
        return Err(Error::Empty("mapper graph has no nodes".into()));
    }
    if f.len() != graph.node_count() {
        return Err(Error::param(format!("density has {} entries for {} nodes", f.len(), graph.node_count())));
    }
    let adj = graph.adjacency();
    let comp = largest_component(&adj);
    let local = restrict(&adj, &comp);
    Ok((comp, local))
}

pub fn detect_communities(graph: &MapperGraph, f: &[f64], tau: f64) -> Result<CommunityPartition> {
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::param("tau must be >= 0"));
    }
    let (comp, local) = component_diagram(graph, f)?;
    let local_f: Vec<f64> = comp.iter().map(|&v| f[v]).collect();
    let (labels, diagram) = persistence_cluster(&local, &local_f, tau);
    let mut node_assignment = vec![0; graph.node_count()];
    for (i, &v) in comp.iter().enumerate() {
        node_assignment[v] = labels.labels[i] + 1;
    }
    Ok(CommunityPartition { node_assignment, count: labels.count, tau, diagram })
}

/// Diagram of `f` on the largest component, without labelling.
pub fn community_diagram(graph: &MapperGraph, f: &[f64]) -> Result<PersistenceDiagram> {
    let (comp, local) = component_diagram(graph, f)?;
    let local_f: Vec<f64> = comp.iter().map(|&v| f[v]).collect();
    Ok(crate::tomato::persistence_diagram(&local, &local_f))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TauPolicy {
    /// Cut at the largest ratio gap between consecutive prominences.
    #[default]
    Gap,
    Fixed {
        value: f64,
    },
    /// Aim for this many non-zero communities.
    TargetCount {
        count: usize,
    },
}

fn descending_prominences(d: &PersistenceDiagram) -> Vec<f64> {
    let mut p = d.finite_prominences();
    p.sort_by(|a, b| b.total_cmp(a));
    p
}

/// Largest-ratio-gap rule. A positive `floor` (the density resolution, e.g. the
/// smallest node size) closes the sequence from below, so a lone strong mode can
/// survive. With fewer than two values every mode is kept (tau = 0).
pub fn gap_tau(d: &PersistenceDiagram, floor: f64) -> f64 {
    let mut p = descending_prominences(d);
    if floor > 0.0 && floor.is_finite() {
        p.push(floor);
        p.sort_by(|a, b| b.total_cmp(a));
    }
    if p.len() < 2 {
        return 0.0;
    }
    let mut best: Option<(f64, usize)> = None;
    for i in 0..p.len() - 1 {
        let (hi, lo) = (p[i], p[i + 1]);
        if hi == 0.0 {
            continue;
        }
        let ratio = if lo == 0.0 { f64::INFINITY } else { hi / lo };
        if best.is_none_or(|(r, _)| ratio > r) {
            best = Some((ratio, i));
        }
    }
    match best {
        Some((_, i)) => 0.5 * (p[i] + p[i + 1]),
        // every finite mode is a zero-height plateau; merge them all
        None => f64::MIN_POSITIVE,
    }
}

/// Threshold leaving `count` surviving modes when the prominences allow it.
pub fn target_tau(d: &PersistenceDiagram, count: usize) -> f64 {
    let p = descending_prominences(d);
    let keep = count.saturating_sub(d.essential_count());
    if p.is_empty() || keep >= p.len() {
        return 0.0;
    }
    if keep == 0 {
        return f64::INFINITY;
    }
    0.5 * (p[keep - 1] + p[keep])
}

/// `floor` is only used by the gap rule; see [`gap_tau`].
pub fn select_tau_from(d: &PersistenceDiagram, policy: TauPolicy, floor: f64) -> Result<f64> {
    match policy {
        TauPolicy::Gap => Ok(gap_tau(d, floor)),
        TauPolicy::Fixed { value } if value.is_nan() || value < 0.0 => Err(Error::param("tau must be >= 0")),
        TauPolicy::Fixed { value } => Ok(value),
        TauPolicy::TargetCount { count: 0 } => Err(Error::param("target count must be >= 1")),
        TauPolicy::TargetCount { count } => Ok(target_tau(d, count)),
    }
}

pub fn select_tau(graph: &MapperGraph, f: &[f64], policy: TauPolicy) -> Result<f64> {
    let floor = f.iter().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    select_tau_from(&community_diagram(graph, f)?, policy, floor)
}

/// Plurality of a customer's nodes; ties go to the larger total density, then
/// the lower community id. Indexed like `graph.customer_ids()`.
pub fn assign_customers(partition: &CommunityPartition, graph: &MapperGraph, f: &[f64]) -> Vec<usize> {
    let k = partition.node_assignment.iter().copied().max().unwrap_or(0) + 1;
    let mut mass = vec![0.0; k];
    for (v, &c) in partition.node_assignment.iter().enumerate() {
        mass[c] += f[v];
    }
    let mut votes = vec![0usize; k];
    (0..graph.customer_ids().len())
        .map(|i| {
            votes.iter_mut().for_each(|x| *x = 0);
            for &v in graph.nodes_of(i) {
                votes[partition.node_assignment[v]] += 1;
            }
            (0..k)
                .filter(|&c| votes[c] > 0)
                .max_by(|&a, &b| votes[a].cmp(&votes[b]).then(mass[a].total_cmp(&mass[b])).then(b.cmp(&a)))
                .unwrap_or(0)
        })
        .collect()
}

/// Segmentation output for a graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Segmentation {
    pub partition: CommunityPartition,
    pub customer_ids: Vec<String>,
    pub customer_assignment: Vec<usize>,
}

pub fn segment(graph: &MapperGraph, policy: TauPolicy) -> Result<Segmentation> {
    let f = node_density(graph);
    let tau = select_tau(graph, &f, policy)?;
    let mut partition = detect_communities(graph, &f, tau)?;
    if graph.edges().is_empty() {
        // No non-trivial component: everyone stays in community 0.
        partition.node_assignment.iter_mut().for_each(|c| *c = 0);
        partition.count = 0;
    }
    let customer_assignment = assign_customers(&partition, graph, &f);
    Ok(Segmentation { partition, customer_ids: graph.customer_ids().to_vec(), customer_assignment })
}

pub fn write_assignment_csv<W: Write>(writer: W, ids: &[String], assignment: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["customer_id", "community"])?;
    for (c, a) in ids.iter().zip(assignment) {
        w.write_record([c.as_str(), &a.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_assignment_csv<R: Read>(reader: R) -> Result<BTreeMap<String, usize>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    for (i, name) in ["customer_id", "community"].iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::MissingColumn((*name).into()));
        }
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        let raw = rec.get(1).unwrap_or_default();
        let k = raw.parse().map_err(|_| Error::param(format!("bad community `{raw}` for `{id}`")))?;
        if out.insert(id.clone(), k).is_some() {
            return Err(Error::param(format!("duplicate customer id `{id}`")));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayNode {
    pub node_id: usize,
    pub size: usize,
    pub community: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub tau: f64,
    pub communities: usize,
    pub nodes: Vec<OverlayNode>,
    pub edges: Vec<[usize; 2]>,
}

pub fn overlay(graph: &MapperGraph, partition: &CommunityPartition) -> Overlay {
    Overlay {
        tau: partition.tau,
        communities: partition.count,
        nodes: graph
            .nodes()
            .iter()
            .map(|n| OverlayNode { node_id: n.id, size: n.size(), community: partition.node_assignment[n.id] })
            .collect(),
        edges: graph.edges().iter().map(|&(a, b)| [a, b]).collect(),
    }
}

pub fn overlay_dot(graph: &MapperGraph, partition: &CommunityPartition) -> String {
    let label = |v: usize| partition.node_assignment[v].to_string();
    graph.to_dot(Some(("community", &label)))
}

/// True if every community 1..c induces a connected subgraph.
pub fn communities_connected(graph: &MapperGraph, partition: &CommunityPartition) -> bool {
    let adj = graph.adjacency();
    partition
        .communities()
        .iter()
        .skip(1)
        .all(|members| !members.is_empty() && connected_components(&restrict(&adj, members)).len() == 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapper::MapperParams;
    use crate::tomato::PersistencePair;

    /// Path graph whose node `i` has `sizes[i]` private members.
    fn path(sizes: &[usize]) -> MapperGraph {
        let mut next = 0;
        let nodes: Vec<(usize, Vec<usize>)> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let m = (next..next + s).collect();
                next += s;
                (i, m)
            })
            .collect();
        let ids = (0..next).map(|i| format!("c{i}")).collect();
        let edges: Vec<_> = (1..sizes.len()).map(|i| (i - 1, i)).collect();
        MapperGraph::from_parts(MapperParams::new(0.2, 4, 5).unwrap(), ids, nodes, edges).unwrap()
    }

    fn diagram(prom: &[f64]) -> PersistenceDiagram {
        let mut pairs = vec![PersistencePair { birth: 100.0, death: f64::NEG_INFINITY }];
        pairs.extend(prom.iter().map(|&p| PersistencePair { birth: 50.0 + p, death: 50.0 }));
        PersistenceDiagram { pairs }
    }

    #[test]
    fn density_is_size() {
        let g = path(&[17, 1]);
        assert_eq!(node_density(&g), vec![17.0, 1.0]);
    }

    #[test]
    fn valley_split() {
        let g = path(&[3, 1, 3]);
        let f = node_density(&g);
        let p = detect_communities(&g, &f, 1.0).unwrap();
        assert_eq!(p.count, 2);
        assert_ne!(p.node_assignment[0], p.node_assignment[2]);
        assert!(communities_connected(&g, &p));
        assert_eq!(detect_communities(&g, &f, 3.0).unwrap().count, 1);
        assert_eq!(detect_communities(&g, &f, f64::INFINITY).unwrap().count, 1);
    }

    #[test]
    fn constant_density_single_community() {
        let g = path(&[2, 2, 2, 2]);
        let p = detect_communities(&g, &node_density(&g), 0.5).unwrap();
        assert_eq!(p.count, 1);
        assert!(p.node_assignment.iter().all(|&c| c == 1));
    }

    #[test]
    fn only_largest_component_is_segmented() {
        // components {0,1} and {2,3}: equal size, the one holding node 0 wins
        let nodes = vec![(0, vec![0]), (1, vec![1]), (2, vec![2]), (3, vec![3]), (4, vec![4])];
        let ids = (0..5).map(|i| format!("c{i}")).collect();
        let g = MapperGraph::from_parts(MapperParams::new(0.2, 4, 5).unwrap(), ids, nodes, [(0, 1), (2, 3)]).unwrap();
        let p = detect_communities(&g, &node_density(&g), 0.0).unwrap();
        assert_eq!(p.node_assignment, vec![1, 1, 0, 0, 0]);
    }

    #[test]
    fn edgeless_graph_keeps_community_zero() {
        let ids = (0..3).map(|i| format!("c{i}")).collect();
        let nodes = vec![(0, vec![0, 1]), (1, vec![2])];
        let g = MapperGraph::from_parts(MapperParams::new(0.2, 4, 5).unwrap(), ids, nodes, []).unwrap();
        let s = segment(&g, TauPolicy::Gap).unwrap();
        assert_eq!(s.partition.count, 0);
        assert_eq!(s.customer_assignment, vec![0, 0, 0]);
    }

    #[test]
    fn gap_rule() {
        let d = diagram(&[10.0, 9.0, 1.0]);
        let tau = gap_tau(&d, 0.0);
        assert!(tau < 9.0 && tau > 1.0);
        assert_eq!(d.count_at_least(tau), 3);
        assert_eq!(gap_tau(&diagram(&[4.0]), 0.0), 0.0);
        assert_eq!(gap_tau(&diagram(&[]), 0.0), 0.0);
        assert!(gap_tau(&diagram(&[0.0, 0.0]), 0.0) > 0.0);
    }

    #[test]
    fn gap_floor_keeps_strong_modes() {
        // without a floor the pair is always split
        let d = diagram(&[45.0, 39.0]);
        assert_eq!(d.count_at_least(gap_tau(&d, 0.0)), 2);
        assert_eq!(d.count_at_least(gap_tau(&d, 1.0)), 3);
        let d = diagram(&[88.0, 26.0, 3.0, 2.0]);
        assert_eq!(d.count_at_least(gap_tau(&d, 1.0)), 3);
    }

    #[test]
    fn target_count() {
        let d = diagram(&[8.0, 6.0, 4.0, 2.0, 1.0]);
        for c in 1..=6 {
            let tau = target_tau(&d, c);
            assert_eq!(d.count_at_least(tau), c, "c={c}");
        }
        assert_eq!(d.count_at_least(target_tau(&d, 10)), 6);
    }

    #[test]
    fn target_count_on_graph() {
        // peaks 9, 7, 5, 8 separated by unit valleys
        let g = path(&[9, 1, 7, 1, 5, 1, 8]);
        let f = node_density(&g);
        let tau = select_tau(&g, &f, TauPolicy::TargetCount { count: 3 }).unwrap();
        assert_eq!(detect_communities(&g, &f, tau).unwrap().count, 3);
    }

    #[test]
    fn plurality_and_tie_break() {
        // customer 0 sits in a size-40 node (community 1) and a size-12 node
        // (community 2); ties resolve toward the heavier community
        let mut n0: Vec<usize> = (0..40).collect();
        let mut n1: Vec<usize> = (40..51).collect();
        n1.push(0);
        n0.sort_unstable();
        let ids = (0..51).map(|i| format!("c{i}")).collect();
        let g = MapperGraph::from_parts(MapperParams::new(0.2, 4, 5).unwrap(), ids, vec![(0, n0), (1, n1)], [(0, 1)])
            .unwrap();
        let p = CommunityPartition {
            node_assignment: vec![1, 2],
            count: 2,
            tau: 0.0,
            diagram: PersistenceDiagram::default(),
        };
        let f = node_density(&g);
        let a = assign_customers(&p, &g, &f);
        assert_eq!(a[0], 1);
        assert_eq!(a[45], 2);
        let swapped = CommunityPartition { node_assignment: vec![2, 1], ..p };
        assert_eq!(assign_customers(&swapped, &g, &f)[0], 2);
    }

    #[test]
    fn plurality_majority() {
        let ids = (0..3).map(|i| format!("c{i}")).collect();
        let nodes = vec![(0, vec![0, 1]), (1, vec![0, 2]), (2, vec![0])];
        let g = MapperGraph::from_parts(MapperParams::new(0.2, 4, 5).unwrap(), ids, nodes, [(0, 1), (1, 2)]).unwrap();
        let p = CommunityPartition {
            node_assignment: vec![1, 1, 2],
            count: 2,
            tau: 0.0,
            diagram: PersistenceDiagram::default(),
        };
        assert_eq!(assign_customers(&p, &g, &node_density(&g))[0], 1);
    }

    #[test]
    fn overlay_shapes() {
        let g = path(&[3, 1, 3]);
        let s = segment(&g, TauPolicy::Fixed { value: 1.0 }).unwrap();
        let o = overlay(&g, &s.partition);
        assert_eq!(o.nodes.len(), 3);
        assert!(overlay_dot(&g, &s.partition).contains("community=\"1\""));
        let mut buf = Vec::new();
        write_assignment_csv(&mut buf, &s.customer_ids, &s.customer_assignment).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 8);
    }

    #[test]
    fn assignment_round_trip() {
        let ids: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let mut buf = Vec::new();
        write_assignment_csv(&mut buf, &ids, &[2, 0, 1]).unwrap();
        let back = read_assignment_csv(buf.as_slice()).unwrap();
        assert_eq!(back.into_iter().collect::<Vec<_>>(), vec![("a".into(), 2), ("b".into(), 0), ("c".into(), 1)]);
    }
}
