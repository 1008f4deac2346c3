//! Graph comparison: NetSimile signatures under the Canberra distance, and
//! the spectral distance between normalized-Laplacian spectra. The per-node
//! NetSimile features are also the input of the anomaly detector.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mapper::MapperGraph;
use crate::stats;

/// Simple undirected graph with sorted adjacency lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimpleGraph {
    adj: Vec<Vec<usize>>,
}

impl SimpleGraph {
    /// Self-loops and duplicate edges are dropped. Panics on out-of-range ids.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); n];
        for (a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for {n} nodes");
            if a != b {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        SimpleGraph { adj }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].binary_search(&b).is_ok()
    }
}

impl From<&MapperGraph> for SimpleGraph {
    fn from(g: &MapperGraph) -> Self {
        SimpleGraph::from_edges(g.node_count(), g.edges().iter().copied())
    }
}

pub const NODE_FEATURES: [&str; 7] = [
    "degree",
    "clustering",
    "mean_neighbor_degree",
    "mean_neighbor_clustering",
    "egonet_edges",
    "egonet_outgoing_edges",
    "egonet_neighbors",
];

/// Per-node NetSimile features, one row of [`NODE_FEATURES`] per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatureMatrix {
    pub rows: Vec<[f64; 7]>,
}

impl NodeFeatureMatrix {
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[j]).collect()
    }
}

fn clustering(g: &SimpleGraph, i: usize) -> (f64, usize) {
    let nb = g.neighbors(i);
    let mut tri = 0;
    for (x, &a) in nb.iter().enumerate() {
        for &b in &nb[x + 1..] {
            if g.has_edge(a, b) {
                tri += 1;
            }
        }
    }
    let d = nb.len();
    let cc = if d < 2 { 0.0 } else { tri as f64 / (d * (d - 1) / 2) as f64 };
    (cc, tri)
}

pub fn netsimile_features(g: &SimpleGraph) -> NodeFeatureMatrix {
    let n = g.node_count();
    let (cc, tri): (Vec<f64>, Vec<usize>) = (0..n).map(|i| clustering(g, i)).unzip();
    let mut in_ego = vec![false; n];
    let rows = (0..n)
        .map(|i| {
            let nb = g.neighbors(i);
            let d = nb.len();
            if d == 0 {
                return [0.0; 7];
            }
            let mean_nd = nb.iter().map(|&j| g.degree(j) as f64).sum::<f64>() / d as f64;
            // summed in sorted order so relabelling the graph cannot change the bits
            let mut ncc: Vec<f64> = nb.iter().map(|&j| cc[j]).collect();
            ncc.sort_by(f64::total_cmp);
            let mean_ncc = ncc.iter().sum::<f64>() / d as f64;
            // edges inside {i} + N(i): the spokes plus the triangles through i
            let ego_edges = d + tri[i];
            let degree_sum: usize = d + nb.iter().map(|&j| g.degree(j)).sum::<usize>();
            let outgoing = degree_sum - 2 * ego_edges;
            in_ego[i] = true;
            for &j in nb {
                in_ego[j] = true;
            }
            let mut outside: Vec<usize> =
                nb.iter().flat_map(|&j| g.neighbors(j).iter().copied()).filter(|&v| !in_ego[v]).collect();
            outside.sort_unstable();
            outside.dedup();
            in_ego[i] = false;
            for &j in nb {
                in_ego[j] = false;
            }
            [d as f64, cc[i], mean_nd, mean_ncc, ego_edges as f64, outgoing as f64, outside.len() as f64]
        })
        .collect();
    NodeFeatureMatrix { rows }
}

/// 7 features x (mean, median, std, skewness, kurtosis), feature-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignature(pub [f64; 35]);

pub fn signature(g: &SimpleGraph) -> GraphSignature {
    let f = netsimile_features(g);
    let mut out = [0.0; 35];
    for j in 0..7 {
        let mut col = f.column(j);
        col.sort_by(f64::total_cmp);
        let agg = [
            stats::mean(&col),
            stats::median(&col),
            stats::std_dev(&col),
            stats::skewness(&col),
            stats::kurtosis(&col),
        ];
        out[j * 5..j * 5 + 5].copy_from_slice(&agg);
    }
    GraphSignature(out)
}

/// Canberra distance; a coordinate where both sides are zero contributes 0.
pub fn canberra(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let den = x.abs() + y.abs();
            if den == 0.0 {
                0.0
            } else {
                (x - y).abs() / den
            }
        })
        .sum()
}

fn non_empty(g: &SimpleGraph) -> Result<()> {
    if g.node_count() == 0 {
        return Err(Error::Empty("graph has no nodes".into()));
    }
    Ok(())
}

pub fn netsimile_distance(g1: &SimpleGraph, g2: &SimpleGraph) -> Result<f64> {
    non_empty(g1)?;
    non_empty(g2)?;
    Ok(canberra(&signature(g1).0, &signature(g2).0))
}

/// Eigenvalues of `I - D^{-1/2} A D^{-1/2}`, descending. Isolated nodes get a
/// zero diagonal entry.
pub fn normalized_laplacian_spectrum(g: &SimpleGraph) -> Vec<f64> {
    let n = g.node_count();
    if n == 0 {
        return Vec::new();
    }
    let inv_sqrt: Vec<f64> =
        (0..n).map(|i| if g.degree(i) > 0 { 1.0 / (g.degree(i) as f64).sqrt() } else { 0.0 }).collect();
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        if g.degree(i) > 0 {
            l[(i, i)] = 1.0;
        }
        for &j in g.neighbors(i) {
            l[(i, j)] = -inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(l).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

/// Euclidean distance between descending spectra, zero-padded to equal
/// length and optionally truncated to the `top_k` largest eigenvalues.
pub fn spectral_distance(g1: &SimpleGraph, g2: &SimpleGraph, top_k: Option<usize>) -> Result<f64> {
    non_empty(g1)?;
    non_empty(g2)?;
    Ok(spectrum_distance(&normalized_laplacian_spectrum(g1), &normalized_laplacian_spectrum(g2), top_k))
}

pub fn spectrum_distance(a: &[f64], b: &[f64], top_k: Option<usize>) -> f64 {
    let mut len = a.len().max(b.len());
    if let Some(k) = top_k {
        len = len.min(k);
    }
    (0..len)
        .map(|i| {
            let x = a.get(i).copied().unwrap_or(0.0);
            let y = b.get(i).copied().unwrap_or(0.0);
            (x - y) * (x - y)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> SimpleGraph {
        SimpleGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)])
    }

    fn star4() -> SimpleGraph {
        SimpleGraph::from_edges(5, [(0, 1), (0, 2), (0, 3), (0, 4)])
    }

    #[test]
    fn relabelling_keeps_signature_bits() {
        // clustering coefficients 1/3, 2/3, 1/6 and friends make the sums order sensitive
        let edges = [(0, 1), (0, 2), (1, 2), (2, 3), (3, 4), (2, 4), (4, 5), (1, 5), (5, 6), (0, 6), (3, 6)];
        let perm = [4, 6, 0, 2, 5, 1, 3];
        let g = SimpleGraph::from_edges(7, edges);
        let h = SimpleGraph::from_edges(7, edges.iter().map(|&(a, b)| (perm[a], perm[b])));
        assert_eq!(signature(&g), signature(&h));
        assert_eq!(netsimile_distance(&g, &h).unwrap(), 0.0);
    }

    #[test]
    fn triangle_features() {
        let f = netsimile_features(&triangle());
        for r in &f.rows {
            assert_eq!(r, &[2.0, 1.0, 2.0, 1.0, 3.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn star_center_features() {
        let f = netsimile_features(&star4());
        assert_eq!(f.rows[0], [4.0, 0.0, 1.0, 0.0, 4.0, 0.0, 0.0]);
        // a leaf: ego = {leaf, center}, three spokes leave it
        assert_eq!(f.rows[1], [1.0, 0.0, 4.0, 0.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn isolated_node_is_zero_row() {
        let g = SimpleGraph::from_edges(3, [(0, 1)]);
        assert_eq!(netsimile_features(&g).rows[2], [0.0; 7]);
    }

    #[test]
    fn netsimile_basic_axioms() {
        let (k3, s4) = (triangle(), star4());
        assert_eq!(netsimile_distance(&k3, &k3).unwrap(), 0.0);
        let d = netsimile_distance(&k3, &s4).unwrap();
        assert!(d > 0.0);
        assert_eq!(d, netsimile_distance(&s4, &k3).unwrap());
    }

    #[test]
    fn k2_vs_two_isolated_nodes() {
        let k2 = SimpleGraph::from_edges(2, [(0, 1)]);
        let empty = SimpleGraph::from_edges(2, []);
        assert!((spectral_distance(&k2, &empty, None).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_relabel_invariance() {
        let a = SimpleGraph::from_edges(4, [(0, 1), (1, 2), (2, 3)]);
        let b = SimpleGraph::from_edges(4, [(3, 1), (1, 0), (0, 2)]);
        assert!(spectral_distance(&a, &b, None).unwrap() < 1e-12);
    }

    #[test]
    fn top_k_truncates() {
        assert_eq!(spectrum_distance(&[2.0, 1.0, 0.0], &[2.0, 0.0], Some(1)), 0.0);
        assert_eq!(spectrum_distance(&[2.0, 1.0, 0.0], &[2.0, 0.0], None), 1.0);
    }

    #[test]
    fn empty_graph_errors() {
        let e = SimpleGraph::from_edges(0, []);
        assert!(netsimile_distance(&e, &triangle()).is_err());
        assert!(spectral_distance(&triangle(), &e, None).is_err());
    }

    #[test]
    fn canberra_zero_zero_term() {
        assert_eq!(canberra(&[0.0, 1.0], &[0.0, 3.0]), 0.5);
    }
}
