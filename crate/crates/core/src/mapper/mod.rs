//! Mapper graph construction: 2-D principal-component filter, overlapping
//! rectangular cover, per-patch clustering, and the nerve of the resulting
//! clusters.

mod cover;
mod filter;

pub use cover::{axis_intervals, build_cover, Cover, Patch};
pub use filter::{fit_filter, FilterModel};

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::CustomerFeatureMatrix;
use crate::error::{Error, Result};
use crate::tomato::{automato, ClusterConfig};

/// Cover and clustering parameters `(gain, resolution, k)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapperParams {
    /// Fractional growth of each base interval, in `(0, 1)`.
    pub gain: f64,
    /// Number of base intervals per filter axis.
    pub resolution: usize,
    /// Neighbour count of the clustering step.
    pub k: usize,
}

impl MapperParams {
    pub fn new(gain: f64, resolution: usize, k: usize) -> Result<Self> {
        let p = MapperParams { gain, resolution, k };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gain > 0.0 && self.gain < 1.0) {
            return Err(Error::param(format!("gain {} outside (0, 1)", self.gain)));
        }
        if self.resolution == 0 {
            return Err(Error::param("resolution must be >= 1"));
        }
        if self.k == 0 {
            return Err(Error::param("k must be >= 1"));
        }
        Ok(())
    }
}

impl std::fmt::Display for MapperParams {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(g={}, r={}, k={})", self.gain, self.resolution, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapperNode {
    pub id: usize,
    pub patch_id: usize,
    /// Indices into [`MapperGraph::customer_ids`], ascending.
    pub members: Vec<usize>,
}

impl MapperNode {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapperGraph {
    pub params: MapperParams,
    customer_ids: Vec<String>,
    nodes: Vec<MapperNode>,
    /// Unordered pairs stored as `(u, v)` with `u < v`, ascending.
    edges: Vec<(usize, usize)>,
    customer_nodes: Vec<Vec<usize>>,
    lookup: HashMap<String, usize>,
}

impl MapperGraph {
    /// Assembles a graph from explicit parts. Edges are normalised and
    /// deduplicated; member lists are sorted. No nerve check is performed, so
    /// hand-built fixtures may carry arbitrary edges.
    pub fn from_parts(
        params: MapperParams,
        customer_ids: Vec<String>,
        nodes: Vec<(usize, Vec<usize>)>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        let m = customer_ids.len();
        let mut lookup = HashMap::with_capacity(m);
        for (i, id) in customer_ids.iter().enumerate() {
            if lookup.insert(id.clone(), i).is_some() {
                return Err(Error::param(format!("duplicate customer id `{id}`")));
            }
        }
        let mut customer_nodes = vec![Vec::new(); m];
        let mut built = Vec::with_capacity(nodes.len());
        for (id, (patch_id, mut members)) in nodes.into_iter().enumerate() {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(Error::param(format!("node {id} has no members")));
            }
            for &c in &members {
                if c >= m {
                    return Err(Error::param(format!("node {id} references customer {c}")));
                }
                customer_nodes[c].push(id);
            }
            built.push(MapperNode { id, patch_id, members });
        }
        let n = built.len();
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            if a == b || a >= n || b >= n {
                return Err(Error::param(format!("invalid edge ({a}, {b})")));
            }
            set.insert((a.min(b), a.max(b)));
        }
        Ok(MapperGraph { params, customer_ids, nodes: built, edges: set.into_iter().collect(), customer_nodes, lookup })
    }

    pub fn customer_ids(&self) -> &[String] {
        &self.customer_ids
    }

    pub fn nodes(&self) -> &[MapperNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_sizes(&self) -> Vec<usize> {
        self.nodes.iter().map(MapperNode::size).collect()
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        for l in &mut adj {
            l.sort_unstable();
        }
        adj
    }

    pub fn customer_index(&self, c: &str) -> Option<usize> {
        self.lookup.get(c).copied()
    }

    /// Nodes containing customer `c`, ascending.
    pub fn find_customer_nodes(&self, c: &str) -> Result<&[usize]> {
        let i = self.customer_index(c).ok_or_else(|| Error::UnknownCustomer(c.to_owned()))?;
        Ok(&self.customer_nodes[i])
    }

    /// Same as [`find_customer_nodes`](Self::find_customer_nodes) by index.
    pub fn nodes_of(&self, customer: usize) -> &[usize] {
        &self.customer_nodes[customer]
    }

    pub fn member_ids(&self, node: usize) -> impl Iterator<Item = &str> {
        self.nodes[node].members.iter().map(|&c| self.customer_ids[c].as_str())
    }

    pub fn to_json(&self) -> GraphJson {
        GraphJson {
            params: self.params,
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeJson {
                    node_id: n.id,
                    patch_id: n.patch_id,
                    size: n.size(),
                    members: self.member_ids(n.id).map(str::to_owned).collect(),
                })
                .collect(),
            edges: self.edges.iter().map(|&(a, b)| [a, b]).collect(),
        }
    }

    /// Rebuilds a graph from its JSON form. Customers are re-indexed in
    /// sorted order.
    pub fn from_json(j: &GraphJson) -> Result<Self> {
        let ids: BTreeSet<&str> = j.nodes.iter().flat_map(|n| n.members.iter().map(String::as_str)).collect();
        let ids: Vec<String> = ids.into_iter().map(str::to_owned).collect();
        let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
        let mut nodes: Vec<&NodeJson> = j.nodes.iter().collect();
        nodes.sort_by_key(|n| n.node_id);
        if nodes.iter().enumerate().any(|(i, n)| n.node_id != i) {
            return Err(Error::param("node ids must be 0..n"));
        }
        let parts = nodes.iter().map(|n| (n.patch_id, n.members.iter().map(|m| pos[m.as_str()]).collect())).collect();
        Self::from_parts(j.params, ids, parts, j.edges.iter().map(|e| (e[0], e[1])))
    }

    /// Graphviz rendering; `size` is a node attribute and `extra` may add one
    /// more attribute per node (e.g. a community or anomaly share).
    pub fn to_dot(&self, extra: Option<(&str, &dyn Fn(usize) -> String)>) -> String {
        let mut s = String::from("graph mapper {\n");
        for n in &self.nodes {
            let _ = write!(s, "  {} [size={}, patch={}", n.id, n.size(), n.patch_id);
            if let Some((name, f)) = extra {
                let _ = write!(s, ", {}=\"{}\"", name, f(n.id));
            }
            s.push_str("];\n");
        }
        for &(a, b) in &self.edges {
            let _ = writeln!(s, "  {a} -- {b};");
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeJson {
    pub node_id: usize,
    pub patch_id: usize,
    pub size: usize,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphJson {
    pub params: MapperParams,
    pub nodes: Vec<NodeJson>,
    pub edges: Vec<[usize; 2]>,
}

/// Builds the Mapper graph, fitting the filter on `features` itself.
pub fn build_mapper(
    features: &CustomerFeatureMatrix,
    params: &MapperParams,
    cluster: &ClusterConfig,
    seed: u64,
) -> Result<MapperGraph> {
    let filter = fit_filter(features)?;
    build_mapper_with_filter(features, &filter, params, cluster, seed)
}

/// Builds the Mapper graph with a previously fitted filter.
pub fn build_mapper_with_filter(
    features: &CustomerFeatureMatrix,
    filter: &FilterModel,
    params: &MapperParams,
    cluster: &ClusterConfig,
    seed: u64,
) -> Result<MapperGraph> {
    params.validate()?;
    if features.is_empty() {
        return Err(Error::Empty("no customers".into()));
    }
    let projected = filter.project(&features.values);
    let cover = build_cover(&projected, params.gain, params.resolution)?;
    let patch_members = cover.members();

    let per_patch: Vec<(usize, Vec<Vec<usize>>)> = patch_members
        .par_iter()
        .enumerate()
        .filter(|(_, m)| !m.is_empty())
        .map(|(p, members)| {
            let pts = features.values.select_rows(members);
            let out = automato(&pts, params.k, cluster, crate::seed::mix(seed, p as u64))?;
            let clusters =
                out.labels.members().into_iter().map(|local| local.into_iter().map(|i| members[i]).collect()).collect();
            Ok((p, clusters))
        })
        .collect::<Result<_>>()?;

    let mut nodes = Vec::new();
    for (p, clusters) in per_patch {
        for c in clusters {
            nodes.push((p, c));
        }
    }
    let mut customer_nodes: Vec<Vec<usize>> = vec![Vec::new(); features.len()];
    for (id, (_, members)) in nodes.iter().enumerate() {
        for &c in members {
            customer_nodes[c].push(id);
        }
    }
    let mut edges = BTreeSet::new();
    for ns in &customer_nodes {
        for (i, &a) in ns.iter().enumerate() {
            for &b in &ns[i + 1..] {
                if nodes[a].0 != nodes[b].0 {
                    edges.insert((a, b));
                }
            }
        }
    }
    MapperGraph::from_parts(*params, features.customer_ids.clone(), nodes, edges)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> MapperParams {
        MapperParams::new(0.2, 2, 3).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(MapperParams::new(0.0, 2, 3).is_err());
        assert!(MapperParams::new(1.0, 2, 3).is_err());
        assert!(MapperParams::new(0.5, 0, 3).is_err());
        assert!(MapperParams::new(0.5, 2, 0).is_err());
    }

    #[test]
    fn from_parts_builds_inverted_index() {
        let ids = vec!["a".to_string(), "b".into(), "c".into()];
        let g = MapperGraph::from_parts(params(), ids, vec![(0, vec![0, 1]), (1, vec![1, 2])], [(1, 0)]).unwrap();
        assert_eq!(g.edges(), &[(0, 1)]);
        assert_eq!(g.find_customer_nodes("b").unwrap(), &[0, 1]);
        assert_eq!(g.find_customer_nodes("a").unwrap(), &[0]);
        assert!(matches!(g.find_customer_nodes("zz"), Err(Error::UnknownCustomer(_))));
    }

    #[test]
    fn from_parts_rejects_bad_input() {
        let ids = vec!["a".to_string()];
        assert!(MapperGraph::from_parts(params(), ids.clone(), vec![(0, vec![])], []).is_err());
        assert!(MapperGraph::from_parts(params(), ids.clone(), vec![(0, vec![3])], []).is_err());
        assert!(MapperGraph::from_parts(params(), ids, vec![(0, vec![0])], [(0, 0)]).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let ids = vec!["x".to_string(), "y".into(), "z".into()];
        let g = MapperGraph::from_parts(params(), ids, vec![(0, vec![0, 1]), (3, vec![1]), (1, vec![2])], [(0, 1)])
            .unwrap();
        let j = serde_json::to_string(&g.to_json()).unwrap();
        let back = MapperGraph::from_json(&serde_json::from_str(&j).unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn dot_lists_sizes() {
        let ids = vec!["x".to_string(), "y".into()];
        let g = MapperGraph::from_parts(params(), ids, vec![(0, vec![0, 1]), (1, vec![1])], [(0, 1)]).unwrap();
        let dot = g.to_dot(None);
        assert!(dot.contains("0 [size=2, patch=0]"));
        assert!(dot.contains("0 -- 1;"));
    }
}
