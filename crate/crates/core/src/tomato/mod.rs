//! Persistence-based mode-seeking clustering on a k-nearest-neighbour graph,
//! with the prominence threshold picked by bottleneck bootstrapping.
//!
//! The sweep visits points in decreasing density. A point whose neighbours
//! are all lower starts a new mode; otherwise it joins the cluster of its
//! densest neighbour, and any other neighbouring cluster it touches is merged
//! into the older one when the younger mode's prominence is below `tau`.

mod bottleneck;

pub use bottleneck::bottleneck_distance;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{euclidean, Matrix};

/// Exact k-nearest-neighbour lists, ascending by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGraph {
    pub n: usize,
    pub k: usize,
    /// Ambient dimension of the points, needed by the density estimator.
    pub dim: usize,
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl NeighborGraph {
    /// Undirected closure: `i ~ j` if either lists the other. Lists are sorted.
    pub fn symmetric_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for (i, list) in self.adjacency.iter().enumerate() {
            for &(j, _) in list {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        for l in &mut adj {
            l.sort_unstable();
            l.dedup();
        }
        adj
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistencePair {
    pub birth: f64,
    /// `-inf` for the essential pair of a connected component.
    pub death: f64,
}

impl PersistencePair {
    pub fn prominence(&self) -> f64 {
        self.birth - self.death
    }

    pub fn is_essential(&self) -> bool {
        self.death == f64::NEG_INFINITY
    }
}

/// Superlevel-set persistence of a density: one pair per mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PersistenceDiagram {
    pub pairs: Vec<PersistencePair>,
}

impl PersistenceDiagram {
    pub fn finite_prominences(&self) -> Vec<f64> {
        self.pairs.iter().filter(|p| !p.is_essential()).map(|p| p.prominence()).collect()
    }

    pub fn essential_count(&self) -> usize {
        self.pairs.iter().filter(|p| p.is_essential()).count()
    }

    /// Number of modes that survive threshold `tau`.
    pub fn count_at_least(&self, tau: f64) -> usize {
        self.pairs.iter().filter(|p| p.is_essential() || p.prominence() >= tau).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterLabels {
    pub labels: Vec<usize>,
    pub count: usize,
}

impl ClusterLabels {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.count];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

pub fn knn_graph(points: &Matrix, k: usize) -> Result<NeighborGraph> {
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    let n = points.nrows();
    let k_eff = k.min(n.saturating_sub(1));
    let adjacency = (0..n)
        .map(|i| {
            let pi = points.row(i);
            let mut cand: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, euclidean(pi, points.row(j)))).collect();
            let cmp = |a: &(usize, f64), b: &(usize, f64)| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0));
            if k_eff < cand.len() {
                cand.select_nth_unstable_by(k_eff, cmp);
                cand.truncate(k_eff);
            }
            cand.sort_by(cmp);
            cand
        })
        .collect();
    Ok(NeighborGraph { n, k: k_eff, dim: points.ncols(), adjacency })
}

/// Volume of the unit ball in `q` dimensions.
pub fn unit_ball_volume(q: usize) -> f64 {
    let mut v = [1.0, 2.0];
    if q < 2 {
        return v[q];
    }
    let mut out = 0.0;
    for d in 2..=q {
        out = v[d % 2] * 2.0 * std::f64::consts::PI / d as f64;
        v[d % 2] = out;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityEstimate {
    pub values: Vec<f64>,
    /// Natural log of `values`, computed without the round trip through
    /// `exp` so that high-dimensional densities do not underflow.
    pub log_values: Vec<f64>,
    /// Points whose k-th neighbour sits at distance zero.
    pub duplicates: Vec<usize>,
}

impl DensityEstimate {
    pub fn scaled(&self, scale: DensityScale) -> &[f64] {
        match scale {
            DensityScale::Linear => &self.values,
            DensityScale::Log => &self.log_values,
        }
    }
}

/// k-NN balloon estimator `k / (n * V_q * r_k^q)`.
pub fn estimate_density(g: &NeighborGraph) -> DensityEstimate {
    if g.n == 1 {
        return DensityEstimate { values: vec![1.0], log_values: vec![0.0], duplicates: Vec::new() };
    }
    let ln_norm = (g.n as f64).ln() + unit_ball_volume(g.dim).ln();
    let mut duplicates = Vec::new();
    let mut log_values: Vec<f64> = g
        .adjacency
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let r = list.last().map_or(0.0, |&(_, d)| d);
            if r == 0.0 {
                duplicates.push(i);
                return f64::NAN;
            }
            (list.len() as f64).ln() - ln_norm - g.dim as f64 * r.ln()
        })
        .collect();
    if !duplicates.is_empty() {
        let max = log_values.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max);
        let fill = if max.is_nan() { 0.0 } else { max };
        for &i in &duplicates {
            log_values[i] = fill;
        }
    }
    let values = log_values.iter().map(|v| v.exp()).collect();
    DensityEstimate { values, log_values, duplicates }
}

struct ModeForest {
    parent: Vec<usize>,
    /// For roots: the vertex holding the cluster's peak.
    mode: Vec<usize>,
}

impl ModeForest {
    fn new(n: usize) -> Self {
        ModeForest { parent: (0..n).collect(), mode: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

struct SweepOutcome {
    labels: ClusterLabels,
    /// (birth, death) of every mode that merged.
    merged: Vec<PersistencePair>,
    /// Peak vertex of every surviving cluster, by cluster id.
    peaks: Vec<usize>,
}

/// Processing order: density descending, lower index first on ties.
fn sweep_order(density: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..density.len()).collect();
    order.sort_by(|&a, &b| density[b].total_cmp(&density[a]).then(a.cmp(&b)));
    let mut rank = vec![0; density.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    (order, rank)
}

fn sweep(adj: &[Vec<usize>], density: &[f64], tau: f64) -> SweepOutcome {
    let n = density.len();
    let (order, rank) = sweep_order(density);
    let mut forest = ModeForest::new(n);
    let mut merged = Vec::new();
    let mut higher: Vec<usize> = Vec::new();
    for &i in &order {
        higher.clear();
        higher.extend(adj[i].iter().copied().filter(|&j| rank[j] < rank[i]));
        if higher.is_empty() {
            continue; // i is a new peak; already its own root
        }
        higher.sort_by_key(|&j| rank[j]);
        let top = forest.find(higher[0]);
        forest.parent[i] = top;
        for &j in &higher[1..] {
            let ri = forest.find(i);
            let rj = forest.find(j);
            if ri == rj {
                continue;
            }
            let (young, old) = if rank[forest.mode[ri]] > rank[forest.mode[rj]] { (ri, rj) } else { (rj, ri) };
            let birth = density[forest.mode[young]];
            let death = density[i];
            if birth - death < tau {
                forest.parent[young] = old;
                merged.push(PersistencePair { birth, death });
            }
        }
    }
    // cluster ids by peak rank
    let mut roots: Vec<usize> = (0..n).filter(|&x| forest.find(x) == x).collect();
    roots.sort_by_key(|&r| rank[forest.mode[r]]);
    let mut id_of = vec![usize::MAX; n];
    for (c, &r) in roots.iter().enumerate() {
        id_of[r] = c;
    }
    let labels = (0..n).map(|x| id_of[forest.find(x)]).collect();
    let peaks = roots.iter().map(|&r| forest.mode[r]).collect();
    SweepOutcome { labels: ClusterLabels { labels, count: roots.len() }, merged, peaks }
}

/// Full (threshold-free) persistence diagram of `density` over `adj`.
pub fn persistence_diagram(adj: &[Vec<usize>], density: &[f64]) -> PersistenceDiagram {
    let full = sweep(adj, density, f64::INFINITY);
    let mut pairs: Vec<PersistencePair> =
        full.peaks.iter().map(|&p| PersistencePair { birth: density[p], death: f64::NEG_INFINITY }).collect();
    pairs.extend(full.merged);
    PersistenceDiagram { pairs }
}

/// Mode-seeking clustering over an arbitrary undirected adjacency. Returns the
/// labels at threshold `tau` together with the full diagram.
pub fn persistence_cluster(adj: &[Vec<usize>], density: &[f64], tau: f64) -> (ClusterLabels, PersistenceDiagram) {
    let labels = sweep(adj, density, tau).labels;
    (labels, persistence_diagram(adj, density))
}

pub fn tomato_cluster(g: &NeighborGraph, density: &[f64], tau: f64) -> Result<(ClusterLabels, PersistenceDiagram)> {
    if density.len() != g.n {
        return Err(Error::param(format!("density has {} entries for {} points", density.len(), g.n)));
    }
    if tau.is_nan() || tau < 0.0 {
        return Err(Error::param("tau must be >= 0"));
    }
    Ok(persistence_cluster(&g.symmetric_adjacency(), density, tau))
}

/// Scale on which the sweep compares densities. The log scale keeps
/// prominences comparable across dimensions; in 12 dimensions raw balloon
/// densities span dozens of orders of magnitude.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityScale {
    Linear,
    #[default]
    Log,
}

/// What a bootstrap replicate recomputes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BootstrapDomain {
    /// Rebuild graph and density on the resampled points. Repeated draws
    /// collapse k-th neighbour distances, which in high dimension produces
    /// spurious dense modes and an inflated threshold.
    Resample,
    /// Keep the original points and graph; the resample only reweights the
    /// empirical measure the density is estimated from.
    #[default]
    Reweight,
}

/// Knobs of the bootstrap threshold rule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub bootstrap_replicates: usize,
    /// Quantile of the bootstrap distances, in percent.
    pub quantile: f64,
    pub multiplier: f64,
    pub density_scale: DensityScale,
    pub bootstrap_domain: BootstrapDomain,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            bootstrap_replicates: 20,
            quantile: 90.0,
            multiplier: 2.0,
            density_scale: DensityScale::Log,
            bootstrap_domain: BootstrapDomain::Reweight,
        }
    }
}

fn diagram_of(points: &Matrix, k: usize, scale: DensityScale) -> Result<PersistenceDiagram> {
    let g = knn_graph(points, k)?;
    let density = estimate_density(&g);
    Ok(persistence_diagram(&g.symmetric_adjacency(), density.scaled(scale)))
}

fn resample(n: usize, seed: u64, replicate: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64);
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// Every other point, ascending by `(distance, index)`.
fn neighbor_order(points: &Matrix) -> Vec<Vec<(usize, f64)>> {
    let n = points.nrows();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let pi = points.row(i);
            let mut v: Vec<(usize, f64)> =
                (0..n).filter(|&j| j != i).map(|j| (j, euclidean(pi, points.row(j)))).collect();
            v.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            v
        })
        .collect()
}

/// Balloon estimate at the original points under the measure that puts
/// `counts[j] / n` on point `j`; copies of the point itself are ignored, as
/// in the plain estimator.
fn reweighted_density(order: &[Vec<(usize, f64)>], counts: &[usize], k: usize, dim: usize) -> DensityEstimate {
    let n = order.len();
    let ln_norm = (n as f64).ln() + unit_ball_volume(dim).ln();
    let mut duplicates = Vec::new();
    let mut log_values: Vec<f64> = order
        .iter()
        .enumerate()
        .map(|(i, list)| {
            let mut acc = 0;
            let mut r = list.last().map_or(0.0, |p| p.1);
            for &(j, d) in list {
                acc += counts[j];
                if acc >= k {
                    r = d;
                    break;
                }
            }
            if r == 0.0 {
                duplicates.push(i);
                return f64::NAN;
            }
            (k as f64).ln() - ln_norm - dim as f64 * r.ln()
        })
        .collect();
    if !duplicates.is_empty() {
        let max = log_values.iter().copied().filter(|v| v.is_finite()).fold(f64::NAN, f64::max);
        let fill = if max.is_nan() { 0.0 } else { max };
        for &i in &duplicates {
            log_values[i] = fill;
        }
    }
    let values = log_values.iter().map(|v| v.exp()).collect();
    DensityEstimate { values, log_values, duplicates }
}

pub fn bootstrap_threshold_with(points: &Matrix, k: usize, cfg: &ClusterConfig, seed: u64) -> Result<f64> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::param("bootstrap needs at least 2 points"));
    }
    if cfg.bootstrap_replicates == 0 {
        return Err(Error::param("bootstrap replicates must be >= 1"));
    }
    let distances = match cfg.bootstrap_domain {
        BootstrapDomain::Resample => {
            let full = diagram_of(points, k, cfg.density_scale)?;
            (0..cfg.bootstrap_replicates)
                .into_par_iter()
                .map(|b| {
                    let idx = resample(n, seed, b);
                    let d = diagram_of(&points.select_rows(&idx), k, cfg.density_scale)?;
                    Ok(bottleneck_distance(&full, &d))
                })
                .collect::<Result<Vec<f64>>>()?
        }
        BootstrapDomain::Reweight => {
            let g = knn_graph(points, k)?;
            let adj = g.symmetric_adjacency();
            let full = persistence_diagram(&adj, estimate_density(&g).scaled(cfg.density_scale));
            let order = neighbor_order(points);
            (0..cfg.bootstrap_replicates)
                .into_par_iter()
                .map(|b| {
                    let mut counts = vec![0usize; n];
                    for i in resample(n, seed, b) {
                        counts[i] += 1;
                    }
                    let density = reweighted_density(&order, &counts, g.k, points.ncols());
                    bottleneck_distance(&full, &persistence_diagram(&adj, density.scaled(cfg.density_scale)))
                })
                .collect()
        }
    };
    Ok(cfg.multiplier * crate::stats::percentile(&distances, cfg.quantile))
}

/// `2 x` the 90th percentile of bottleneck distances between the full-sample
/// diagram and `replicates` bootstrap-resample diagrams.
pub fn bootstrap_threshold(points: &Matrix, k: usize, replicates: usize, seed: u64) -> Result<f64> {
    let cfg = ClusterConfig { bootstrap_replicates: replicates, ..Default::default() };
    bootstrap_threshold_with(points, k, &cfg, seed)
}

#[derive(Debug, Clone)]
pub struct AutomatoOutcome {
    pub labels: ClusterLabels,
    pub diagram: PersistenceDiagram,
    pub tau: f64,
}

pub fn automato(points: &Matrix, k: usize, cfg: &ClusterConfig, seed: u64) -> Result<AutomatoOutcome> {
    if k == 0 {
        return Err(Error::param("k must be positive"));
    }
    let n = points.nrows();
    if n == 0 {
        return Err(Error::Empty("no points to cluster".into()));
    }
    if n == 1 {
        return Ok(AutomatoOutcome {
            labels: ClusterLabels { labels: vec![0], count: 1 },
            diagram: PersistenceDiagram { pairs: vec![PersistencePair { birth: 1.0, death: f64::NEG_INFINITY }] },
            tau: 0.0,
        });
    }
    let g = knn_graph(points, k)?;
    let density = estimate_density(&g);
    let tau = bootstrap_threshold_with(points, k, cfg, seed)?;
    let (labels, diagram) = tomato_cluster(&g, density.scaled(cfg.density_scale), tau)?;
    Ok(AutomatoOutcome { labels, diagram, tau })
}

pub fn automato_cluster(points: &Matrix, k: usize, replicates: usize, seed: u64) -> Result<ClusterLabels> {
    let cfg = ClusterConfig { bootstrap_replicates: replicates, ..Default::default() };
    Ok(automato(points, k, &cfg, seed)?.labels)
}
