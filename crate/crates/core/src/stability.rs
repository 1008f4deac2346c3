//! Subsampling instability of Mapper graphs and the stable-region scan.
//!
//! For `n` subsamples `D_1..D_n` the instability of parameters `theta` under a
//! graph distance `d` is the mean of `d(M(D_i), M(D_j))` over all unordered
//! pairs `i < j`.

use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::CustomerFeatureMatrix;
use crate::error::{Error, Result};
use crate::graph_metrics::{canberra, normalized_laplacian_spectrum, signature, spectrum_distance, SimpleGraph};
use crate::mapper::{build_mapper, build_mapper_with_filter, fit_filter, MapperGraph, MapperParams};
use crate::seed::{fingerprint, mix};
use crate::tomato::ClusterConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphDistance {
    Netsimile,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterFit {
    /// Fit the principal components on every subsample.
    PerSample,
    /// Fit once on the full data and reuse it for every subsample.
    Global,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilityConfig {
    pub n_samples: usize,
    pub sample_fraction: f64,
    pub filter_fit: FilterFit,
    pub cluster: ClusterConfig,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            n_samples: 5,
            sample_fraction: 0.8,
            filter_fit: FilterFit::PerSample,
            cluster: ClusterConfig::default(),
        }
    }
}

/// `n` row-subsamples of size `ceil(fraction * m)`, each drawn without
/// replacement; rows keep their original relative order.
pub fn draw_samples(
    features: &CustomerFeatureMatrix,
    n: usize,
    fraction: f64,
    seed: u64,
) -> Result<Vec<CustomerFeatureMatrix>> {
    if n < 2 {
        return Err(Error::param("need at least 2 samples"));
    }
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::param("sample fraction must lie in (0, 1]"));
    }
    let m = features.len();
    let size = ((fraction * m as f64).ceil() as usize).min(m);
    if size < 3 {
        return Err(Error::param(format!("sample fraction {fraction} of {m} rows gives < 3 rows")));
    }
    Ok((0..n)
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s as u64);
            let mut idx = sample(&mut rng, m, size).into_vec();
            idx.sort_unstable();
            features.select(&idx)
        })
        .collect())
}

/// Builds one graph per sample. A sample's clustering seed depends only on
/// `seed` and its customer ids.
pub fn sample_graphs(
    theta: &MapperParams,
    samples: &[CustomerFeatureMatrix],
    cfg: &StabilityConfig,
    full: Option<&CustomerFeatureMatrix>,
    seed: u64,
) -> Result<Vec<MapperGraph>> {
    let global = match (cfg.filter_fit, full) {
        (FilterFit::Global, Some(f)) => Some(fit_filter(f)?),
        (FilterFit::Global, None) => return Err(Error::param("global filter fit needs the full feature matrix")),
        _ => None,
    };
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            // keyed on content so identical samples give identical graphs
            let sseed = mix(seed, fingerprint(s.customer_ids.iter().map(String::as_str)));
            let g = match &global {
                Some(f) => build_mapper_with_filter(s, f, theta, &cfg.cluster, sseed)?,
                None => build_mapper(s, theta, &cfg.cluster, sseed)?,
            };
            if g.is_empty() {
                return Err(Error::EmptyGraph { index: i });
            }
            Ok(g)
        })
        .collect()
}

/// Mean over unordered pairs of a precomputed per-graph summary.
fn mean_pairwise<T: Sync>(items: &[T], d: impl Fn(&T, &T) -> f64 + Sync) -> f64 {
    let n = items.len();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    let sum: f64 = pairs.iter().map(|&(i, j)| d(&items[i], &items[j])).sum();
    2.0 / (n * (n - 1)) as f64 * sum
}

/// Instability of a fixed set of graphs.
pub fn graphs_instability(graphs: &[MapperGraph], distance: GraphDistance) -> Result<f64> {
    if graphs.len() < 2 {
        return Err(Error::param("need at least 2 graphs"));
    }
    if let Some(i) = graphs.iter().position(MapperGraph::is_empty) {
        return Err(Error::EmptyGraph { index: i });
    }
    let simple: Vec<SimpleGraph> = graphs.iter().map(SimpleGraph::from).collect();
    Ok(match distance {
        GraphDistance::Netsimile => {
            let sigs: Vec<_> = simple.par_iter().map(signature).collect();
            mean_pairwise(&sigs, |a, b| canberra(&a.0, &b.0))
        }
        GraphDistance::Spectral => {
            let specs: Vec<_> = simple.par_iter().map(normalized_laplacian_spectrum).collect();
            mean_pairwise(&specs, |a, b| spectrum_distance(a, b, None))
        }
    })
}

pub fn instability_score(
    theta: &MapperParams,
    samples: &[CustomerFeatureMatrix],
    distance: GraphDistance,
    cfg: &StabilityConfig,
    seed: u64,
) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::param("need at least 2 samples"));
    }
    let graphs = sample_graphs(theta, samples, cfg, None, seed)?;
    graphs_instability(&graphs, distance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub theta: MapperParams,
    /// `None` when the scan failed for this theta; see `error`.
    pub score_netsimile: Option<f64>,
    pub score_spectral: Option<f64>,
    pub n_samples: usize,
    pub sample_fraction: f64,
    pub seed: u64,
    pub error: Option<String>,
}

impl StabilityRecord {
    pub fn scores(&self) -> Option<(f64, f64)> {
        Some((self.score_netsimile?, self.score_spectral?))
    }
}

/// Scores every theta against one shared sample set.
pub fn grid_search(
    features: &CustomerFeatureMatrix,
    grid: &[MapperParams],
    cfg: &StabilityConfig,
    seed: u64,
) -> Result<Vec<StabilityRecord>> {
    if grid.is_empty() {
        return Err(Error::param("empty parameter grid"));
    }
    let samples = draw_samples(features, cfg.n_samples, cfg.sample_fraction, seed)?;
    let graph_seed = mix(seed, u64::MAX);
    Ok(grid
        .iter()
        .map(|theta| {
            let scored = sample_graphs(theta, &samples, cfg, Some(features), graph_seed).and_then(|gs| {
                Ok((
                    graphs_instability(&gs, GraphDistance::Netsimile)?,
                    graphs_instability(&gs, GraphDistance::Spectral)?,
                ))
            });
            let (ns, sp, error) = match scored {
                Ok((a, b)) => (Some(a), Some(b), None),
                Err(e) => (None, None, Some(e.to_string())),
            };
            StabilityRecord {
                theta: *theta,
                score_netsimile: ns,
                score_spectral: sp,
                n_samples: cfg.n_samples,
                sample_fraction: cfg.sample_fraction,
                seed,
                error,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StableRegion {
    /// Sorted by `score_netsimile + score_spectral` ascending.
    pub members: Vec<StabilityRecord>,
    pub eps_netsimile: f64,
    pub eps_spectral: f64,
}

impl StableRegion {
    pub fn thetas(&self) -> Vec<MapperParams> {
        self.members.iter().map(|r| r.theta).collect()
    }
}

/// Keeps the records strictly below both thresholds. Failed records are
/// never members.
pub fn stable_region(records: &[StabilityRecord], eps_netsimile: f64, eps_spectral: f64) -> StableRegion {
    let mut members: Vec<StabilityRecord> = records
        .iter()
        .filter(|r| matches!(r.scores(), Some((a, b)) if a < eps_netsimile && b < eps_spectral))
        .cloned()
        .collect();
    members.sort_by(|a, b| {
        let sa = a.scores().map_or(f64::INFINITY, |(x, y)| x + y);
        let sb = b.scores().map_or(f64::INFINITY, |(x, y)| x + y);
        sa.total_cmp(&sb)
    });
    StableRegion { members, eps_netsimile, eps_spectral }
}

/// Successful record with the smallest score sum; ties keep the earlier
/// record. This is the parameter set reported as the optimum of a scan.
pub fn theta_opt(records: &[StabilityRecord]) -> Option<MapperParams> {
    records
        .iter()
        .filter_map(|r| r.scores().map(|(a, b)| (a + b, r.theta)))
        .fold(None, |best: Option<(f64, MapperParams)>, (s, t)| match best {
            Some((bs, _)) if bs <= s => best,
            _ => Some((s, t)),
        })
        .map(|(_, t)| t)
}

/// Threshold policy for the stable region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsPolicy {
    /// Per-score percentile of the scan's successful records.
    Percentile {
        q: f64,
    },
    Fixed {
        netsimile: f64,
        spectral: f64,
    },
}

impl Default for EpsPolicy {
    fn default() -> Self {
        EpsPolicy::Percentile { q: 50.0 }
    }
}

impl EpsPolicy {
    pub fn thresholds(&self, records: &[StabilityRecord]) -> (f64, f64) {
        match *self {
            EpsPolicy::Fixed { netsimile, spectral } => (netsimile, spectral),
            EpsPolicy::Percentile { q } => {
                let ok: Vec<(f64, f64)> = records.iter().filter_map(StabilityRecord::scores).collect();
                let a: Vec<f64> = ok.iter().map(|s| s.0).collect();
                let b: Vec<f64> = ok.iter().map(|s| s.1).collect();
                (crate::stats::percentile(&a, q), crate::stats::percentile(&b, q))
            }
        }
    }
}

/// Scan table: one row per theta with both scores.
pub fn write_scan_csv<W: Write>(writer: W, records: &[StabilityRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["gain", "resolution", "k", "score_netsimile", "score_spectral", "error"])?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
    for r in records {
        w.write_record([
            format!("{:?}", r.theta.gain),
            r.theta.resolution.to_string(),
            r.theta.k.to_string(),
            fmt(r.score_netsimile),
            fmt(r.score_spectral),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
