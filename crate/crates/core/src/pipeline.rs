//! End-to-end orchestration shared by the command line tool and the tests.
//! Each stage takes its inputs explicitly and derives its own seed from the
//! master seed, so stages can be rerun from intermediate files.

use std::collections::{BTreeMap, BTreeSet};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::anomaly::{ensemble_detect_with, node_anomaly_share, Aggregation, AnomalyResult, TieVote};
use crate::community::{segment, Segmentation, TauPolicy};
use crate::dataio::{
    build_customer_features, CustomerFeatureMatrix, FeatureConfig, ParseOptions, SyntheticConfig, TransactionTable,
};
use crate::error::{Error, Result};
use crate::mapper::{build_mapper, MapperGraph, MapperParams};
use crate::seed::{mix, stage_seed};
use crate::stability::{grid_search, stable_region, EpsPolicy, StabilityConfig, StabilityRecord, StableRegion};
use crate::validate::{pairwise_significance_with, Metric, SignificanceTable};

pub const STAGES: [&str; 6] = ["synth", "features", "stability", "detect", "segment", "validate"];

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSource {
    /// Transaction CSV; when absent the synthetic block is used.
    pub transactions: Option<PathBuf>,
    pub parse: ParseOptions,
    pub synthetic: SyntheticConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub gains: Vec<f64>,
    pub resolutions: Vec<usize>,
    pub ks: Vec<usize>,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { gains: vec![0.2, 0.25, 0.3], resolutions: vec![5, 6, 7], ks: vec![2, 3] }
    }
}

impl GridSpec {
    /// Cartesian product, gain-major.
    pub fn thetas(&self) -> Result<Vec<MapperParams>> {
        let mut out = Vec::new();
        for &g in &self.gains {
            for &r in &self.resolutions {
                for &k in &self.ks {
                    out.push(MapperParams::new(g, r, k).map_err(|e| Error::Config(e.to_string()))?);
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("parameter grid is empty".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StabilitySection {
    #[serde(flatten)]
    pub params: StabilityConfig,
    pub eps: EpsPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectConfig {
    pub ensemble_size: usize,
    pub percentile: u32,
    pub aggregation: Aggregation,
    pub tie: TieVote,
}

impl Default for DetectConfig {
    fn default() -> Self {
        DetectConfig { ensemble_size: 3, percentile: 10, aggregation: Aggregation::Mean, tie: TieVote::Normal }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegmentConfig {
    pub tau: TauPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidateConfig {
    pub alpha: f64,
    pub permutations: usize,
    pub metric: Metric,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig { alpha: 0.05, permutations: 999, metric: Metric::Euclidean }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSource,
    pub features: FeatureConfig,
    pub grid: GridSpec,
    pub stability: StabilitySection,
    pub detect: DetectConfig,
    pub segment: SegmentConfig,
    pub validate: ValidateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            data: DataSource::default(),
            features: FeatureConfig::default(),
            grid: GridSpec::default(),
            stability: StabilitySection::default(),
            detect: DetectConfig::default(),
            segment: SegmentConfig::default(),
            validate: ValidateConfig::default(),
        }
    }
}

impl RunConfig {
    /// Checks everything that can be checked without data.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.data.transactions.is_none() {
            self.data.synthetic.validate()?;
        }
        self.grid.thetas()?;
        let s = &self.stability.params;
        if s.n_samples < 2 {
            return bad("stability.n_samples must be >= 2");
        }
        if !(s.sample_fraction > 0.0 && s.sample_fraction <= 1.0) {
            return bad("stability.sample_fraction must lie in (0, 1]");
        }
        if s.cluster.bootstrap_replicates == 0 {
            return bad("stability.cluster.bootstrap_replicates must be >= 1");
        }
        if !(0.0..=100.0).contains(&s.cluster.quantile) || !(s.cluster.multiplier >= 0.0) {
            return bad("stability.cluster quantile must lie in [0, 100] and multiplier be >= 0");
        }
        if let EpsPolicy::Percentile { q } = self.stability.eps {
            if !(0.0..=100.0).contains(&q) {
                return bad("stability.eps percentile must lie in [0, 100]");
            }
        }
        if self.detect.ensemble_size == 0 {
            return bad("detect.ensemble_size must be >= 1");
        }
        if !(1..=100).contains(&self.detect.percentile) {
            return bad("detect.percentile must lie in [1, 100]");
        }
        match self.segment.tau {
            TauPolicy::Fixed { value } if !(value >= 0.0) => return bad("segment.tau must be >= 0"),
            TauPolicy::TargetCount { count: 0 } => return bad("segment target count must be >= 1"),
            _ => {}
        }
        if !(0.0..=1.0).contains(&self.validate.alpha) {
            return bad("validate.alpha must lie in [0, 1]");
        }
        if self.validate.permutations < 99 {
            return bad("validate.permutations must be >= 99");
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        stage_seed(self.seed, stage)
    }
}

/// Unstandardised customer features; standardisation happens per stage so
/// that the segmentation can rescale after anomalies are removed.
pub fn raw_features(tx: &TransactionTable, cfg: &FeatureConfig) -> Result<CustomerFeatureMatrix> {
    build_customer_features(tx, &FeatureConfig { standardize: false, ..cfg.clone() })
}

/// Standardizes `raw` when the config asks for it.
pub fn prepare(raw: &CustomerFeatureMatrix, cfg: &FeatureConfig) -> CustomerFeatureMatrix {
    if cfg.standardize && !raw.standardized {
        raw.standardized()
    } else {
        raw.clone()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScanOutcome {
    pub records: Vec<StabilityRecord>,
    pub region: StableRegion,
}

impl ScanOutcome {
    /// Scanned theta with the smallest combined score.
    pub fn theta_opt(&self) -> Option<MapperParams> {
        crate::stability::theta_opt(&self.records)
    }
}

pub fn run_stability(raw: &CustomerFeatureMatrix, cfg: &RunConfig) -> Result<ScanOutcome> {
    let features = prepare(raw, &cfg.features);
    let records = grid_search(&features, &cfg.grid.thetas()?, &cfg.stability.params, cfg.stage_seed("stability"))?;
    let (en, es) = cfg.stability.eps.thresholds(&records);
    let region = stable_region(&records, en, es);
    Ok(ScanOutcome { records, region })
}

/// Graphs on the full data for each theta, one derived seed per position.
pub fn full_graphs(
    features: &CustomerFeatureMatrix,
    thetas: &[MapperParams],
    cfg: &StabilityConfig,
    seed: u64,
) -> Result<Vec<MapperGraph>> {
    thetas.iter().enumerate().map(|(i, t)| build_mapper(features, t, &cfg.cluster, mix(seed, i as u64))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectOutcome {
    pub thetas: Vec<MapperParams>,
    pub customer_ids: Vec<String>,
    pub labels: Vec<bool>,
    /// Mean per-graph score.
    pub scores: Vec<f64>,
    pub members: Vec<AnomalyResult>,
    pub graphs: Vec<MapperGraph>,
}

impl DetectOutcome {
    pub fn anomalous(&self) -> BTreeSet<String> {
        self.customer_ids.iter().zip(&self.labels).filter(|(_, &l)| l).map(|(c, _)| c.clone()).collect()
    }

    /// Per-node anomalous share for every ensemble graph.
    pub fn node_shares(&self) -> Vec<Vec<f64>> {
        let bad = self.anomalous();
        self.graphs.iter().map(|g| node_anomaly_share(g, &|c| bad.contains(c))).collect()
    }
}

/// Lowest-instability thetas of the region.
pub fn ensemble_thetas(region: &StableRegion, size: usize) -> Result<Vec<MapperParams>> {
    if region.members.len() < size {
        return Err(Error::Insufficient(format!(
            "stable region holds {} parameter sets, ensemble needs {size}; relax the eps thresholds",
            region.members.len()
        )));
    }
    Ok(region.thetas()[..size].to_vec())
}

pub fn run_detect(raw: &CustomerFeatureMatrix, thetas: &[MapperParams], cfg: &RunConfig) -> Result<DetectOutcome> {
    let features = prepare(raw, &cfg.features);
    let graphs = full_graphs(&features, thetas, &cfg.stability.params, cfg.stage_seed("detect"))?;
    let d = &cfg.detect;
    let ids = features.customer_ids.clone();
    let out = ensemble_detect_with(&graphs, &ids, d.percentile, d.aggregation, d.tie)?;
    let g = out.members.len() as f64;
    let scores = (0..ids.len()).map(|i| out.members.iter().map(|m| m.scores[i]).sum::<f64>() / g).collect();
    Ok(DetectOutcome {
        thetas: thetas.to_vec(),
        customer_ids: ids,
        labels: out.labels,
        scores,
        members: out.members,
        graphs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentOutcome {
    pub theta: MapperParams,
    pub graph: MapperGraph,
    pub segmentation: Segmentation,
    /// Features the graph was built on (anomalies removed, rescaled).
    pub features: CustomerFeatureMatrix,
}

impl SegmentOutcome {
    pub fn assignment(&self) -> BTreeMap<String, usize> {
        let s = &self.segmentation;
        s.customer_ids.iter().cloned().zip(s.customer_assignment.iter().copied()).collect()
    }
}

pub fn run_segment(
    raw: &CustomerFeatureMatrix,
    anomalous: &BTreeSet<String>,
    theta: MapperParams,
    cfg: &RunConfig,
) -> Result<SegmentOutcome> {
    let kept = raw.filter_ids(|c| !anomalous.contains(c));
    if kept.len() < 3 {
        return Err(Error::Insufficient(format!("{} customers left after anomaly removal", kept.len())));
    }
    let features = prepare(&kept, &cfg.features);
    let graph = build_mapper(&features, &theta, &cfg.stability.params.cluster, cfg.stage_seed("segment"))?;
    let segmentation = segment(&graph, cfg.segment.tau)?;
    Ok(SegmentOutcome { theta, graph, segmentation, features })
}

pub fn run_validate(
    features: &CustomerFeatureMatrix,
    assignment: &BTreeMap<String, usize>,
    cfg: &RunConfig,
) -> Result<SignificanceTable> {
    let v = &cfg.validate;
    pairwise_significance_with(features, assignment, v.alpha, v.permutations, v.metric, cfg.stage_seed("validate"))
}
