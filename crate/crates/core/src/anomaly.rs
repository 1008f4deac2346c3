//! Connectivity-based anomaly detection on a Mapper graph.
//!
//! Every node gets its seven NetSimile features plus its size. A customer's
//! row is the mean of those rows over the nodes it belongs to. A customer is
//! anomalous when its row sits at or below the `n`-th percentile in every
//! column at once, i.e. it lives in small, poorly connected parts of the graph.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph_metrics::{netsimile_features, SimpleGraph, NODE_FEATURES};
use crate::mapper::{MapperGraph, MapperParams};
use crate::matrix::Matrix;
use crate::stats;

/// Statistic used to collapse a customer's node rows.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    #[default]
    Mean,
    Median,
}

/// What an exactly even ensemble split resolves to.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieVote {
    #[default]
    Normal,
    Anomalous,
}

/// Customer rows: 7 node features + node size.
#[derive(Debug, Clone, PartialEq)]
pub struct CustomerFeatureAggregate {
    pub customer_ids: Vec<String>,
    pub values: Matrix,
}

pub fn aggregate_column_names() -> Vec<String> {
    let mut v: Vec<String> = NODE_FEATURES.iter().map(|s| s.to_string()).collect();
    v.push("node_size".into());
    v
}

/// Node rows `F` with the size column appended.
pub fn node_rows(graph: &MapperGraph) -> Vec<[f64; 8]> {
    let f = netsimile_features(&SimpleGraph::from(graph));
    f.rows
        .iter()
        .zip(graph.nodes())
        .map(|(r, node)| {
            let mut row = [0.0; 8];
            row[..7].copy_from_slice(r);
            row[7] = node.size() as f64;
            row
        })
        .collect()
}

pub fn aggregate(graph: &MapperGraph, customers: &[String], stat: Aggregation) -> Result<CustomerFeatureAggregate> {
    let rows = node_rows(graph);
    let mut values = Matrix::zeros(customers.len(), 8);
    for (i, c) in customers.iter().enumerate() {
        let nodes = graph.find_customer_nodes(c)?;
        if nodes.is_empty() {
            return Err(Error::Internal(format!("customer `{c}` belongs to no node")));
        }
        for j in 0..8 {
            let vals: Vec<f64> = nodes.iter().map(|&v| rows[v][j]).collect();
            let v = match stat {
                Aggregation::Mean => stats::mean(&vals),
                Aggregation::Median => stats::median(&vals),
            };
            values.set(i, j, v);
        }
    }
    Ok(CustomerFeatureAggregate { customer_ids: customers.to_vec(), values })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyResult {
    pub customer_ids: Vec<String>,
    pub labels: Vec<bool>,
    pub scores: Vec<f64>,
    pub percentile_n: u32,
    pub theta: MapperParams,
    /// Per-column thresholds `tau`.
    pub thresholds: Vec<f64>,
}

impl AnomalyResult {
    pub fn anomalous_ids(&self) -> impl Iterator<Item = &str> {
        self.customer_ids.iter().zip(&self.labels).filter(|(_, &l)| l).map(|(c, _)| c.as_str())
    }
}

fn check_percentile(n: u32) -> Result<()> {
    if !(1..=100).contains(&n) {
        return Err(Error::param(format!("percentile n={n} outside [1, 100]")));
    }
    Ok(())
}

/// Labels from an aggregate: anomalous iff every column is `<= tau[j]`.
pub fn label_aggregate(agg: &CustomerFeatureAggregate, n: u32) -> Result<(Vec<bool>, Vec<f64>)> {
    check_percentile(n)?;
    let cols = agg.values.ncols();
    let tau: Vec<f64> = (0..cols).map(|j| stats::percentile(&agg.values.column(j), n as f64)).collect();
    let labels = agg.values.rows_iter().map(|row| row.iter().zip(&tau).all(|(x, t)| x <= t)).collect();
    Ok((labels, tau))
}

pub fn detect_anomalies_with(
    graph: &MapperGraph,
    customers: &[String],
    n: u32,
    stat: Aggregation,
) -> Result<AnomalyResult> {
    check_percentile(n)?;
    let agg = aggregate(graph, customers, stat)?;
    let (labels, thresholds) = label_aggregate(&agg, n)?;
    Ok(AnomalyResult {
        customer_ids: customers.to_vec(),
        labels,
        scores: anomaly_score(&agg),
        percentile_n: n,
        theta: graph.params,
        thresholds,
    })
}

pub fn detect_anomalies(graph: &MapperGraph, customers: &[String], n: u32) -> Result<AnomalyResult> {
    detect_anomalies_with(graph, customers, n, Aggregation::Mean)
}

/// Negated mean of column-wise z-scores; higher means more anomalous.
/// Constant columns contribute 0.
pub fn anomaly_score(agg: &CustomerFeatureAggregate) -> Vec<f64> {
    let (m, p) = (agg.values.nrows(), agg.values.ncols());
    let moments: Vec<(f64, f64)> = (0..p)
        .map(|j| {
            let col = agg.values.column(j);
            (stats::mean(&col), stats::std_dev(&col))
        })
        .collect();
    (0..m)
        .map(|i| {
            let z: f64 = moments
                .iter()
                .enumerate()
                .map(|(j, &(mu, sd))| if sd > 0.0 { (agg.values.get(i, j) - mu) / sd } else { 0.0 })
                .sum();
            -z / p as f64
        })
        .collect()
}

/// Strict-majority vote over per-graph labels.
pub fn majority_vote(votes: &[Vec<bool>], tie: TieVote) -> Result<Vec<bool>> {
    let first = votes.first().ok_or_else(|| Error::param("no votes"))?;
    if votes.iter().any(|v| v.len() != first.len()) {
        return Err(Error::param("vote vectors differ in length"));
    }
    let g = votes.len();
    Ok((0..first.len())
        .map(|i| {
            let yes = votes.iter().filter(|v| v[i]).count();
            match (2 * yes).cmp(&g) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Less => false,
                std::cmp::Ordering::Equal => tie == TieVote::Anomalous,
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutcome {
    pub labels: Vec<bool>,
    pub members: Vec<AnomalyResult>,
}

pub fn ensemble_detect_with(
    graphs: &[MapperGraph],
    customers: &[String],
    n: u32,
    stat: Aggregation,
    tie: TieVote,
) -> Result<EnsembleOutcome> {
    if graphs.is_empty() {
        return Err(Error::param("ensemble needs at least one graph"));
    }
    let members: Vec<AnomalyResult> =
        graphs.iter().map(|g| detect_anomalies_with(g, customers, n, stat)).collect::<Result<_>>()?;
    let votes: Vec<Vec<bool>> = members.iter().map(|r| r.labels.clone()).collect();
    Ok(EnsembleOutcome { labels: majority_vote(&votes, tie)?, members })
}

pub fn ensemble_detect(graphs: &[MapperGraph], customers: &[String], n: u32) -> Result<Vec<bool>> {
    Ok(ensemble_detect_with(graphs, customers, n, Aggregation::Mean, TieVote::Normal)?.labels)
}

/// Share of anomalous members in every node.
pub fn node_anomaly_share(graph: &MapperGraph, anomalous: &dyn Fn(&str) -> bool) -> Vec<f64> {
    graph
        .nodes()
        .iter()
        .map(|n| {
            let bad = graph.member_ids(n.id).filter(|c| anomalous(c)).count();
            bad as f64 / n.size() as f64
        })
        .collect()
}

pub fn write_anomaly_csv<W: Write>(writer: W, customers: &[String], labels: &[bool], scores: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["customer_id", "label", "score"])?;
    for ((c, l), s) in customers.iter().zip(labels).zip(scores) {
        w.write_record([c.clone(), l.to_string(), format!("{s:?}")])?;
    }
    w.flush()?;
    Ok(())
}

/// Labels from a file written by [`write_anomaly_csv`].
pub fn read_anomaly_labels<R: Read>(reader: R) -> Result<BTreeMap<String, bool>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    for (i, name) in ["customer_id", "label"].iter().enumerate() {
        if header.get(i) != Some(name) {
            return Err(Error::MissingColumn((*name).into()));
        }
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let id = rec.get(0).unwrap_or_default().to_owned();
        let label = match rec.get(1) {
            Some("true") => true,
            Some("false") => false,
            other => return Err(Error::param(format!("bad label {other:?} for `{id}`"))),
        };
        if out.insert(id.clone(), label).is_some() {
            return Err(Error::param(format!("duplicate customer id `{id}`")));
        }
    }
    Ok(out)
}
