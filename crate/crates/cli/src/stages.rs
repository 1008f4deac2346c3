//! One function per subcommand. Each reads its inputs from the output
//! directory (or the configured transaction file) and writes flat files back.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use topoguard::anomaly::{read_anomaly_labels, write_anomaly_csv};
use topoguard::community::{overlay, overlay_dot, read_assignment_csv, write_assignment_csv};
use topoguard::dataio::{
    generate_synthetic, parse_transactions, read_features_csv, write_features_csv, write_rejects_csv,
    write_transactions, CustomerFeatureMatrix,
};
use topoguard::mapper::MapperParams;
use topoguard::pipeline::{
    ensemble_thetas, prepare, raw_features, run_detect, run_segment, run_stability, run_validate, RunConfig,
};
use topoguard::stability::{write_scan_csv, StabilityRecord, StableRegion};
use topoguard::validate::{write_significance_csv, SignificanceTable};

use crate::error::{CliError, CliResult};
use crate::manifest::StageIo;

pub const TRANSACTIONS: &str = "transactions.csv";
pub const GROUND_TRUTH: &str = "ground_truth.json";
pub const REJECTS: &str = "rejects.csv";
pub const FEATURES: &str = "features.csv";
pub const SCAN: &str = "stability_scan.csv";
pub const REGION: &str = "stable_region.json";
pub const ANOMALIES: &str = "anomalies.csv";
pub const NODE_SHARES: &str = "node_anomaly_share.csv";
pub const COMMUNITIES: &str = "communities.csv";
pub const OVERLAY_JSON: &str = "community_overlay.json";
pub const OVERLAY_DOT: &str = "community_overlay.dot";
pub const SIGNIFICANCE: &str = "significance.csv";

/// Stable region as written to disk. Unbounded thresholds are `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFile {
    /// Scanned theta with the smallest score sum, stable or not.
    pub theta_opt: Option<MapperParams>,
    pub eps_netsimile: Option<f64>,
    pub eps_spectral: Option<f64>,
    pub members: Vec<StabilityRecord>,
}

impl RegionFile {
    fn new(theta_opt: Option<MapperParams>, r: StableRegion) -> Self {
        let finite = |x: f64| x.is_finite().then_some(x);
        RegionFile {
            theta_opt,
            eps_netsimile: finite(r.eps_netsimile),
            eps_spectral: finite(r.eps_spectral),
            members: r.members,
        }
    }

    fn region(&self) -> StableRegion {
        StableRegion {
            members: self.members.clone(),
            eps_netsimile: self.eps_netsimile.unwrap_or(f64::INFINITY),
            eps_spectral: self.eps_spectral.unwrap_or(f64::INFINITY),
        }
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> topoguard::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut buf = serde_json::to_vec_pretty(value).map_err(topoguard::Error::from)?;
    buf.push(b'\n');
    Ok(buf)
}

fn read_features(io: &mut StageIo) -> CliResult<CustomerFeatureMatrix> {
    let bytes = io.read_out(FEATURES, "run `topoguard features` first")?;
    Ok(read_features_csv(bytes.as_slice(), false)?)
}

fn read_region(io: &mut StageIo) -> CliResult<RegionFile> {
    let bytes = io.read_out(REGION, "run `topoguard stability` first")?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::Core(e.into()))
}

fn write_significance(io: &mut StageIo, table: &SignificanceTable) -> CliResult<()> {
    for (k, n) in &table.excluded {
        io.warn(format!("community {k} has {n} member(s) and is left out of the tests"));
    }
    io.write(SIGNIFICANCE, &csv_bytes(|b| write_significance_csv(b, table))?)?;
    let significant = table.rows.iter().filter(|r| r.significant).count();
    println!("{significant} of {} community pairs significant at corrected p <= {}", table.rows.len(), table.alpha);
    Ok(())
}

pub fn synth(cfg: &RunConfig, io: &mut StageIo) -> CliResult<()> {
    let (tx, truth) = generate_synthetic(&cfg.data.synthetic, cfg.stage_seed("synth"))?;
    io.write(TRANSACTIONS, &csv_bytes(|b| write_transactions(b, &tx, &cfg.data.parse))?)?;
    io.write(GROUND_TRUTH, &json_bytes(&truth)?)?;
    println!("{} transactions for {} customers", tx.len(), truth.anomaly_labels.len());
    Ok(())
}

pub fn features(cfg: &RunConfig, io: &mut StageIo) -> CliResult<()> {
    let bytes = match &cfg.data.transactions {
        Some(p) => io.read(p, "check data.transactions")?,
        None => io.read_out(TRANSACTIONS, "set data.transactions or run `topoguard synth` first")?,
    };
    let parsed = parse_transactions(bytes.as_slice(), &cfg.data.parse)?;
    if !parsed.rejects.is_empty() {
        io.warn(format!("{} row(s) rejected, see {REJECTS}", parsed.rejects.len()));
    }
    io.write(REJECTS, &csv_bytes(|b| write_rejects_csv(b, &parsed.rejects))?)?;
    let raw = raw_features(&parsed.table, &cfg.features)?;
    io.write(FEATURES, &csv_bytes(|b| write_features_csv(b, &raw))?)?;
    println!("{} customers from {} transactions", raw.len(), parsed.table.len());
    Ok(())
}

/// Writes the scan even when the region is empty; that case comes back as
/// the deferred error so the manifest still gets written.
pub fn stability(cfg: &RunConfig, io: &mut StageIo) -> CliResult<Option<CliError>> {
    let raw = read_features(io)?;
    let scan = run_stability(&raw, cfg)?;
    let opt = scan.theta_opt();
    for r in scan.records.iter().filter(|r| r.error.is_some()) {
        io.warn(format!("theta {} failed: {}", r.theta, r.error.as_deref().unwrap_or_default()));
    }
    io.write(SCAN, &csv_bytes(|b| write_scan_csv(b, &scan.records))?)?;
    let region = RegionFile::new(opt, scan.region);
    io.write(REGION, &json_bytes(&region)?)?;
    match opt.and_then(|t| scan.records.iter().find(|r| r.theta == t)) {
        Some(r) => {
            let (a, b) = r.scores().unwrap_or_default();
            println!("theta_opt {} (netsimile {a:.6}, spectral {b:.6})", r.theta);
        }
        None => println!("theta_opt none: every theta failed"),
    }
    println!("stable region: {} of {} thetas", region.members.len(), scan.records.len());
    if region.members.is_empty() {
        return Ok(Some(CliError::Insufficient(
            "stable region is empty; relax stability.eps (a higher percentile or larger fixed thresholds)".into(),
        )));
    }
    Ok(None)
}

pub fn detect(cfg: &RunConfig, io: &mut StageIo) -> CliResult<()> {
    let raw = read_features(io)?;
    let region = read_region(io)?;
    let thetas = ensemble_thetas(&region.region(), cfg.detect.ensemble_size)?;
    let det = run_detect(&raw, &thetas, cfg)?;
    io.write(ANOMALIES, &csv_bytes(|b| write_anomaly_csv(b, &det.customer_ids, &det.labels, &det.scores))?)?;

    let mut shares = String::from("graph,gain,resolution,k,node_id,size,share\n");
    for (i, (g, s)) in det.graphs.iter().zip(det.node_shares()).enumerate() {
        let t = g.params;
        for (n, share) in g.nodes().iter().zip(&s) {
            let _ = writeln!(shares, "{i},{},{},{},{},{},{share:?}", t.gain, t.resolution, t.k, n.id, n.size());
        }
        let label = |v: usize| format!("{:.4}", s[v]);
        io.write(&format!("anomaly_overlay_{i}.dot"), g.to_dot(Some(("anomaly_share", &label))).as_bytes())?;
    }
    io.write(NODE_SHARES, shares.as_bytes())?;

    let flagged = det.labels.iter().filter(|&&l| l).count();
    let used: Vec<String> = thetas.iter().map(|t| t.to_string()).collect();
    println!("ensemble {}: {flagged} of {} customers flagged", used.join(" "), det.customer_ids.len());
    Ok(())
}

pub fn segment(cfg: &RunConfig, io: &mut StageIo) -> CliResult<()> {
    let raw = read_features(io)?;
    let labels = read_anomaly_labels(io.read_out(ANOMALIES, "run `topoguard detect` first")?.as_slice())?;
    let anomalous: BTreeSet<String> = labels.into_iter().filter(|(_, l)| *l).map(|(c, _)| c).collect();
    let theta = read_region(io)?
        .theta_opt
        .ok_or_else(|| CliError::Insufficient("the stability scan has no successful theta".into()))?;
    let seg = run_segment(&raw, &anomalous, theta, cfg)?;
    let s = &seg.segmentation;
    if s.partition.count == 0 {
        io.warn("the Mapper graph has no non-trivial component; every customer stays in community 0".into());
    }
    io.write(COMMUNITIES, &csv_bytes(|b| write_assignment_csv(b, &s.customer_ids, &s.customer_assignment))?)?;
    io.write(OVERLAY_JSON, &json_bytes(&overlay(&seg.graph, &s.partition))?)?;
    io.write(OVERLAY_DOT, overlay_dot(&seg.graph, &s.partition).as_bytes())?;
    println!(
        "theta {theta}: {} communities (tau {}) over {} customers, {} removed as anomalous",
        s.partition.count,
        s.partition.tau,
        s.customer_ids.len(),
        anomalous.len()
    );
    let table = run_validate(&seg.features, &seg.assignment(), cfg)?;
    write_significance(io, &table)
}

pub fn validate(cfg: &RunConfig, io: &mut StageIo) -> CliResult<()> {
    let raw = read_features(io)?;
    let bytes = io.read_out(COMMUNITIES, "run `topoguard segment` first")?;
    let assignment = read_assignment_csv(bytes.as_slice())?;
    let kept = raw.filter_ids(|c| assignment.contains_key(c));
    let table = run_validate(&prepare(&kept, &cfg.features), &assignment, cfg)?;
    write_significance(io, &table)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unbounded_region_survives_json() {
        let r = StableRegion { members: vec![], eps_netsimile: f64::INFINITY, eps_spectral: 0.25 };
        let f = RegionFile::new(None, r.clone());
        let back: RegionFile = serde_json::from_slice(&json_bytes(&f).unwrap()).unwrap();
        assert_eq!(back.region(), r);
    }
}
