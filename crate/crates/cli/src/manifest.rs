//! Run manifests: enough to rerun a stage and check its outputs bit for bit.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use topoguard::pipeline::RunConfig;

use crate::error::{CliError, CliResult};

pub const TOOL: &str = concat!("topoguard ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the output directory when the file lives there.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub stage: String,
    pub master_seed: u64,
    pub stage_seed: u64,
    pub conventions: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
    /// The validated run config as TOML; `--config` accepts this manifest
    /// directly.
    pub config: String,
}

pub fn manifest_name(stage: &str) -> String {
    format!("manifest_{stage}.json")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Conventions that change results if they change. Bump the value when the
/// behaviour behind a key changes.
pub fn conventions(stage: &str) -> BTreeMap<String, String> {
    let mut c = BTreeMap::new();
    let mut put = |k: &str, v: &str| {
        c.insert(k.to_owned(), v.to_owned());
    };
    put("seed", "stage seed = first 8 bytes LE of sha256(master_le || stage); items via splitmix64");
    match stage {
        "synth" => put("generator", "synth/1: three regimes, mule and smurf templates, blended normals"),
        "features" => put("features", "features/1: 12 raw columns; later stages z-score with the population std"),
        "stability" => {
            put("mapper", "mapper/1: pca-2 filter fitted per sample, r x r cover, automato per patch");
            put("tomato", "tomato/1: log knn density, bootstrap tau = 2 x q90, reweighted replicates");
            put("stability", "stability/1: mean pairwise distance over samples, theta_opt = min score sum");
        }
        "detect" => {
            put("mapper", "mapper/1: pca-2 filter fitted per sample, r x r cover, automato per patch");
            put("anomaly", "anomaly/1: all aggregates <= linear-interpolated percentile, strict majority");
        }
        "segment" => {
            put("mapper", "mapper/1: pca-2 filter fitted per sample, r x r cover, automato per patch");
            put("community", "community/1: node-size density on largest component, gap rule with floor");
            put("permanova", "permanova/1: pairwise, (hits + 1) / (perms + 1), bh fdr");
        }
        "validate" => put("permanova", "permanova/1: pairwise, (hits + 1) / (perms + 1), bh fdr"),
        _ => {}
    }
    c
}

/// Collects the files a stage reads and writes.
pub struct StageIo {
    pub out_dir: PathBuf,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub warnings: Vec<String>,
}

impl StageIo {
    pub fn new(out_dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        Ok(StageIo { out_dir: out_dir.to_owned(), inputs: vec![], outputs: vec![], warnings: vec![] })
    }

    fn label(&self, path: &Path) -> String {
        path.strip_prefix(&self.out_dir).unwrap_or(path).to_string_lossy().into_owned()
    }

    /// Reads an input, failing with `missing` (an exit-3 condition) when absent.
    pub fn read(&mut self, path: &Path, missing: &str) -> CliResult<Vec<u8>> {
        if !path.exists() {
            return Err(CliError::Missing(format!("{} not found; {missing}", path.display())));
        }
        let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.inputs.push(FileDigest { path: self.label(path), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    pub fn read_out(&mut self, name: &str, missing: &str) -> CliResult<Vec<u8>> {
        let path = self.out_dir.join(name);
        self.read(&path, missing)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.out_dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.push(FileDigest { path: name.to_owned(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn warn(&mut self, msg: String) {
        eprintln!("warning: {msg}");
        self.warnings.push(msg);
    }

    pub fn finish(self, stage: &str, cfg: &RunConfig, config_toml: &str) -> CliResult<()> {
        let m = Manifest {
            tool: TOOL.to_owned(),
            stage: stage.to_owned(),
            master_seed: cfg.seed,
            stage_seed: cfg.stage_seed(stage),
            conventions: conventions(stage),
            inputs: self.inputs,
            outputs: self.outputs,
            warnings: self.warnings,
            config: config_toml.to_owned(),
        };
        let mut bytes = serde_json::to_vec_pretty(&m).map_err(topoguard::Error::from)?;
        bytes.push(b'\n');
        let path = self.out_dir.join(manifest_name(stage));
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))
    }
}
