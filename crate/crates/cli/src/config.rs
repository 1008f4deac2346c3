//! Loading and echoing the run config.

use std::fs;
use std::path::Path;

use topoguard::pipeline::RunConfig;

use crate::error::{CliError, CliResult};
use crate::manifest::Manifest;

#[derive(Debug, Clone)]
pub struct Loaded {
    pub cfg: RunConfig,
    /// Canonical TOML of `cfg`, echoed into every manifest.
    pub toml: String,
}

/// Reads a TOML config, or the config echoed in a manifest when the path
/// ends in `.json`. `seed` overrides the file.
pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Loaded> {
    let mut cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            let text = if p.extension().is_some_and(|e| e == "json") {
                let m: Manifest =
                    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                m.config
            } else {
                text
            };
            parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    finish(cfg)
}

pub fn parse(text: &str) -> Result<RunConfig, toml::de::Error> {
    toml::from_str(text)
}

fn finish(cfg: RunConfig) -> CliResult<Loaded> {
    // TOML integers are signed
    if i64::try_from(cfg.seed).is_err() {
        return Err(CliError::Config(format!("seed {} does not fit in a signed 64-bit integer", cfg.seed)));
    }
    cfg.validate()?;
    let toml = toml::to_string(&cfg).map_err(|e| CliError::Config(e.to_string()))?;
    Ok(Loaded { cfg, toml })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let l = finish(RunConfig::default()).unwrap();
        assert_eq!(parse(&l.toml).unwrap(), l.cfg);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = parse("seed = 7\n[detect]\npercentile = 20\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.detect.percentile, 20);
        assert_eq!(cfg.detect.ensemble_size, RunConfig::default().detect.ensemble_size);
        assert_eq!(cfg.grid, RunConfig::default().grid);
    }

    #[test]
    fn tagged_policies_parse() {
        let cfg =
            parse("[segment.tau]\nkind = \"fixed\"\nvalue = 3.5\n[stability.eps]\nkind = \"percentile\"\nq = 60.0\n")
                .unwrap();
        assert_eq!(cfg.segment.tau, topoguard::community::TauPolicy::Fixed { value: 3.5 });
        let l = finish(cfg).unwrap();
        assert_eq!(parse(&l.toml).unwrap(), l.cfg);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let cfg = parse("[validate]\npermutations = 5\n").unwrap();
        assert_eq!(finish(cfg).unwrap_err().exit_code(), 2);
        let cfg = RunConfig { seed: u64::MAX, ..RunConfig::default() };
        assert_eq!(finish(cfg).unwrap_err().exit_code(), 2);
    }
}
