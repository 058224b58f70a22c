//! Run configuration: TOML file, then `LEDGERLENS_` environment overrides,
//! then command-line flags.

use std::path::Path;

use ledgerlens::eval::CostScenario;
use ledgerlens::model::{HyperParams, MaxFeatures};
use ledgerlens::ocr::RemoteOcrConfig;
use ledgerlens::pipeline::PipelineConfig;
use ledgerlens::synthcards::{SynthCardConfig, SynthParcelSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::CliError;

pub const ENV_PREFIX: &str = "LEDGERLENS_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    /// Worker threads; 0 uses the available parallelism.
    pub workers: usize,
    pub pipeline: PipelineConfig,
    pub remote: RemoteOcrConfig,
    pub forest: ForestConfig,
    pub synth_cards: SynthCardConfig,
    pub synth_parcels: SynthParcelSpec,
    pub cost: Option<CostScenario>,
}

/// A hyperparameter preset with optional per-field overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub preset: String,
    pub n_estimators: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples_split: Option<usize>,
    pub max_features: Option<String>,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { preset: "desk".into(), n_estimators: None, max_depth: None, min_samples_split: None, max_features: None }
    }
}

impl ForestConfig {
    pub fn resolve(&self, seed: u64) -> Result<HyperParams, CliError> {
        let mut hp = HyperParams::preset(&self.preset)?;
        hp.seed = seed;
        if let Some(v) = self.n_estimators {
            hp.n_estimators = v;
        }
        if let Some(v) = self.max_depth {
            hp.max_depth = v;
        }
        if let Some(v) = self.min_samples_split {
            hp.min_samples_split = v;
        }
        if let Some(v) = &self.max_features {
            hp.max_features = v.parse::<MaxFeatures>()?;
        }
        hp.validate()?;
        Ok(hp)
    }
}

/// Parses an override as a TOML value, falling back to a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// `LEDGERLENS_PIPELINE__RETAIN=0.9` sets `pipeline.retain`.
pub fn apply_env(table: &mut Table, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), CliError> {
    for (key, raw) in vars {
        let Some(rest) = key.strip_prefix(ENV_PREFIX) else { continue };
        let path: Vec<String> = rest.split("__").map(str::to_ascii_lowercase).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Config(format!("malformed override variable {key}")));
        }
        let mut t = &mut *table;
        for part in &path[..path.len() - 1] {
            let entry = t.entry(part.clone()).or_insert_with(|| Value::Table(Table::new()));
            t = entry.as_table_mut().ok_or_else(|| CliError::Config(format!("{key}: {part} is not a section")))?;
        }
        t.insert(path[path.len() - 1].clone(), parse_value(&raw));
    }
    Ok(())
}

pub fn load(path: Option<&Path>, vars: impl IntoIterator<Item = (String, String)>) -> Result<Config, CliError> {
    let mut table = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
            text.parse::<Table>().map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
        }
        None => Table::new(),
    };
    apply_env(&mut table, vars)?;
    let cfg: Config = Value::Table(table).try_into().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

impl Config {
    /// Rejects out-of-range values up front, whatever the command.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: ledgerlens::Error| CliError::Config(e.to_string());
        self.pipeline.validate().map_err(bad)?;
        self.remote.validate().map_err(bad)?;
        self.synth_parcels.validate().map_err(bad)?;
        if let Some(c) = &self.cost {
            c.validate().map_err(bad)?;
        }
        self.forest.resolve(self.seed).map(|_| ())
    }

    /// SHA-256 of the effective configuration.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        Sha256::digest(canonical.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn env_overrides_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "seed = 3\n[pipeline]\nretain = 0.5\n").unwrap();
        let c = load(Some(&p), vars(&[("LEDGERLENS_PIPELINE__RETAIN", "0.9"), ("OTHER", "1")])).unwrap();
        assert_eq!((c.seed, c.pipeline.retain), (3, 0.9));
        let c = load(Some(&p), vars(&[("LEDGERLENS_FOREST__PRESET", "table4")])).unwrap();
        assert_eq!(c.forest.resolve(0).unwrap(), HyperParams::table4());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(load(None, vars(&[("LEDGERLENS_NOPE", "1")])), Err(CliError::Config(_))));
        assert!(matches!(load(None, vars(&[("LEDGERLENS_SEED", "x")])), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_tracks_content() {
        let a = Config::default();
        let b = Config { seed: 1, ..Config::default() };
        assert_eq!(a.hash(), Config::default().hash());
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
