use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use ledgerlens::pipeline::StageCounts;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Accounting of one command run, written next to its artifacts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub workers: usize,
    pub inputs: BTreeMap<String, usize>,
    /// Per stage, `input == succeeded + failed`.
    pub stages: BTreeMap<String, StageCounts>,
    /// Row or file counts of the written artifacts.
    pub outputs: BTreeMap<String, usize>,
    pub wall_time_secs: f64,
    /// Relative to the output directory.
    pub artifacts: Vec<String>,
}

pub struct Run {
    pub manifest: RunManifest,
    pub out_dir: PathBuf,
    started: Instant,
}

impl Run {
    pub fn new(command: &str, config_hash: String, seed: u64, workers: usize, out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                config_hash,
                seed,
                workers,
                inputs: BTreeMap::new(),
                stages: BTreeMap::new(),
                outputs: BTreeMap::new(),
                wall_time_secs: 0.0,
                artifacts: Vec::new(),
            },
            out_dir: out_dir.to_path_buf(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, name: &str, n: usize) {
        self.manifest.inputs.insert(name.into(), n);
    }

    pub fn stage(&mut self, name: &str, input: usize, succeeded: usize) {
        self.manifest.stages.insert(name.into(), StageCounts::tally(input, succeeded));
    }

    pub fn stage_counts(&mut self, name: &str, c: &StageCounts) {
        self.manifest.stages.insert(name.into(), c.clone());
    }

    pub fn output(&mut self, name: &str, n: usize) {
        self.manifest.outputs.insert(name.into(), n);
    }

    /// Path inside the output directory, recorded as an artifact.
    pub fn artifact(&mut self, rel: &str) -> PathBuf {
        if !self.manifest.artifacts.iter().any(|a| a == rel) {
            self.manifest.artifacts.push(rel.to_string());
        }
        self.out_dir.join(rel)
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<(), CliError> {
        let p = self.artifact(rel);
        std::fs::write(p, serde_json::to_string_pretty(value)? + "\n")?;
        Ok(())
    }

    pub fn has_failures(&self) -> bool {
        self.manifest.stages.values().any(|s| s.failed > 0)
    }

    /// Writes the manifest; returns whether any stage recorded failures.
    pub fn finish(mut self) -> Result<bool, CliError> {
        self.manifest.wall_time_secs = self.started.elapsed().as_secs_f64();
        let failed = self.has_failures();
        std::fs::write(self.out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&self.manifest)? + "\n")?;
        Ok(failed)
    }
}

/// One JSON object per line for external monitoring.
pub struct EventLog {
    out: Option<BufWriter<File>>,
}

impl EventLog {
    pub fn open(path: Option<&Path>) -> Result<Self, CliError> {
        let out = match path {
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    std::fs::create_dir_all(dir)?;
                }
                Some(BufWriter::new(File::create(p)?))
            }
            None => None,
        };
        Ok(Self { out })
    }

    pub fn emit(&mut self, command: &str, doc_id: &str, stage: &str, ok: bool, detail: Value) -> Result<(), CliError> {
        if let Some(w) = &mut self.out {
            let event = serde_json::json!({ "command": command, "doc_id": doc_id, "stage": stage, "ok": ok, "detail": detail });
            serde_json::to_writer(&mut *w, &event)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<(), CliError> {
        if let Some(w) = &mut self.out {
            w.flush()?;
        }
        Ok(())
    }
}
