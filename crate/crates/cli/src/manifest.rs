//! Run manifests and output bookkeeping.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use forestseg::io::write_cloud;
use forestseg::Cloud;
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Serialize)]
struct FileRecord {
    path: String,
    bytes: u64,
    sha256: String,
}

impl FileRecord {
    fn of(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self { path: path.display().to_string(), bytes: data.len() as u64, sha256: format!("{:x}", Sha256::digest(&data)) })
    }
}

#[derive(Serialize)]
struct Timing {
    stage: String,
    seconds: f64,
}

/// Everything needed to reproduce a command: arguments, effective
/// configuration, input and output digests. Timings and the worker count are
/// informational and do not affect results.
#[derive(Serialize)]
pub struct Manifest {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    argv: Vec<String>,
    workers: usize,
    summary: BTreeMap<String, toml::Value>,
    #[serde(skip_serializing_if = "toml::Table::is_empty")]
    config: toml::Table,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
    timings: Vec<Timing>,
}

impl Manifest {
    pub fn new(command: &'static str, argv: Vec<String>, workers: usize) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            argv,
            workers,
            summary: BTreeMap::new(),
            config: toml::Table::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: Vec::new(),
        }
    }

    /// Embeds a configuration as the `[config]` table.
    pub fn set_config<C: Serialize>(&mut self, config: &C) -> Result<()> {
        self.config = toml::Table::try_from(config).context("serializing configuration")?;
        Ok(())
    }

    /// Adds one named table under `[config]`.
    pub fn set_value<C: Serialize>(&mut self, key: &str, value: &C) -> Result<()> {
        let v = toml::Value::try_from(value).context("serializing configuration")?;
        self.config.insert(key.to_string(), v);
        Ok(())
    }

    pub fn summary(&mut self, key: &str, value: impl Into<toml::Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn timing(&mut self, stage: &str, seconds: f64) {
        self.timings.push(Timing { stage: stage.to_string(), seconds });
    }

    pub fn outputs(&mut self, outs: &Outputs) -> Result<()> {
        self.outputs = outs.paths.iter().map(|p| FileRecord::of(p)).collect::<Result<_>>()?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).context("serializing manifest")
    }
}

/// Files written by the current command. Unless committed, they are removed
/// on drop so a failed command leaves no partial results.
#[derive(Default)]
pub struct Outputs {
    paths: Vec<PathBuf>,
    committed: bool,
}

impl Outputs {
    pub fn track(&mut self, path: &Path) {
        self.paths.push(path.to_path_buf());
    }

    pub fn cloud(&mut self, cloud: &Cloud, path: &Path) -> Result<()> {
        self.track(path);
        write_cloud(cloud, path, None).with_context(|| format!("writing {}", path.display()))
    }

    pub fn text(&mut self, path: &Path, text: &str) -> Result<()> {
        self.track(path);
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn commit(&mut self) {
        self.committed = true;
    }
}

impl Drop for Outputs {
    fn drop(&mut self) {
        if !self.committed {
            for p in &self.paths {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}
