use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Provenance record written next to every run's primary output.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: serde_json::Value,
    pub inputs: BTreeMap<String, String>,
    pub version: String,
    pub seed: u64,
    pub wall_clock_secs: f64,
}

pub struct ManifestBuilder {
    subcommand: String,
    seed: u64,
    inputs: BTreeMap<String, String>,
    started: Instant,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl ManifestBuilder {
    pub fn new(subcommand: &str, seed: u64) -> Self {
        Self {
            subcommand: subcommand.to_string(),
            seed,
            inputs: BTreeMap::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    pub fn finish<C: Serialize>(self, config: &C) -> Result<RunManifest> {
        Ok(RunManifest {
            subcommand: self.subcommand,
            config: serde_json::to_value(config)?,
            inputs: self.inputs,
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.seed,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// `out.tsv` -> `out.tsv.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

/// Writes the manifest beside `output`, or to stderr when there is no
/// output file (suppressed by `quiet`).
pub fn emit(manifest: &RunManifest, output: Option<&Path>, quiet: bool) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest)?;
    match output {
        Some(p) => {
            let path = manifest_path(p);
            fs::write(&path, json + "\n").with_context(|| format!("writing {}", path.display()))?;
        }
        None if !quiet => eprintln!("{json}"),
        None => {}
    }
    Ok(())
}
