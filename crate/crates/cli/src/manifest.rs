//! Per-stage manifests: content hashes of inputs and outputs plus the resolved configuration.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use landuse_core::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    stage: &'a str,
    tool_version: &'a str,
    seed: u64,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    config: serde_json::Value,
}

/// Tracks a stage's files and writes `manifest.<stage>.json` next to its outputs.
pub struct StageRecord {
    stage: &'static str,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl StageRecord {
    pub fn new(stage: &'static str) -> Self {
        StageRecord { stage, inputs: Vec::new(), outputs: Vec::new() }
    }

    /// Registers an input, failing with a missing-input error if it does not exist.
    pub fn input(&mut self, path: PathBuf) -> Result<PathBuf> {
        if !path.is_file() {
            return Err(Error::MissingInput(path));
        }
        self.inputs.push(path.clone());
        Ok(path)
    }

    /// Registers an output and creates its parent directory.
    pub fn output(&mut self, path: PathBuf) -> Result<PathBuf> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        self.outputs.push(path.clone());
        Ok(path)
    }

    pub fn finish(self, dir: &Path, seed: u64, config: serde_json::Value) -> Result<PathBuf> {
        let entries = |paths: &[PathBuf]| -> Result<Vec<FileEntry>> {
            paths
                .iter()
                .map(|p| Ok(FileEntry { path: p.display().to_string(), sha256: sha256_file(p)? }))
                .collect()
        };
        let manifest = Manifest {
            stage: self.stage,
            tool_version: TOOL_VERSION,
            seed,
            inputs: entries(&self.inputs)?,
            outputs: entries(&self.outputs)?,
            config,
        };
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("manifest.{}.json", self.stage));
        let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
        serde_json::to_writer_pretty(&mut w, &manifest)?;
        w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;
        log::info!("wrote {}", path.display());
        Ok(path)
    }
}
