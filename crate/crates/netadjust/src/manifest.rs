//! Run manifests: the effective configuration, SHA-256 of every input and
//! output, and the diagnostic counters. Field order is fixed and nothing
//! time-dependent is recorded, so identical runs give identical manifests.

use std::fs::File;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use netadjust_core::diagnostics::RunCounters;
use serde::Serialize;
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub role: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    pub config: Map<String, Value>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub counters: Map<String, Value>,
}

impl Manifest {
    pub fn new(command: &'static str) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            config: Map::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            counters: Map::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let value = serde_json::to_value(value).expect("config values serialise");
        self.config.insert(key.to_owned(), value);
    }

    pub fn input(&mut self, role: &str, path: &Path) -> Result<()> {
        self.inputs.push(digest(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        let role = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        self.outputs.push(digest(&role, path)?);
        Ok(())
    }

    pub fn counters(&mut self, counters: &RunCounters) {
        for (name, value) in counters.entries() {
            self.counters.insert(name.to_owned(), value.into());
        }
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counters.insert(name.to_owned(), value.into());
    }

    /// Writes `manifest.json` into `dir` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        crate::io::write_text(&path, &text)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

fn digest(role: &str, path: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        role: role.to_owned(),
        path: path.display().to_string(),
        sha256: sha256_file(path)?,
    })
}
