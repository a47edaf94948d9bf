//! Run manifest: resolved config, timings, solver diagnostics and a SHA-256
//! digest for every file the run wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config: BTreeMap<String, String>,
    pub ignored_keys: Vec<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub kkt_violation: Option<f64>,
    pub converged: Option<bool>,
    pub warnings: Vec<String>,
    pub details: BTreeMap<String, Value>,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects outputs in one directory and records their digests.
pub struct OutputDir {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Write {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            entries: Vec::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|source| CliError::Write { path, source })?;
        self.entries.retain(|e| e.file != name);
        self.entries.push(OutputEntry {
            file: name.to_string(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    /// Fills in the output list and writes the manifest itself, which is not
    /// listed (it carries timings and so is not reproducible).
    pub fn finish(self, mut manifest: Manifest) -> Result<Manifest, CliError> {
        manifest.outputs = self.entries;
        let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        text.push('\n');
        let path = self.dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).map_err(|source| CliError::Write { path, source })?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn rewrite_replaces_entry() {
        let dir = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(dir.path()).unwrap();
        out.write("a.tsv", b"1").unwrap();
        out.write("a.tsv", b"22").unwrap();
        let m = out
            .finish(Manifest {
                command: "t".into(),
                version: "0".into(),
                seed: 0,
                config: BTreeMap::new(),
                ignored_keys: vec![],
                timings: BTreeMap::new(),
                kkt_violation: None,
                converged: None,
                warnings: vec![],
                details: BTreeMap::new(),
                outputs: vec![],
            })
            .unwrap();
        assert_eq!(m.outputs.len(), 1);
        assert_eq!(m.outputs[0].bytes, 2);
        assert!(dir.path().join(MANIFEST_FILE).exists());
    }
}
