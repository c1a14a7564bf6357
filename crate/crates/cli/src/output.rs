//! CSV emission with content hashing, and the run manifest.

use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OutputFile {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageRecord {
    pub name: String,
    pub seconds: f64,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub stages: Vec<StageRecord>,
    pub outputs: Vec<OutputFile>,
    pub warnings: Vec<String>,
    /// Conventions a reader of the outputs should know about.
    pub notes: Vec<String>,
    /// Error-mode tag of the evaluation tests.
    pub error_mode: String,
    pub completed: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(config: RunConfig) -> Self {
        let error_mode = config.evaluate.error_mode.tag().to_string();
        Self {
            config,
            stages: Vec::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            notes: Vec::new(),
            error_mode,
            completed: false,
            failed_stage: None,
            error: None,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes files into the output directory and remembers their hashes.
#[derive(Debug)]
pub struct Writer {
    dir: PathBuf,
    pub files: Vec<OutputFile>,
}

/// Shortest round-trip decimal, so reruns are byte-identical.
pub fn num(v: f64) -> String {
    format!("{v}")
}

impl Writer {
    pub fn new(dir: &Path) -> std::io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        let rec = OutputFile {
            file: name.to_string(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len(),
        };
        match self.files.iter_mut().find(|f| f.file == name) {
            Some(f) => *f = rec,
            None => self.files.push(rec),
        }
        Ok(())
    }

    pub fn csv<S: AsRef<str>>(
        &mut self,
        name: &str,
        header: &[&str],
        rows: &[Vec<S>],
    ) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|c| c.as_ref()))?;
        }
        let bytes = w.into_inner().map_err(|e| e.into_error())?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> std::io::Result<()> {
        let json = serde_json::to_vec_pretty(manifest)?;
        std::fs::write(self.dir.join("manifest.json"), json)
    }
}
