//! Output directory bookkeeping and the per-run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use partsim::split::sha256_hex;
use serde::Serialize;
use serde_json::Value;

use crate::access::ReadEvent;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const RUN_MANIFEST_FILE: &str = "run.manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }
}

/// Everything needed to replay a run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub workers: usize,
    pub config: RunConfig,
    pub inputs: Vec<FileRecord>,
    /// Split reads in order, with the stage each happened in.
    pub files_read: Vec<ReadEvent>,
    pub outputs: Vec<FileRecord>,
    /// Named checks run by the command, each with its outcome.
    pub audits: BTreeMap<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            workers: rayon::current_num_threads(),
            config: config.clone(),
            inputs: Vec::new(),
            files_read: Vec::new(),
            outputs: Vec::new(),
            audits: BTreeMap::new(),
        }
    }
}

/// An output directory that records what is written to it.
#[derive(Debug)]
pub struct OutDir {
    dir: PathBuf,
    written: Vec<FileRecord>,
}

impl OutDir {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_owned(),
            written: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        self.note(name, sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Records a file some other writer already put in the directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let rec = FileRecord::of(&self.dir.join(name))?;
        self.note(name, rec.sha256);
        Ok(())
    }

    fn note(&mut self, name: &str, sha256: String) {
        self.written.retain(|r| r.path != name);
        self.written.push(FileRecord {
            path: name.to_owned(),
            sha256,
        });
    }

    /// Writes the run manifest, listing every recorded output.
    pub fn finish(self, mut manifest: RunManifest) -> Result<()> {
        manifest.outputs = self.written.clone();
        let mut out = self;
        out.write_json(RUN_MANIFEST_FILE, &manifest)
    }
}
