//! Stage-scoped reads of a saved split.
//!
//! A command moves forward through [`Stage`]s and may only read the parts
//! its current stage allows. The test part opens only in
//! [`Stage::Evaluate`], which commands enter after all fitting is done.
//! Every read is logged and ends up in the run manifest.

use std::fs;
use std::path::{Path, PathBuf};

use partsim::split::{sha256_hex, SplitManifest, SplitPart, MANIFEST_FILE};
use partsim::InteractionMatrix;
use serde::Serialize;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    /// Training data only.
    Fit,
    /// Training and validation data.
    Select,
    /// Everything, test included.
    Evaluate,
}

impl Stage {
    pub fn allows(self, part: SplitPart) -> bool {
        match part {
            SplitPart::Train => true,
            SplitPart::Valid => self >= Stage::Select,
            SplitPart::Test => self == Stage::Evaluate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReadEvent {
    pub stage: Stage,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug)]
pub struct SplitAccess {
    dir: PathBuf,
    manifest: SplitManifest,
    stage: Stage,
    events: Vec<ReadEvent>,
}

impl SplitAccess {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = fs::read(&path)
            .map_err(|e| CliError::usage(format!("cannot read split manifest {}: {e}", path.display())))?;
        let manifest: SplitManifest = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::runtime(format!("bad split manifest {}: {e}", path.display())))?;
        let mut access = Self {
            dir: dir.to_owned(),
            manifest,
            stage: Stage::Fit,
            events: Vec::new(),
        };
        access.log(MANIFEST_FILE, sha256_hex(&bytes));
        Ok(access)
    }

    fn log(&mut self, file: &str, sha256: String) {
        log::info!("read {file} in stage {:?}", self.stage);
        self.events.push(ReadEvent {
            stage: self.stage,
            file: file.to_owned(),
            sha256,
        });
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    /// Moves to a later stage. Stages never go back.
    pub fn advance(&mut self, to: Stage) -> Result<()> {
        if to < self.stage {
            return Err(CliError::runtime(format!("cannot return from stage {:?} to {to:?}", self.stage)));
        }
        self.stage = to;
        Ok(())
    }

    pub fn read(&mut self, part: SplitPart) -> Result<InteractionMatrix> {
        if !self.stage.allows(part) {
            return Err(CliError::runtime(format!(
                "{} may not be read in stage {:?}",
                part.file_name(),
                self.stage
            )));
        }
        let m = self.manifest.read_split(&self.dir, part).map_err(CliError::runtime)?;
        let sha = match part {
            SplitPart::Train => self.manifest.file_sha256.train.clone(),
            SplitPart::Valid => self.manifest.file_sha256.valid.clone(),
            SplitPart::Test => self.manifest.file_sha256.test.clone(),
        };
        self.log(part.file_name(), sha);
        Ok(m)
    }

    pub fn manifest(&self) -> &SplitManifest {
        &self.manifest
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn events(&self) -> &[ReadEvent] {
        &self.events
    }
}
