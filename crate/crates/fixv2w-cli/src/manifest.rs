//! Run manifest: every command records its effective configuration (and its
//! hash), the digest of each input file, and the artifacts it wrote, so any
//! output can be traced back to exact inputs.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool: String,
    pub config: BTreeMap<String, Value>,
    pub config_sha256: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, config: BTreeMap<String, Value>) -> Result<Self, CliError> {
        let canonical = serde_json::to_vec(&config)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        Ok(Self {
            command: command.to_string(),
            tool: format!("fixv2w {}", env!("CARGO_PKG_VERSION")),
            config_sha256: hex::encode(Sha256::digest(&canonical)),
            config,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = std::fs::read(path)
            .map_err(|e| CliError::Data(format!("cannot read input {path:?}: {e}")))?;
        self.inputs
            .insert(path.display().to_string(), hex::encode(Sha256::digest(&bytes)));
        Ok(())
    }

    pub fn record_inputs<'a, I: IntoIterator<Item = &'a PathBuf>>(
        &mut self,
        paths: I,
    ) -> Result<(), CliError> {
        for path in paths {
            self.record_input(path)?;
        }
        Ok(())
    }

    pub fn record_output(&mut self, name: &str) {
        self.outputs.push(name.to_string());
    }

    pub fn write(&self, out_dir: &Path) -> Result<(), CliError> {
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        fixv2w_core::report::write_json(&path, self)
            .map_err(|e| CliError::Data(format!("cannot write manifest {path:?}: {e}")))
    }
}

/// Exclusive lock on the output directory, released on drop. A stale lock
/// (from a crashed run) must be removed manually.
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(out_dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(out_dir)
            .map_err(|e| CliError::Config(format!("cannot create output dir {out_dir:?}: {e}")))?;
        let path = out_dir.join(".lock");
        match std::fs::OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(Self { path }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Config(
                format!("output directory {out_dir:?} is locked by another run (remove {path:?} if stale)"),
            )),
            Err(e) => Err(CliError::Config(format!("cannot lock output dir: {e}"))),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.path);
    }
}
