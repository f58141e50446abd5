use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct InputEntry {
    pub role: String,
    pub source: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    wall_time_s: f64,
    settings: &'a serde_json::Value,
    inputs: &'a [InputEntry],
    outputs: &'a [FileEntry],
}

/// Output directory where every file lands through a temp file and rename,
/// and a manifest hashes everything written.
pub struct OutputDir {
    dir: PathBuf,
    files: Vec<FileEntry>,
    inputs: Vec<InputEntry>,
    started: std::time::Instant,
}

impl OutputDir {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(OutputDir {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            inputs: Vec::new(),
            started: std::time::Instant::now(),
        })
    }

    pub fn record_input(&mut self, role: &str, source: &str, bytes: &[u8]) {
        self.inputs.push(InputEntry {
            role: role.into(),
            source: source.into(),
            sha256: sha256_hex(bytes),
        });
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let target = self.dir.join(name);
        let io = |e: std::io::Error| CliError::Io(format!("writing {}: {e}", target.display()));
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(&target).map_err(|e| io(e.error))?;
        self.files.push(FileEntry {
            path: name.into(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
        Ok(target)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("serializing {name}: {e}")))?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Writes `manifest.json` last. Wall time is the only field that changes
    /// between identical reruns.
    pub fn finish(mut self, command: &str, settings: serde_json::Value) -> Result<PathBuf, CliError> {
        let files = std::mem::take(&mut self.files);
        let inputs = std::mem::take(&mut self.inputs);
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            settings: &settings,
            inputs: &inputs,
            outputs: &files,
        };
        self.write_json("manifest.json", &manifest)
    }
}
