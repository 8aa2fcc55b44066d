//! Atomic file output, CSV/JSON helpers and run manifests.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

use crate::error::CliError;

/// Used as the output directory when `--out` is not given.
pub const OUT_DIR_ENV: &str = "EHR_FUSION_OUT";
pub const MANIFEST_FILE: &str = "manifest.json";

pub fn resolve_out_dir(out: Option<PathBuf>) -> Result<PathBuf, CliError> {
    match out {
        Some(p) => Ok(p),
        None => std::env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .ok_or(CliError::NoOutputDir),
    }
}

pub fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Write through a sibling temporary file and rename, so readers never see
/// a partially written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path
        .file_name()
        .ok_or_else(|| CliError::InvalidArgument(format!("{} is not a file path", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", name.to_string_lossy()));
    std::fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner()
        .map_err(|e| CliError::Csv(csv::Error::from(e.into_error())))
}

pub fn json_bytes<T: Serialize + ?Sized>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Provenance record written last into every output directory.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub seeds: Vec<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub summary: serde_json::Value,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
}

/// Tracks a command's outputs and seals the directory with a manifest.
pub struct OutputDir {
    pub dir: PathBuf,
    outputs: Vec<String>,
    started: Instant,
    started_unix: u64,
}

impl OutputDir {
    pub fn create(dir: PathBuf) -> Result<Self, CliError> {
        create_dir(&dir)?;
        Ok(Self {
            dir,
            outputs: Vec::new(),
            started: Instant::now(),
            started_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    /// Atomically write a declared output.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        atomic_write(&self.path(name), bytes)?;
        self.declare(name);
        Ok(())
    }

    /// Record an output written by other means.
    pub fn declare(&mut self, name: &str) {
        if !self.outputs.iter().any(|o| o == name) {
            self.outputs.push(name.to_string());
        }
    }

    /// Check every declared output is present and non-empty, then write the
    /// manifest.
    pub fn finish(
        self,
        command: &str,
        config: serde_json::Value,
        seeds: Vec<u64>,
        inputs: Vec<String>,
        summary: serde_json::Value,
    ) -> Result<PathBuf, CliError> {
        for name in &self.outputs {
            let path = self.path(name);
            match std::fs::metadata(&path) {
                Ok(m) if m.len() > 0 => {}
                _ => return Err(CliError::OutputValidation(path)),
            }
        }
        let manifest = RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            seeds,
            inputs,
            outputs: self.outputs.clone(),
            summary,
            started_unix_secs: self.started_unix,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.path(MANIFEST_FILE);
        atomic_write(&path, &json_bytes(&manifest))?;
        Ok(path)
    }
}
