//! JSON record written next to the outputs of every run.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use soen_core::io_util::write_atomic;

use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub dt: Option<f64>,
    /// Free-form settings that shaped the run (preset, mode, gate...).
    pub settings: Vec<(String, String)>,
    pub outputs: Vec<PathBuf>,
    pub elapsed_s: f64,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn start(command: &str, config: Option<&Path>) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION"),
            config: config.map(Path::to_path_buf),
            seeds: Vec::new(),
            dt: None,
            settings: Vec::new(),
            outputs: Vec::new(),
            elapsed_s: 0.0,
            started: Some(Instant::now()),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.settings.push((key.to_string(), value.to_string()));
    }

    /// Writes `bytes` atomically to `path` and records it as an output.
    pub fn output(&mut self, path: PathBuf, bytes: &[u8]) -> Result<()> {
        write_atomic(&path, bytes)?;
        self.outputs.push(path);
        Ok(())
    }

    pub fn finish(mut self, dir: &Path) -> Result<PathBuf> {
        if let Some(t) = self.started {
            self.elapsed_s = t.elapsed().as_secs_f64();
        }
        let path = dir.join(format!("{}.manifest.json", self.command));
        let json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        write_atomic(&path, json.as_bytes())?;
        Ok(path)
    }
}
