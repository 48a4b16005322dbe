//! Output directory bookkeeping and the run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, Serialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub bytes: u64,
    /// FNV-1a of the file contents, hex.
    pub fnv1a: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Timing {
    pub phase: String,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub cli_version: &'static str,
    pub library_version: &'static str,
    pub subcommand: String,
    pub seed: u64,
    pub threads: usize,
    pub status: &'static str,
    pub summary: Value,
    /// The fully resolved configuration; `config.toml` holds the same
    /// settings in rerunnable form.
    pub config: Value,
    pub timings: Vec<Timing>,
    pub artifacts: Vec<ArtifactEntry>,
}

pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let h = bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    });
    format!("{h:016x}")
}

/// Writes files under one directory and remembers what was written.
pub struct OutputDir {
    root: PathBuf,
    artifacts: Vec<ArtifactEntry>,
    timings: Vec<Timing>,
    svg: bool,
}

impl OutputDir {
    pub fn create(root: &Path, svg: bool) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| CliError::Io(format!("{}: {e}", root.display())))?;
        Ok(Self {
            root: root.to_path_buf(),
            artifacts: Vec::new(),
            timings: Vec::new(),
            svg,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let bytes = contents.as_ref();
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Io(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(ArtifactEntry {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            fnv1a: fnv1a_hex(bytes),
        });
        Ok(())
    }

    /// Writes an SVG unless charts are switched off in the config.
    pub fn write_svg(&mut self, name: &str, svg: impl FnOnce() -> String) -> Result<(), CliError> {
        if self.svg {
            self.write(name, svg())?;
        }
        Ok(())
    }

    /// Runs `f` and records its wall time under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing {
            phase: phase.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        out
    }

    pub fn finish(self, mut manifest: Manifest, total: f64) -> Result<Manifest, CliError> {
        manifest.timings = self.timings;
        manifest.timings.push(Timing {
            phase: "total".into(),
            seconds: total,
        });
        manifest.artifacts = self.artifacts;
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
        let path = self.root.join("manifest.json");
        fs::write(&path, text + "\n").map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}
