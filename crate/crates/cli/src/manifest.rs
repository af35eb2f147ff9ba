//! Run manifests, written atomically next to a command's outputs.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize)]
pub struct Versions {
    pub chebgibbs: &'static str,
    pub cli: &'static str,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: Value,
    pub seed: Option<u64>,
    pub versions: Versions,
    pub started_unix_secs: u64,
    pub wall_clock_secs: f64,
    pub outputs: Vec<PathBuf>,
}

/// Collects outputs while a command runs.
pub struct ManifestBuilder {
    command: String,
    config: Value,
    seed: Option<u64>,
    started: SystemTime,
    clock: Instant,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: Value, seed: Option<u64>) -> Self {
        ManifestBuilder {
            command: command.to_string(),
            config,
            seed,
            started: SystemTime::now(),
            clock: Instant::now(),
            outputs: Vec::new(),
        }
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Writes `manifest.json` into `dir` via a temporary file and a rename.
    pub fn finish(self, dir: &Path) -> std::io::Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seed: self.seed,
            versions: Versions { chebgibbs: chebgibbs_version(), cli: env!("CARGO_PKG_VERSION") },
            started_unix_secs: self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_secs: self.clock.elapsed().as_secs_f64(),
            outputs: self.outputs,
        };
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

fn chebgibbs_version() -> &'static str {
    // Both crates share the workspace version.
    env!("CARGO_PKG_VERSION")
}

/// Writes `contents` to a sibling temporary file, then renames it over `path`.
pub fn write_atomic(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
