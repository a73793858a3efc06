use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::args::Command;
use crate::failure::{CliResult, Failure};

/// How a 64-bit seed becomes an initial grid.
pub const SEED_EXPANSION: &str =
    "ChaCha8 seeded from the u64; node i takes the top 53 bits of the i-th draw as k/2^53, zero redrawn; perturbation adds delta mod 1";

/// Everything needed to rerun a command bit for bit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub seeds: Vec<u64>,
    pub seed_expansion: String,
    pub params: Command,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
    #[serde(default)]
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Failure::validation(format!("{}: not a run manifest: {e}", path.display())))
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Failure::io(path, e))
    }
}

/// `<out>.manifest.json`, or `<command>.manifest.json` when output goes to stdout.
pub fn default_path(command: &str, out: Option<&Path>) -> PathBuf {
    match out {
        Some(out) => sidecar(out, "manifest.json"),
        None => PathBuf::from(format!("{command}.manifest.json")),
    }
}

pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}
