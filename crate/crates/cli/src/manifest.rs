use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Serialize;

use cloudfuse::eval::sha256_hex;
use cloudfuse::{Error, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// What a command consumed and produced, before hashing.
pub struct Run {
    pub config_digest: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

/// Provenance record written beside every command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config_digest: String,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
    pub wall_clock_seconds: f64,
    /// Output path to hex sha256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, run: Run, elapsed: Duration) -> Result<Self> {
        let mut artifacts = BTreeMap::new();
        for path in &run.outputs {
            let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
            artifacts.insert(path.display().to_string(), sha256_hex(&bytes));
        }
        let show = |v: &[PathBuf]| v.iter().map(|p| p.display().to_string()).collect();
        Ok(Self {
            command: command.to_string(),
            config_digest: run.config_digest,
            seed: run.seed,
            inputs: show(&run.inputs),
            outputs: show(&run.outputs),
            wall_clock_seconds: elapsed.as_secs_f64(),
            artifacts,
        })
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let path = out.join(RUN_MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}
