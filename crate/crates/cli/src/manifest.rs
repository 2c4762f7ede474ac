//! Run manifests: the full resolved configuration of a command, digests of
//! its inputs, and the names of its outputs, written alongside every run.
//! Re-running from a manifest reproduces the outputs byte-for-byte (the
//! manifest's own timestamp aside).

use std::fs;
use std::path::Path;

use fnmr_audit::sim::GridSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL_NAME: &str = "fnmr-audit";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeConfig {
    pub input: String,
    pub replicates: usize,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulateConfig {
    pub grid: GridSpec,
    pub series: Option<String>,
}

/// What ran and with which fully-resolved settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "snake_case")]
pub enum CommandConfig {
    Analyze(AnalyzeConfig),
    Moe(AnalyzeConfig),
    Simulate(SimulateConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    /// Seconds since the Unix epoch at the time of the run. Excluded from
    /// reproducibility comparisons.
    pub unix_time: u64,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    #[serde(flatten)]
    pub command: CommandConfig,
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

impl RunManifest {
    pub fn new(
        command: CommandConfig,
        seed: u64,
        inputs: Vec<InputDigest>,
        outputs: Vec<String>,
    ) -> Self {
        let unix_time = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            tool: TOOL_NAME.to_string(),
            version: TOOL_VERSION.to_string(),
            unix_time,
            seed,
            inputs,
            outputs,
            command,
        }
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
    }

    pub fn read(path: &Path) -> crate::CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| format!("cannot read manifest {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("malformed manifest: {e}").into())
    }

    /// Confirms the recorded input digests still match the files on disk.
    pub fn verify_inputs(&self) -> crate::CliResult<()> {
        for input in &self.inputs {
            let actual = sha256_file(Path::new(&input.path))
                .map_err(|e| format!("cannot read input {}: {e}", input.path))?;
            if actual != input.sha256 {
                return Err(format!(
                    "input {} changed since the manifest was written (sha256 {} != {})",
                    input.path, actual, input.sha256
                )
                .into());
            }
        }
        Ok(())
    }
}
