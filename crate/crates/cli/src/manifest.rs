//! Run manifests: config echo, timing, checks and hashed artifacts.

use crate::config::{Experiment, ExperimentConfig};
use crate::experiments::{Artifact, Check};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fs;
use std::io::{self, Write};
use std::path::Path;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_ECHO_FILE: &str = "config.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: u64,
}

impl ArtifactEntry {
    pub fn of(file: &str, bytes: &[u8]) -> Self {
        Self {
            file: file.into(),
            sha256: sha256_hex(bytes),
            bytes: bytes.len() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckEntry {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl From<&Check> for CheckEntry {
    fn from(c: &Check) -> Self {
        Self {
            name: c.name.clone(),
            passed: c.passed,
            detail: c.detail.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Passed,
    CheckFailure,
    Divergence,
    Error,
}

impl RunStatus {
    pub fn exit_code(self) -> i32 {
        match self {
            RunStatus::Passed => 0,
            RunStatus::Divergence => 2,
            RunStatus::CheckFailure | RunStatus::Error => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub experiment: Experiment,
    pub seed: u64,
    pub config: serde_json::Value,
    pub started: String,
    pub finished: String,
    pub status: RunStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    pub checks: Vec<CheckEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(experiment: Experiment, cfg: &ExperimentConfig, started: String) -> Self {
        Self {
            tool: "diraclab".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            experiment,
            seed: cfg.seed,
            config: serde_json::to_value(cfg).expect("config serializes"),
            started,
            finished: String::new(),
            status: RunStatus::Error,
            message: None,
            checks: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn read(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }

    /// Files whose current hash differs from the recorded one.
    pub fn verify(&self, dir: &Path) -> io::Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            let bytes = fs::read(dir.join(&a.file))?;
            if sha256_hex(&bytes) != a.sha256 || bytes.len() as u64 != a.bytes {
                bad.push(a.file.clone());
            }
        }
        Ok(bad)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp"));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}

/// Writes the artifacts and config echo, then the manifest last.
pub fn persist(dir: &Path, manifest: &mut RunManifest, artifacts: &[Artifact], config_echo: &str) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    manifest.artifacts.clear();
    write_atomic(&dir.join(CONFIG_ECHO_FILE), config_echo.as_bytes())?;
    manifest.artifacts.push(ArtifactEntry::of(CONFIG_ECHO_FILE, config_echo.as_bytes()));
    for a in artifacts {
        write_atomic(&dir.join(&a.file), &a.bytes)?;
        manifest.artifacts.push(ArtifactEntry::of(&a.file, &a.bytes));
    }
    let mut json = serde_json::to_vec_pretty(manifest).map_err(io::Error::other)?;
    json.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &json)
}
