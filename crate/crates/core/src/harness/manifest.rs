use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub global: u64,
    /// Effective range-noise seed, for LiDAR sensors.
    pub sensor: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    /// Path relative to the run directory, `/`-separated. Directories end
    /// in `/` and hash the sorted list of their files' digests.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub files: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs_hash: String,
    pub outputs: Vec<OutputRecord>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub tool_version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// SHA-256 and size of a file.
pub fn file_digest(path: &Path) -> std::io::Result<(String, u64)> {
    let bytes = fs::read(path)?;
    Ok((sha256_hex(&bytes), bytes.len() as u64))
}

/// Record for a file or directory below `run_dir`.
pub(crate) fn record(run_dir: &Path, rel: &str) -> std::io::Result<OutputRecord> {
    let full = run_dir.join(rel.trim_end_matches('/'));
    if !rel.ends_with('/') {
        let (sha256, bytes) = file_digest(&full)?;
        return Ok(OutputRecord {
            path: rel.to_string(),
            sha256,
            bytes,
            files: None,
        });
    }
    let mut names: Vec<String> = fs::read_dir(&full)?
        .map(|e| e.map(|e| e.file_name().to_string_lossy().into_owned()))
        .collect::<Result<_, _>>()?;
    names.sort();
    let mut listing = String::new();
    let mut total = 0;
    for name in &names {
        let (h, b) = file_digest(&full.join(name))?;
        listing.push_str(&format!("{h}  {name}\n"));
        total += b;
    }
    Ok(OutputRecord {
        path: rel.to_string(),
        sha256: sha256_hex(listing.as_bytes()),
        bytes: total,
        files: Some(names.len()),
    })
}

impl Manifest {
    pub fn load(run_dir: &Path) -> Option<Manifest> {
        let text = fs::read_to_string(run_dir.join(MANIFEST_FILE)).ok()?;
        serde_json::from_str(&text).ok()
    }

    pub fn save(&self, run_dir: &Path) -> std::io::Result<()> {
        let json = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(run_dir.join(MANIFEST_FILE), json + "\n")
    }

    /// True when the stage ran with `inputs_hash` and its outputs are still
    /// on disk unchanged.
    pub fn is_current(&self, run_dir: &Path, stage: &str, inputs_hash: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else {
            return false;
        };
        rec.inputs_hash == inputs_hash
            && rec
                .outputs
                .iter()
                .all(|o| record(run_dir, &o.path).is_ok_and(|r| r == *o))
    }
}
