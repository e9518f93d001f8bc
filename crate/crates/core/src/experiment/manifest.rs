//! Run manifests: the resolved config, its hash, the random streams each
//! estimator consumed and a hash of every file the run wrote.

use serde::{Deserialize, Serialize};

use super::checkpoint::sha256_hex;

pub const ARTIFACT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";

/// Replica ids `[start, end)` drawn from `base_seed` for one purpose.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub purpose: String,
    pub base_seed: u64,
    pub replicas: [u64; 2],
}

impl StreamSpec {
    pub fn new(purpose: &str, base_seed: u64, replicas: std::ops::Range<u64>) -> Self {
        Self { purpose: purpose.into(), base_seed, replicas: [replicas.start, replicas.end] }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileEntry {
    pub fn of(path: &str, bytes: &[u8]) -> Self {
        Self { path: path.into(), sha256: sha256_hex(bytes), bytes: bytes.len() as u64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: u32,
    pub crate_version: String,
    pub experiment: String,
    pub config_sha256: String,
    /// Files read by the run (absolute paths) with their hashes.
    pub inputs: Vec<FileEntry>,
    pub streams: Vec<StreamSpec>,
    /// Outputs in write order, relative to the run directory.
    pub files: Vec<FileEntry>,
    pub pass: bool,
}
