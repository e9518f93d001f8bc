//! Trajectory checkpoints: a JSON manifest with everything needed to rerun
//! one trajectory, the initial datum, and snapshots of `u` at regular grid
//! times. Replaying a checkpoint reruns the dynamics and compares snapshots
//! byte for byte.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{evolve_observed, DynamicsConfig, RecordLevel};
use crate::error::{Error, Result};
use crate::rng::NoiseStream;
use crate::stopping::StoppingConfig;
use crate::torus::{read_snapshot, write_snapshot, Field};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotEntry {
    pub index: usize,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub version: u32,
    pub dynamics: DynamicsConfig,
    pub stream: NoiseStream,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stopping: Option<StoppingConfig>,
    pub every: usize,
    pub initial: String,
    pub restarts: Vec<usize>,
    pub snapshots: Vec<SnapshotEntry>,
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn snapshot_bytes(f: &Field) -> Result<Vec<u8>> {
    let mut b = Vec::new();
    write_snapshot(&mut b, f)?;
    Ok(b)
}

/// Runs one trajectory and returns the checkpoint as `(relative path, bytes)`
/// pairs, manifest last.
pub fn checkpoint_files(
    f: &Field,
    cfg: &DynamicsConfig,
    stream: NoiseStream,
    stopping: Option<&StoppingConfig>,
    every: usize,
) -> Result<Vec<(String, Vec<u8>)>> {
    if every == 0 {
        return Err(Error::param("snapshot interval must be >= 1"));
    }
    let grid = cfg.grid;
    // start from exactly what is stored, so a replay from the file is bit-exact
    let initial = snapshot_bytes(f)?;
    let f = &read_snapshot(&initial[..])?;
    let mut files = vec![("initial.snap".to_string(), initial)];
    let mut entries = Vec::new();
    let mut err = None;
    let traj = evolve_observed(f, cfg, stream, stopping, RecordLevel::Ends, |s| {
        if s.index % every != 0 || err.is_some() {
            return;
        }
        let u: Vec<_> = s.v.iter().zip(s.wick.w1.fourier().iter()).map(|(a, b)| a + b).collect();
        match Field::from_fourier(grid, u).and_then(|u| snapshot_bytes(&u)) {
            Ok(bytes) => {
                let name = format!("u_{:06}.snap", s.index);
                entries.push(SnapshotEntry { index: s.index, file: name.clone(), sha256: sha256_hex(&bytes) });
                files.push((name, bytes));
            }
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let manifest = CheckpointManifest {
        version: CHECKPOINT_VERSION,
        dynamics: *cfg,
        stream,
        stopping: stopping.copied(),
        every,
        initial: "initial.snap".into(),
        restarts: traj.restart_indices(),
        snapshots: entries,
    };
    files.push(("checkpoint.json".into(), serde_json::to_vec_pretty(&manifest)?));
    Ok(files)
}

/// Writes a checkpoint into `dir` (created if missing).
pub fn write_checkpoint(
    dir: &Path,
    f: &Field,
    cfg: &DynamicsConfig,
    stream: NoiseStream,
    stopping: Option<&StoppingConfig>,
    every: usize,
) -> Result<CheckpointManifest> {
    std::fs::create_dir_all(dir)?;
    let files = checkpoint_files(f, cfg, stream, stopping, every)?;
    for (name, bytes) in &files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(serde_json::from_slice(&files.last().expect("manifest").1)?)
}

/// Reruns the checkpoint in `dir` and checks every snapshot and the restart
/// times; returns the number of snapshots compared.
pub fn replay_checkpoint(dir: &Path) -> Result<usize> {
    let manifest: CheckpointManifest = serde_json::from_slice(&std::fs::read(dir.join("checkpoint.json"))?)?;
    if manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", manifest.version)));
    }
    let f = read_snapshot(std::fs::File::open(dir.join(&manifest.initial))?)?;
    let fresh = checkpoint_files(&f, &manifest.dynamics, manifest.stream, manifest.stopping.as_ref(), manifest.every)?;
    let rerun: CheckpointManifest = serde_json::from_slice(&fresh.last().expect("manifest").1)?;
    if rerun.restarts != manifest.restarts {
        return Err(Error::ReplayMismatch(format!(
            "restart times differ: {:?} vs {:?}",
            rerun.restarts, manifest.restarts
        )));
    }
    if rerun.snapshots.len() != manifest.snapshots.len() {
        return Err(Error::ReplayMismatch("snapshot count differs".into()));
    }
    for (a, b) in rerun.snapshots.iter().zip(&manifest.snapshots) {
        let stored = std::fs::read(dir.join(&b.file))?;
        if a.index != b.index || a.sha256 != b.sha256 || sha256_hex(&stored) != b.sha256 {
            return Err(Error::ReplayMismatch(format!("first divergence at grid index {}", b.index)));
        }
    }
    Ok(manifest.snapshots.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{cell_rng, Domain};
    use crate::torus::{smooth_random_field, TorusGrid};

    #[test]
    fn round_trip_and_tamper_detection() {
        let g = TorusGrid::new(8, 1.0).unwrap();
        let f = smooth_random_field(g, 3.0, &mut cell_rng(1, 0, Domain::Initial, 0));
        let cfg = DynamicsConfig::new(g, 1.0, 0.01, 0.6);
        let stop = StoppingConfig::new(f64::INFINITY, 0.25, 0.3, 0.1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let man = write_checkpoint(dir.path(), &f, &cfg, NoiseStream::new(9, 2), Some(&stop), 10).unwrap();
        assert_eq!(man.snapshots.len(), 7);
        assert_eq!(man.restarts, vec![25, 50]);
        assert_eq!(replay_checkpoint(dir.path()).unwrap(), 7);

        // a one-ulp change in a stored snapshot is reported
        let p = dir.path().join(&man.snapshots[3].file);
        let mut bytes = std::fs::read(&p).unwrap();
        bytes[40] ^= 1;
        std::fs::write(&p, bytes).unwrap();
        let e = replay_checkpoint(dir.path()).unwrap_err();
        assert!(e.to_string().contains("index 30"), "{e}");
    }
}
