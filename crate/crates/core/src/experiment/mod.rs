//! Experiment runner: resolves a config, runs the experiment on a private
//! worker pool, writes the run directory and its manifest, and replays runs
//! from their manifests.
//!
//! Results never depend on the worker count: every random draw is keyed by
//! replica id and all reductions run in replica order after collection.

pub mod checkpoint;
mod commands;
pub mod config;
pub mod manifest;

use std::path::{Path, PathBuf};

pub use commands::{dispatch, initial_field, CommandOutput};
pub use config::{Experiment, RunConfig};
pub use manifest::{FileEntry, RunManifest, StreamSpec, ARTIFACT_VERSION, CONFIG_FILE, MANIFEST_FILE};

use checkpoint::sha256_hex;

use crate::error::{Error, Result};
use crate::estimators::EstimateReport;

/// Runs `cfg` on a pool of `workers` threads, without writing anything.
pub fn execute(cfg: &RunConfig, workers: usize) -> Result<CommandOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start {workers} workers: {e}")))?;
    pool.install(|| dispatch(cfg))
}

/// Loads a config, applies a seed override and turns relative input paths
/// into absolute ones (relative to the config file), so the resolved config
/// stays valid when it is replayed from the run directory.
pub fn load_config(path: &Path, seed: Option<u64>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    if let Some(rel) = &cfg.estimator.contraction_report {
        let p = Path::new(rel);
        if p.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            let joined = base.join(p);
            let abs = std::path::absolute(&joined).unwrap_or(joined);
            cfg.estimator.contraction_report = Some(abs.to_string_lossy().into_owned());
        }
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub workers: usize,
    /// Replace an existing non-empty run directory.
    pub force: bool,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub report: EstimateReport,
}

fn prepare_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() && std::fs::read_dir(dir)?.next().is_some() {
        if !force {
            return Err(Error::Config(format!("{} is not empty; pass --force to replace it", dir.display())));
        }
        std::fs::remove_dir_all(dir)?;
    }
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Writes a new file, refusing to replace an existing one.
fn write_new(dir: &Path, rel: &str, bytes: &[u8]) -> Result<()> {
    use std::io::Write;
    let path = dir.join(rel);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut f = std::fs::OpenOptions::new().write(true).create_new(true).open(&path)?;
    f.write_all(bytes)?;
    Ok(())
}

/// Output files of a run as they appear in the run directory, config first.
fn run_files(cfg: &RunConfig, out: &CommandOutput) -> Result<Vec<(String, Vec<u8>)>> {
    let mut files = vec![(CONFIG_FILE.to_string(), cfg.to_toml().into_bytes())];
    files.extend(out.rendered()?);
    Ok(files)
}

pub fn run(cfg: &RunConfig, opts: &RunOptions) -> Result<RunOutcome> {
    cfg.validate()?;
    prepare_dir(&opts.out, opts.force)?;
    let out = execute(cfg, opts.workers)?;
    let files = run_files(cfg, &out)?;
    for (rel, bytes) in &files {
        write_new(&opts.out, rel, bytes)?;
    }
    let manifest = RunManifest {
        artifact_version: ARTIFACT_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        experiment: cfg.experiment.name().into(),
        config_sha256: sha256_hex(&files[0].1),
        inputs: out.inputs.clone(),
        streams: out.streams.clone(),
        files: files.iter().map(|(p, b)| FileEntry::of(p, b)).collect(),
        pass: out.report.all_pass(),
    };
    write_new(&opts.out, MANIFEST_FILE, &serde_json::to_vec_pretty(&manifest)?)?;
    Ok(RunOutcome { dir: opts.out.clone(), manifest, report: out.report })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ReplayReport {
    pub dir: PathBuf,
    pub files_checked: usize,
    /// First output whose hash differs (or that is missing on either side).
    pub first_divergent: Option<String>,
    pub pass: bool,
}

/// Re-executes the run recorded in `path` (a run directory or its manifest)
/// and compares every output hash, both of the fresh outputs and of the files
/// on disk.
pub fn replay(path: &Path, workers: usize) -> Result<ReplayReport> {
    let (dir, manifest_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(MANIFEST_FILE))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let manifest: RunManifest = serde_json::from_slice(&std::fs::read(&manifest_path)?)?;
    if manifest.artifact_version != ARTIFACT_VERSION {
        return Err(Error::Format(format!("unsupported artifact version {}", manifest.artifact_version)));
    }
    let text = std::fs::read(dir.join(CONFIG_FILE))?;
    if sha256_hex(&text) != manifest.config_sha256 {
        return Err(Error::ReplayMismatch(format!("{CONFIG_FILE} does not match the manifest hash (edited config)")));
    }
    for input in &manifest.inputs {
        let bytes = std::fs::read(&input.path)
            .map_err(|e| Error::ReplayMismatch(format!("referenced input {} unavailable: {e}", input.path)))?;
        if sha256_hex(&bytes) != input.sha256 {
            return Err(Error::ReplayMismatch(format!("referenced input {} changed", input.path)));
        }
    }
    let text = String::from_utf8(text).map_err(|e| Error::Format(e.to_string()))?;
    let cfg = RunConfig::from_toml(&text)?;
    let out = execute(&cfg, workers)?;
    let fresh: Vec<FileEntry> = run_files(&cfg, &out)?.iter().map(|(p, b)| FileEntry::of(p, b)).collect();

    let mut first_divergent = None;
    for (i, want) in manifest.files.iter().enumerate() {
        let on_disk = std::fs::read(dir.join(&want.path)).ok().map(|b| FileEntry::of(&want.path, &b));
        if fresh.get(i) != Some(want) || on_disk.as_ref() != Some(want) {
            first_divergent = Some(want.path.clone());
            break;
        }
    }
    if first_divergent.is_none() && fresh.len() != manifest.files.len() {
        first_divergent = fresh.get(manifest.files.len()).map(|f| f.path.clone());
    }
    Ok(ReplayReport { dir, files_checked: manifest.files.len(), pass: first_divergent.is_none(), first_divergent })
}
