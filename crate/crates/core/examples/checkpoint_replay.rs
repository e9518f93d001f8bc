//! Writes a trajectory checkpoint, replays it bit for bit, then runs a
//! small experiment into a run directory and replays it from the manifest.
//!
//! cargo run --release --example checkpoint_replay

use phi4::dynamics::DynamicsConfig;
use phi4::experiment::checkpoint::{replay_checkpoint, write_checkpoint};
use phi4::experiment::{self, RunConfig, RunOptions};
use phi4::rng::{cell_rng, Domain, NoiseStream};
use phi4::stopping::StoppingConfig;
use phi4::torus::{smooth_random_field, TorusGrid};

const CONFIG: &str = r#"
schema_version = 1
experiment = "contraction"
base_seed = 12

[grid]
n = 8

[dynamics]
masses = [2.0, 4.0, 8.0]
dt = 0.01

[estimator]
replicas = 4
budget = 20
times = [0.1, 0.2, 0.3, 0.4]
"#;

fn main() -> phi4::Result<()> {
    let tmp = std::env::temp_dir().join(format!("phi4-example-{}", std::process::id()));

    let g = TorusGrid::new(16, 1.0)?;
    let f = smooth_random_field(g, 3.0, &mut cell_rng(12, 0, Domain::Initial, 0));
    let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 0.5);
    let stop = StoppingConfig::new(20.0, 0.1, 0.3, 0.1)?;
    let man = write_checkpoint(&tmp.join("checkpoint"), &f, &cfg, NoiseStream::new(12, 0), Some(&stop), 50)?;
    println!("checkpoint: {} snapshots, restarts at {:?}", man.snapshots.len(), man.restarts);
    println!("replayed {} snapshots identically", replay_checkpoint(&tmp.join("checkpoint"))?);

    let run_cfg = RunConfig::from_toml(CONFIG)?;
    let out = tmp.join("run");
    let outcome = experiment::run(&run_cfg, &RunOptions { out: out.clone(), workers: 2, force: true })?;
    println!("run wrote {} files, verdicts pass: {}", outcome.manifest.files.len(), outcome.manifest.pass);
    for workers in [1, 3] {
        let r = experiment::replay(&out, workers)?;
        println!("replay with {workers} workers: {}", if r.pass { "identical" } else { "diverged" });
    }
    std::fs::remove_dir_all(&tmp)?;
    Ok(())
}
