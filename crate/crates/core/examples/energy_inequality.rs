//! Runs one trajectory with barrier restarts, propagates a tangent vector
//! along it and checks the pathwise energy inequality on every restart
//! interval.
//!
//! cargo run --release --example energy_inequality

use phi4::dynamics::{evolve, DynamicsConfig};
use phi4::estimators::{choose_lambda, verify_energy_inequality};
use phi4::linearization::LinearizedFlow;
use phi4::rng::{cell_rng, Domain, NoiseStream};
use phi4::stopping::StoppingConfig;
use phi4::torus::{smooth_random_field, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(16, 1.0)?;
    let alpha = 0.3;
    let stop = StoppingConfig::new(15.0, 0.25, alpha, 0.1)?;
    let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 1.0);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(4, 0, Domain::Initial, 0));
    let traj = evolve(&f, &cfg, NoiseStream::new(4, 0), Some(&stop))?;
    let flow = LinearizedFlow::new(&traj)?;
    let h = smooth_random_field(g, 4.0, &mut cell_rng(4, 0, Domain::Probe, 0));
    let path = flow.propagate_path(&h, 0, traj.steps())?;

    let lam = choose_lambda(alpha)?;
    let rep = verify_energy_inequality(&traj, &path, 0, traj.steps(), lam.lambda, alpha, 0.05)?;
    println!("lambda = {}, c(alpha) = {:.3}", lam.lambda, lam.c_alpha);
    println!("{} restarts, {} intervals, {} grid times checked", traj.restarts.len(), rep.intervals, rep.checked);
    println!("violations {}, smallest log margin {:.4}", rep.violations, rep.min_log_margin);
    Ok(())
}
