//! Checks the linearised flow against finite differences of the nonlinear
//! dynamics and its adjoint against the pairing identity.
//!
//! cargo run --release --example linearization_check

use phi4::dynamics::{evolve, DynamicsConfig};
use phi4::linearization::{finite_diff_check, operator_norm_steps, LinearizedFlow, NormMethod};
use phi4::rng::{cell_rng, Domain, NoiseStream};
use phi4::torus::{smooth_random_field, NormKind, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(32, 1.0)?;
    let cfg = DynamicsConfig::new(g, 1.0, 1e-3, 0.25);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(5, 0, Domain::Initial, 0));
    let h = smooth_random_field(g, 3.0, &mut cell_rng(5, 0, Domain::Probe, 0));
    for eps in [1e-2, 1e-3, 1e-4] {
        let err = finite_diff_check(&f, &h, eps, &cfg, NoiseStream::new(5, 0))?;
        println!("eps = {eps:.0e}: relative error {err:.3e}");
    }

    let traj = evolve(&f, &cfg, NoiseStream::new(5, 0), None)?;
    let flow = LinearizedFlow::new(&traj)?;
    let k = smooth_random_field(g, 6.0, &mut cell_rng(5, 1, Domain::Probe, 0));
    let a = flow.propagate_steps(&h, 0, flow.steps())?.inner(&k)?;
    let b = h.inner(&flow.adjoint_steps(&k, 0, flow.steps())?)?;
    println!("<J h, k> = {a:.12e}, <h, J* k> = {b:.12e}");

    let est =
        operator_norm_steps(&flow, 0, flow.steps(), NormKind::sobolev(0.0), NormMethod::PowerIteration, 200, (5, 0))?;
    println!("||J_(0,T)||_(L2 -> L2) ~ {:.6}", est.estimate);
    Ok(())
}
