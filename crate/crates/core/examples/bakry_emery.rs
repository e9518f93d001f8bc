//! Both sides of the variance identity Var F(u_t) = int_0^t E|E[D F ...]|^2 ds
//! for the quadratic cylinder functional.
//!
//! cargo run --release --example bakry_emery

use phi4::dynamics::DynamicsConfig;
use phi4::estimators::{be_identity_check, refined_s_grid, BeSettings, CylinderFunctional};
use phi4::rng::{cell_rng, Domain};
use phi4::torus::{smooth_random_field, Field, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(8, 1.0)?;
    let (t, dt) = (0.25, 5e-3);
    let h = Field::cos_mode(g, 1, 0, 1.0);
    let f = smooth_random_field(g, 3.0, &mut cell_rng(8, 0, Domain::Initial, 0));
    let settings = BeSettings { t, s_nodes: refined_s_grid(t, dt, 4, 2)?, lhs_replicas: 1000, outer: 16, inner: 8 };
    let cfg = DynamicsConfig::new(g, 10.0, dt, t);
    let rep = be_identity_check(&CylinderFunctional::quadratic(h), &f, &settings, &cfg, 8)?;
    println!("variance  {:.4e}  95% [{:.4e}, {:.4e}]", rep.lhs.mean, rep.lhs_ci.0, rep.lhs_ci.1);
    println!("integral  {:.4e}  95% [{:.4e}, {:.4e}]", rep.rhs.mean, rep.rhs_ci.0, rep.rhs_ci.1);
    println!("overlap: {}", rep.overlap);
    Ok(())
}
