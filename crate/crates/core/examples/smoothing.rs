//! Short-time blow-up exponent of E||J_{0,t}||_{C^{-alpha} -> C^{kappa-alpha}}^p.
//!
//! cargo run --release --example smoothing

use phi4::dynamics::DynamicsConfig;
use phi4::estimators::smoothing_exponent;
use phi4::rng::{cell_rng, Domain};
use phi4::torus::{smooth_random_field, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(16, 1.0)?;
    let f = smooth_random_field(g, 3.0, &mut cell_rng(7, 0, Domain::Initial, 0));
    let cfg = DynamicsConfig::new(g, 1.0, 5e-4, 0.1);
    let times = [0.005, 0.01, 0.02, 0.04];
    for kappa in [0.0, 0.25, 0.5] {
        let rep = smoothing_exponent(kappa, 0.05, &times, 2.0, &f, &cfg, 30, 7, 0..4)?;
        println!("kappa = {kappa}: exponent {:.3} +- {:.3}, bound {:.3}", rep.exponent, rep.fit.slope_se, rep.bound);
    }
    Ok(())
}
