//! Decay rate of E||J_{0,t}||^p over t for several masses.
//!
//! cargo run --release --example contraction

use phi4::dynamics::DynamicsConfig;
use phi4::estimators::contraction_rate;
use phi4::rng::{cell_rng, Domain};
use phi4::torus::{smooth_random_field, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(16, 1.0)?;
    let f = smooth_random_field(g, 3.0, &mut cell_rng(6, 0, Domain::Initial, 0));
    let cfg = DynamicsConfig::new(g, 5.0, 5e-3, 1.0);
    let rep = contraction_rate(&[2.0, 5.0, 10.0, 20.0], &[0.1, 0.2, 0.3, 0.4], 2.0, &f, &cfg, 40, 6, 0..16)?;
    for r in &rep.rates {
        println!("m = {:>5}: r(m) = {:.3} (slope se {:.3})", r.m, r.rate, r.fit.slope_se);
    }
    println!("increasing in m: {}, m_star_hat = {:.3}", rep.increasing, rep.m_star_hat);
    Ok(())
}
