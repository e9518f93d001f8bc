//! Poincare ratios Var(F) / E|D F|^2 along long stationary runs.
//!
//! cargo run --release --example spectral_gap

use phi4::dynamics::DynamicsConfig;
use phi4::estimators::{spectral_gap_estimate, CylinderFunctional, GapSettings};
use phi4::torus::TorusGrid;

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(8, 1.0)?;
    let funcs = CylinderFunctional::shipped(g);
    let settings =
        GapSettings { burn_in: 1.0, run_length: 20.0, sample_every: 10, chains: 4, batches: 10, z_stationary: 3.5 };
    for m in [5.0, 10.0, 20.0] {
        let cfg = DynamicsConfig::new(g, m, 5e-3, 1.0);
        for rep in spectral_gap_estimate(&funcs, &cfg, 0.5, &settings, 9)? {
            println!(
                "m = {m:>4}  {:<10} ratio {:.4}  95% [{:.4}, {:.4}]  stationary {}",
                rep.functional, rep.ratio, rep.ratio_ci.0, rep.ratio_ci.1, rep.stationary
            );
        }
    }
    Ok(())
}
