//! Restart counts N(t) from the Gaussian sector and their tail bound.
//!
//! cargo run --release --example restart_tails

use phi4::stopping::{restart_schedules, tail_estimate, StoppingConfig};
use phi4::torus::TorusGrid;

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(16, 1.0)?;
    let stop = StoppingConfig::new(12.0, 0.5, 0.3, 0.1)?;
    let records = restart_schedules(g, 1.0, 0.01, 2.0, &stop, 3, 0..200)?;
    for n in 1..=6 {
        let est = tail_estimate(&records, 2.0, n, stop.theta)?;
        println!(
            "P(N(2) >= {n}) = {:.4} [{:.4}, {:.4}]  bound {:.4}  {}",
            est.p_hat,
            est.ci_low,
            est.ci_high,
            est.bound,
            if est.pass { "ok" } else { "VIOLATED" }
        );
    }
    Ok(())
}
