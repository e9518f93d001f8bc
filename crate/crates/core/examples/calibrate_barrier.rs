//! Picks the barrier level eta from the law of the running sup of the
//! Wick norms over a unit time window.
//!
//! cargo run --release --example calibrate_barrier

use phi4::stopping::{calibrate_eta, CalibrationSettings};
use phi4::torus::TorusGrid;

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(16, 1.0)?;
    let cal = calibrate_eta(g, 1.0, 0.3, 7, 0..400, CalibrationSettings::default())?;
    println!("eta = {}", cal.eta);
    println!("P(sup >= eta) = {:.3}, one-sided 95% upper bound {:.3}", cal.p_hat, cal.p_upper);
    Ok(())
}
