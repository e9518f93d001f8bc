//! Samples the stationary Gaussian sector and compares spatial averages of
//! the Wick powers with their exact moments.
//!
//! cargo run --release --example gaussian_sector

use phi4::noise::{make_wick, ou_step, wick_constant, OuState};
use phi4::rng::NoiseStream;
use phi4::stats;
use phi4::torus::TorusGrid;

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(32, 1.0)?;
    let (m, t) = (1.0, 0.5);
    let c = wick_constant(&g, m, t)?;
    let (mut w2sq, mut w3sq) = (Vec::new(), Vec::new());
    for r in 0..10_000 {
        let x = ou_step(&OuState::new(g, m, 0.0, 0), t, &mut NoiseStream::new(1, r))?;
        let w = make_wick(&x)?;
        let n = g.points() as f64;
        w2sq.push(w.w2.real().iter().map(|y| y * y).sum::<f64>() / n);
        w3sq.push(w.w3.real().iter().map(|y| y * y).sum::<f64>() / n);
    }
    let (a, b) = (stats::mean_estimate(&w2sq), stats::mean_estimate(&w3sq));
    println!("c = {c:.5}");
    println!("E[:X^2:^2] = {:.4} +- {:.4}   (exact {:.4})", a.mean, a.se, 2.0 * c * c);
    println!("E[:X^3:^2] = {:.4} +- {:.4}   (exact {:.4})", b.mean, b.se, 6.0 * c.powi(3));
    Ok(())
}
