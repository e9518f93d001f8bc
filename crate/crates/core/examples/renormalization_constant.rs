//! Tabulates the tail constant c_{t,inf} against t and shows that
//! c_{t,inf} t^{1/4} stays bounded as t -> 0.
//!
//! cargo run --release --example renormalization_constant

use phi4::noise::c_t_infty;
use phi4::torus::TorusGrid;

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(64, 1.0)?;
    println!("{:>10} {:>12} {:>12}", "t", "c_t", "c_t t^(1/4)");
    for i in 0..=6 {
        let t = 10f64.powf(-3.0 + 0.5 * i as f64);
        let c = c_t_infty(&g, 1.0, t)?;
        println!("{t:>10.4} {c:>12.5} {:>12.5}", c * t.powf(0.25));
    }
    Ok(())
}
