//! Coming down from infinity: the size of v after a short time barely
//! depends on how large the initial datum was.
//!
//! cargo run --release --example coming_down

use phi4::dynamics::{coming_down_profile, DynamicsConfig};
use phi4::torus::{Field, TorusGrid};

fn main() -> phi4::Result<()> {
    let g = TorusGrid::new(8, 1.0)?;
    let profile = Field::constant(g, 1.0).axpy(0.5, &Field::cos_mode(g, 1, 0, 1.0))?;
    let profile = profile.scale(1.0 / profile.max_abs());
    // the explicit cubic step stays monotone only while dt a^2 <= 1
    let cfg = DynamicsConfig::new(g, 1.0, 1e-4, 1.0);
    for s in coming_down_profile(&profile, &[1.0, 10.0, 100.0], 4.0, &cfg, 11, 0..16)? {
        println!(
            "a = {:>6}: median {:.3}, 90% {:.3}, blow-ups {}",
            s.magnitude,
            s.quantile(0.5),
            s.quantile(0.9),
            s.failures()
        );
    }
    Ok(())
}
