//! Check the spectral-parameter Lax pair `dL/dt = [L, M]` along a short
//! trajectory via five-point finite differences.
//!
//! Run with: `cargo run --example lax_pair`

use manakov::cli::RunConfig;
use manakov::dynamics::{integrate, lax_residual};
use num_complex::Complex64;

fn main() {
    let cfg = RunConfig::canonical();
    let c = cfg.coefficients().unwrap();
    let l0 = cfg.initial_state();
    let traj = integrate(&l0, &c, 0.05, 1e-3, 1).unwrap();
    for s in [
        Complex64::new(3.3, -0.7),
        Complex64::new(-1.1, 0.4),
        Complex64::new(0.5, 2.0),
        Complex64::new(7.2, -1.9),
    ] {
        let r = lax_residual(&traj, &cfg.a, s).unwrap();
        println!("s = {s:>12}:  max ||dL/dt - [L,M]|| = {r:.3e}");
    }
}
