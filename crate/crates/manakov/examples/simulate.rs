//! Integrate the canonical Manakov top and watch the four integrals hold.
//!
//! Run with: `cargo run --example simulate`

use manakov::cli::RunConfig;
use manakov::core::integrals;
use manakov::dynamics::{conservation_drift, integrate};

fn main() {
    let cfg = RunConfig::canonical();
    let c = cfg.coefficients().unwrap();
    let l0 = cfg.initial_state();
    println!("initial l = {:?}", l0.0);
    let traj = integrate(&l0, &c, 20.0, 1e-3, 1000).unwrap();
    println!("\n   t      l12       l13       l14       l23       l24       l34        H2");
    for (t, st) in traj.times.iter().zip(traj.states.iter()) {
        let h = integrals(st, &cfg.a);
        println!(
            "{t:5.1}  {:+.5}  {:+.5}  {:+.5}  {:+.5}  {:+.5}  {:+.5}   {:.12}",
            st.0[0], st.0[1], st.0[2], st.0[3], st.0[4], st.0[5], h.h2
        );
    }
    let drift = conservation_drift(&traj, &cfg.a);
    println!("\nrelative drift over t in [0,20]:");
    for (i, d) in drift.iter().enumerate() {
        println!("  H{i}: {d:.3e}");
    }
}
