//! End-to-end theorem check: evaluate the closed-form theta-function
//! solution of the Manakov top and compare it against the RK4 trajectory.
//!
//! Run with: `cargo run --example reconstruct`

use manakov::cli::{run_pipeline, RunConfig};

fn main() {
    let pl = run_pipeline(&RunConfig::canonical()).unwrap();
    println!("calibrated characteristics:");
    let mut labels: Vec<_> = pl.calibration.chars.iter().collect();
    labels.sort();
    for (label, ch) in labels {
        println!("  {label:>3}: [{:?}; {:?}]", ch.0, ch.1);
    }
    println!("\n   t     l12 (rk4)      l12 (theta)     max component error");
    for (k, &t) in pl.sample_times.iter().enumerate().step_by(5) {
        let lr = pl.recon.reconstruct_at(t).unwrap();
        let err = (0..6)
            .map(|i| (lr[i].re - pl.traj.states[k].0[i]).abs())
            .fold(0.0, f64::max);
        println!(
            "{t:5.1}  {:+.10}  {:+.10}   {err:.2e}",
            pl.traj.states[k].0[0], lr[0].re
        );
    }
    println!("\nover all {} samples:", pl.sample_times.len());
    println!("  max |l_theta - l_rk4|      = {:.3e}", pl.reconstruction_error);
    println!("  max |Im l_theta|           = {:.3e}", pl.reconstruction_imag);
    println!("  max integral-level drift   = {:.3e}", pl.integral_error);
}
