//! The heart of the algebro-geometric integration: map the recovered
//! divisor flow through the Abel map and watch it become a straight line
//! on the Jacobian.
//!
//! Run with: `cargo run --example abel_linearity`

use manakov::cli::{run_pipeline, RunConfig};

fn main() {
    let pl = run_pipeline(&RunConfig::canonical()).unwrap();
    println!("unwrapped Abel arguments u(t) = (u1, u2):");
    for (k, u) in pl.u.iter().enumerate().step_by(5) {
        println!(
            "  t={:4.1}  u1={:+.6}{:+.6}i  u2={:+.6}{:+.6}i",
            pl.sample_times[k], u[0].re, u[0].im, u[1].re, u[1].im
        );
    }
    println!("\nlinear fit u(t) = u0 + v t:");
    println!("  u0 = ({:.10}, {:.10})", pl.u0[0], pl.u0[1]);
    println!("  v  = ({:.10}, {:.10})", pl.v[0], pl.v[1]);
    println!("  max residual = {:.3e}", pl.linearity_residual);
}
