//! Compute the period matrix of the genus-2 curve of the canonical
//! instance and evaluate theta functions with half-integer characteristics.
//!
//! Run with: `cargo run --example period_matrix`

use manakov::abelian::{
    im_tau_lambda_min, published_char_table, period_matrix, theta_char, theta_radius,
};
use manakov::cli::RunConfig;
use manakov::core::integrals;
use manakov::spectral::spectral_data;
use manakov::wurzel::ModuliConstants;
use num_complex::Complex64;

fn main() {
    let cfg = RunConfig::canonical();
    let l0 = cfg.initial_state();
    let h = integrals(&l0, &cfg.a);
    let sd = spectral_data(&l0, &h, &cfg.a).unwrap();
    let mc = ModuliConstants::new(&sd.d);
    let pd = period_matrix(&mc).unwrap();
    println!("tau =");
    for row in pd.tau.iter() {
        println!("  [{:.12}, {:.12}]", row[0], row[1]);
    }
    println!("symmetry deviation: {:.2e}", (pd.tau[0][1] - pd.tau[1][0]).norm());
    println!("lambda_min(Im tau) = {:.6}", im_tau_lambda_min(&pd.tau));
    let n = theta_radius(&pd.tau);
    println!("truncation radius: {n}");

    // the classic diagonal oracle
    let diag = [
        [Complex64::new(0.0, 2.0), Complex64::default()],
        [Complex64::default(), Complex64::new(0.0, 2.0)],
    ];
    let v = theta_char(&[Complex64::default(); 2], &diag, &([0, 0], [0, 0]), 20);
    println!("\ntheta(0; diag(2i,2i)) = {v:.14} (oracle 1.00748372034508)");

    // all sixteen theta values at a sample argument
    let u = [Complex64::new(0.31, 0.07), Complex64::new(-0.22, 0.11)];
    println!("\ntheta values at u = ({:.2}, {:.2}):", u[0], u[1]);
    let mut labels: Vec<_> = published_char_table().into_iter().collect();
    labels.sort();
    for (label, ch) in labels {
        let t = theta_char(&u, &pd.tau, &ch, n);
        println!("  [{:?};{:?}] ({label:>3}): {t:.10}", ch.0, ch.1);
    }
}
