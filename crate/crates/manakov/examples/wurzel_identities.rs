//! Fuzz the quadratic identities of the Wurzelfunktionen on random moduli,
//! divisors, and probe points.
//!
//! Run with: `cargo run --example wurzel_identities`

use manakov::wurzel::{identity_suite, CurvePoint, Divisor, ModuliConstants};
use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst = 0.0f64;
    let mut n = 0;
    while n < 500 {
        let d = [
            Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0),
            Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0),
            Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0),
        ];
        let mc = ModuliConstants::new(&d);
        let mut sep = f64::INFINITY;
        for p in 0..5 {
            for q in p + 1..5 {
                sep = sep.min((mc.dd[p] - mc.dd[q]).norm());
            }
        }
        if sep < 0.1 {
            continue;
        }
        let pt = |rng: &mut ChaCha8Rng| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let z = Complex64::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
            CurvePoint { z, y: sign * mc.r(z).sqrt() }
        };
        let div = Divisor { p1: pt(&mut rng), p2: pt(&mut rng) };
        if (div.p1.z - div.p2.z).norm() < 0.1 {
            continue;
        }
        let s = Complex64::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
        if mc.dd.iter().any(|&dj| (s - dj).norm() < 0.1) {
            continue;
        }
        match identity_suite(&div, &mc, s) {
            Ok(rep) => {
                if n < 5 {
                    println!(
                        "sample {n}: eq29={:.1e} eq30={:.1e}/{:.1e} eq31={:.1e}/{:.1e} eq32={:.1e}",
                        rep.eq29, rep.eq30a, rep.eq30b, rep.eq31a, rep.eq31b, rep.eq32
                    );
                }
                worst = worst.max(rep.max());
                n += 1;
            }
            Err(_) => continue,
        }
    }
    println!("\nworst relative residual over {n} random samples: {worst:.3e}");
}
