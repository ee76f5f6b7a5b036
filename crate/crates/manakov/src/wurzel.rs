//! Step B: Weierstrass Wurzelfunktionen `P_j`, `P_jk` on the genus-2 curve
//! `y^2 = R(z) = z (z - d_1)(z - d_2)(z - d_3)(z - d_4)`, the quadratic
//! identity suite, recovery of the degree-2 divisor from `(xi, eta)` data,
//! and the normalization fit for the constants `epsilon`, `kappa_g`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::ManakovError;

/// Cyclic complements: `j = 1, 2, 3 -> (k, l)`.
pub const CYC_W: [(usize, usize); 3] = [(2, 3), (3, 1), (1, 2)];

/// A point on the curve; the sheet is carried by `y` itself and never
/// recomputed by a bare square root.
#[derive(Debug, Clone, Copy)]
pub struct CurvePoint {
    pub z: Complex64,
    pub y: Complex64,
}

/// An unordered pair of curve points, the argument of the genus-2 Abelian
/// functions.
#[derive(Debug, Clone, Copy)]
pub struct Divisor {
    pub p1: CurvePoint,
    pub p2: CurvePoint,
}

/// Branch points and the derived constants `c~_j`, `c_j` of the identity
/// suite.
#[derive(Debug, Clone)]
pub struct ModuliConstants {
    /// `d_0 = 0, d_1, d_2, d_3, d_4` (with `d_4 = d_1 d_2 d_3`).
    pub dd: [Complex64; 5],
    /// `c~_j = 1 / ((d_j - d_k)(d_j - d_l))`.
    pub ct: [Complex64; 3],
    /// `c_j = (d_j - d_4) c~_j`.
    pub cbig: [Complex64; 3],
    /// Principal square roots of `c_j` (used by the uniformization).
    pub sqrt_cbig: [Complex64; 3],
}

impl ModuliConstants {
    pub fn new(d: &[Complex64; 3]) -> Self {
        let d4 = d[0] * d[1] * d[2];
        let dd = [Complex64::default(), d[0], d[1], d[2], d4];
        let mut ct = [Complex64::default(); 3];
        let mut cbig = [Complex64::default(); 3];
        let mut sqrt_cbig = [Complex64::default(); 3];
        for j in 1..=3 {
            let (k, l) = CYC_W[j - 1];
            ct[j - 1] = Complex64::new(1.0, 0.0) / ((dd[j] - dd[k]) * (dd[j] - dd[l]));
            cbig[j - 1] = (dd[j] - dd[4]) * ct[j - 1];
            sqrt_cbig[j - 1] = cbig[j - 1].sqrt();
        }
        ModuliConstants { dd, ct, cbig, sqrt_cbig }
    }

    /// The curve polynomial `R(z) = prod_{j=0..4} (z - d_j)`.
    pub fn r(&self, z: Complex64) -> Complex64 {
        self.dd.iter().fold(Complex64::new(1.0, 0.0), |acc, &dj| acc * (z - dj))
    }

    /// `sqrt(R(z))` on the sheet continuous with `yref`.
    pub fn cont_sqrt_r(&self, z: Complex64, yref: Complex64) -> Complex64 {
        let y = self.r(z).sqrt();
        if (y - yref).norm() <= (y + yref).norm() {
            y
        } else {
            -y
        }
    }
}

/// `P_j = sqrt((z1 - d_j)(z2 - d_j))`, principal branch of the product;
/// index `j` in `0..=4`.
pub fn p_single(j: usize, z1: Complex64, z2: Complex64, mc: &ModuliConstants) -> Complex64 {
    ((z1 - mc.dd[j]) * (z2 - mc.dd[j])).sqrt()
}

/// `P_jk = P_j P_k / (z1 - z2) * (y1/((z1-d_j)(z1-d_k)) - y2/((z2-d_j)(z2-d_k)))`
/// using the stored sheet values in place of bare square roots.
pub fn p_pair(j: usize, k: usize, div: &Divisor, mc: &ModuliConstants) -> Result<Complex64, ManakovError> {
    let (z1, y1) = (div.p1.z, div.p1.y);
    let (z2, y2) = (div.p2.z, div.p2.y);
    let sep = (z1 - z2).norm();
    if sep < 1e-8 * z1.norm().max(1.0) {
        return Err(ManakovError::DiagonalDivisor { sep });
    }
    let pj = p_single(j, z1, z2, mc);
    let pk = p_single(k, z1, z2, mc);
    let t1 = y1 / ((z1 - mc.dd[j]) * (z1 - mc.dd[k]));
    let t2 = y2 / ((z2 - mc.dd[j]) * (z2 - mc.dd[k]));
    Ok(pj * pk / (z1 - z2) * (t1 - t2))
}

/// Relative residuals of the five-identity suite at a divisor and probe.
#[derive(Debug, Clone)]
pub struct IdentityReport {
    /// Partial-fraction identity with the divisor-independent constant
    /// `C = prod_{k=1..3} (d_k - d_4)` on the right-hand side:
    /// `sum_j c_j (P_kl^2/((s-d_k)(s-d_l)) + P_j4^2/((s-d_j)(s-d_4)))
    ///  = C s / prod_{m=1..4}(s - d_m)`.
    pub eq29: f64,
    /// `sum c~_j P_j4^2 = d_4`.
    pub eq30a: f64,
    /// `sum d_j c~_j P_kl^2 = P_0^2`.
    pub eq30b: f64,
    /// `sum c_j P_j4 P_kl = 0`.
    pub eq31a: f64,
    /// `sum c~_j P_j4 P_kl = ±P_0` (sign recorded per divisor).
    pub eq31b: f64,
    /// `sum c_j (P_j4^2/d_j + d_j P_kl^2) = 0`.
    pub eq32: f64,
}

impl IdentityReport {
    pub fn max(&self) -> f64 {
        self.eq29
            .max(self.eq30a)
            .max(self.eq30b)
            .max(self.eq31a)
            .max(self.eq31b)
            .max(self.eq32)
    }
}

pub fn identity_suite(
    div: &Divisor,
    mc: &ModuliConstants,
    s: Complex64,
) -> Result<IdentityReport, ManakovError> {
    let p0 = p_single(0, div.p1.z, div.p2.z, mc);
    let mut pkl = [Complex64::default(); 3];
    let mut pj4 = [Complex64::default(); 3];
    for j in 1..=3 {
        let (k, l) = CYC_W[j - 1];
        pkl[j - 1] = p_pair(k, l, div, mc)?;
        pj4[j - 1] = p_pair(j, 4, div, mc)?;
    }
    let scale: f64 = pkl
        .iter()
        .chain(pj4.iter())
        .map(|z| z.norm() * z.norm())
        .fold(1.0, f64::max);
    // (29)
    let mut lhs = Complex64::default();
    for j in 1..=3 {
        let (k, l) = CYC_W[j - 1];
        lhs += mc.cbig[j - 1]
            * (pkl[j - 1] * pkl[j - 1] / ((s - mc.dd[k]) * (s - mc.dd[l]))
                + pj4[j - 1] * pj4[j - 1] / ((s - mc.dd[j]) * (s - mc.dd[4])));
    }
    let c_const = (mc.dd[1] - mc.dd[4]) * (mc.dd[2] - mc.dd[4]) * (mc.dd[3] - mc.dd[4]);
    let rhs = c_const * s
        / ((s - mc.dd[1]) * (s - mc.dd[2]) * (s - mc.dd[3]) * (s - mc.dd[4]));
    let eq29 = (lhs - rhs).norm() / rhs.norm().max(1.0);
    // (30a), (30b)
    let s30a: Complex64 = (0..3).map(|j| mc.ct[j] * pj4[j] * pj4[j]).sum();
    let eq30a = (s30a - mc.dd[4]).norm() / mc.dd[4].norm().max(1.0);
    let s30b: Complex64 = (0..3).map(|j| mc.dd[j + 1] * mc.ct[j] * pkl[j] * pkl[j]).sum();
    let eq30b = (s30b - p0 * p0).norm() / scale;
    // (31a), (31b)
    let s31a: Complex64 = (0..3).map(|j| mc.cbig[j] * pj4[j] * pkl[j]).sum();
    let eq31a = s31a.norm() / scale;
    let s31b: Complex64 = (0..3).map(|j| mc.ct[j] * pj4[j] * pkl[j]).sum();
    let eq31b = (s31b - p0).norm().min((s31b + p0).norm()) / scale.sqrt().max(1.0);
    // (32)
    let s32: Complex64 = (0..3)
        .map(|j| mc.cbig[j] * (pj4[j] * pj4[j] / mc.dd[j + 1] + mc.dd[j + 1] * pkl[j] * pkl[j]))
        .sum();
    let eq32 = s32.norm() / scale;
    Ok(IdentityReport { eq29, eq30a, eq30b, eq31a, eq31b, eq32 })
}

/// A divisor recovered from `(xi, eta)` together with the uniformization
/// scalar `g`, the per-component sheet signs, the forward-map residual, and
/// `P_0^2` implied by the data.
#[derive(Debug, Clone)]
pub struct RecoveredDivisor {
    pub divisor: Divisor,
    pub g: Complex64,
    pub sg: [f64; 3],
    /// Relative forward-map residual `max |±g P - target|/max(1, |target|)`.
    pub res: f64,
    pub p0sq: Complex64,
}

fn targets(
    xi: &[Complex64; 3],
    eta: &[Complex64; 3],
    mc: &ModuliConstants,
) -> ([Complex64; 3], [Complex64; 3], Complex64, Complex64) {
    // t_j = xi_j/sqrt(c_j) = g P_kl, s_j = eta_j/sqrt(c_j) = g P_j4
    let mut t = [Complex64::default(); 3];
    let mut s = [Complex64::default(); 3];
    for j in 0..3 {
        t[j] = xi[j] / mc.sqrt_cbig[j];
        s[j] = eta[j] / mc.sqrt_cbig[j];
    }
    let g2: Complex64 = (0..3).map(|j| mc.ct[j] * s[j] * s[j]).sum::<Complex64>() / mc.dd[4];
    let p0sq: Complex64 =
        (0..3).map(|j| mc.dd[j + 1] * mc.ct[j] * t[j] * t[j]).sum::<Complex64>() / g2;
    (t, s, g2, p0sq)
}

fn forward(
    div: &Divisor,
    mc: &ModuliConstants,
) -> Result<([Complex64; 3], [Complex64; 3]), ManakovError> {
    let mut pkl = [Complex64::default(); 3];
    let mut pj4 = [Complex64::default(); 3];
    for j in 1..=3 {
        let (k, l) = CYC_W[j - 1];
        pkl[j - 1] = p_pair(k, l, div, mc)?;
        pj4[j - 1] = p_pair(j, 4, div, mc)?;
    }
    Ok((pkl, pj4))
}

/// Gauss–Newton polish of the full forward system in `(z1, z2)` with the
/// sheets tracked by continuity and the signed `g` held fixed.
#[allow(clippy::too_many_arguments)]
fn polish(
    mut div: Divisor,
    gs: Complex64,
    sg: &[f64; 3],
    t: &[Complex64; 3],
    s: &[Complex64; 3],
    mc: &ModuliConstants,
) -> (Divisor, f64) {
    let fwd = |dv: &Divisor| -> Option<[Complex64; 6]> {
        let (pkl, pj4) = forward(dv, mc).ok()?;
        let mut f = [Complex64::default(); 6];
        for j in 0..3 {
            f[j] = gs * sg[j] * pkl[j] - t[j];
            f[3 + j] = gs * sg[j] * pj4[j] - s[j];
        }
        Some(f)
    };
    let maxabs = |f: &[Complex64; 6]| f.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut f0 = match fwd(&div) {
        Some(f) => f,
        None => return (div, f64::INFINITY),
    };
    for _ in 0..30 {
        if maxabs(&f0) < 1e-13 {
            break;
        }
        let h1 = 1e-7 * div.p1.z.norm().max(1.0);
        let h2 = 1e-7 * div.p2.z.norm().max(1.0);
        let d1 = Divisor {
            p1: CurvePoint {
                z: div.p1.z + h1,
                y: mc.cont_sqrt_r(div.p1.z + h1, div.p1.y),
            },
            p2: div.p2,
        };
        let d2 = Divisor {
            p1: div.p1,
            p2: CurvePoint {
                z: div.p2.z + h2,
                y: mc.cont_sqrt_r(div.p2.z + h2, div.p2.y),
            },
        };
        let (f1, f2) = match (fwd(&d1), fwd(&d2)) {
            (Some(a), Some(b)) => (a, b),
            _ => break,
        };
        let mut jm = DMatrix::<Complex64>::zeros(6, 2);
        let mut rv = DVector::<Complex64>::zeros(6);
        for i in 0..6 {
            jm[(i, 0)] = (f1[i] - f0[i]) / h1;
            jm[(i, 1)] = (f2[i] - f0[i]) / h2;
            rv[i] = f0[i];
        }
        let svd = jm.svd(true, true);
        let dz = match svd.solve(&rv, 1e-14) {
            Ok(x) => x,
            Err(_) => break,
        };
        let mut improved = false;
        for &lam in &[1.0, 0.5, 0.25, 0.1] {
            let z1n = div.p1.z - lam * dz[0];
            let z2n = div.p2.z - lam * dz[1];
            let cand = Divisor {
                p1: CurvePoint { z: z1n, y: mc.cont_sqrt_r(z1n, div.p1.y) },
                p2: CurvePoint { z: z2n, y: mc.cont_sqrt_r(z2n, div.p2.y) },
            };
            if let Some(fc) = fwd(&cand) {
                if maxabs(&fc) < maxabs(&f0) {
                    div = cand;
                    f0 = fc;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            break;
        }
    }
    (div, maxabs(&f0))
}

/// Check a converged candidate divisor against the full forward map; on
/// success returns the signed `g`, sheet signs, and relative residual.
fn accept(
    div: &Divisor,
    g2: Complex64,
    p0sq: Complex64,
    t: &[Complex64; 3],
    s: &[Complex64; 3],
    mc: &ModuliConstants,
) -> Option<RecoveredDivisor> {
    let (pkl, pj4) = forward(div, mc).ok()?;
    let tscale = t.iter().map(|z| z.norm()).fold(1.0, f64::max);
    for &sign in &[1.0, -1.0] {
        let gs = sign * g2.sqrt();
        let mut sg = [1.0; 3];
        for j in 0..3 {
            sg[j] = if (t[j] - gs * pkl[j]).norm() < (t[j] + gs * pkl[j]).norm() {
                1.0
            } else {
                -1.0
            };
        }
        let mut res: f64 = 0.0;
        for j in 0..3 {
            res = res.max((sg[j] * gs * pkl[j] - t[j]).norm());
            res = res.max((sg[j] * gs * pj4[j] - s[j]).norm());
        }
        let rel = res / tscale;
        if rel < 1e-6 {
            let (polished, pres) = polish(*div, gs, &sg, t, s, mc);
            return Some(RecoveredDivisor {
                divisor: polished,
                g: gs,
                sg,
                res: pres / tscale,
                p0sq,
            });
        }
    }
    None
}

/// Recover the divisor and `g` from `(xi, eta)` on the quadrics.
///
/// Strategy: `P_0^2 = z_1 z_2` is known from the data, so the search is
/// one-dimensional in `zeta` with `z_1 = zeta`, `z_2 = P_0^2/zeta`. Newton
/// iteration runs on the single ratio equation `P_14/P_23 = eta_1/xi_1`
/// with the `y`-sheets tracked by continuity (the divisor path generally
/// lies on the branch cuts of the principal square root, where a bare
/// `sqrt` would make the iteration diverge). Acceptance is gated on the
/// forward-map residual over all components — the ratio equations are
/// ill-conditioned when a divisor point passes near a branch point — and
/// a Gauss–Newton polish of the full forward system finishes the solve.
pub fn recover_divisor(
    xi: &[Complex64; 3],
    eta: &[Complex64; 3],
    mc: &ModuliConstants,
    starts: &[Complex64],
) -> Result<RecoveredDivisor, ManakovError> {
    let (t, s, g2, p0sq) = targets(xi, eta, mc);
    let ratio = [s[0] / t[0], s[1] / t[1], s[2] / t[2]];
    let resid = |div: &Divisor, comp: usize| -> Option<Complex64> {
        let (j, _) = (comp + 1, ());
        let (k, l) = CYC_W[comp];
        let pkl = p_pair(k, l, div, mc).ok()?;
        let pj4 = p_pair(j, 4, div, mc).ok()?;
        Some(pj4 / pkl - ratio[comp])
    };
    let mut all_starts: Vec<Complex64> = starts.to_vec();
    for &rad in &[0.5, 2.0, 8.0, 30.0, 100.0, 500.0, 2000.0] {
        for i in 0..12 {
            let ang = 0.05 + 2.0 * std::f64::consts::PI * i as f64 / 12.0;
            all_starts.push(Complex64::from_polar(rad, ang));
        }
    }
    let p0r = p0sq.norm().sqrt();
    for &rr in &[0.5, 1.0, 2.0] {
        for i in 0..8 {
            let ang = 0.05 + 2.0 * std::f64::consts::PI * i as f64 / 8.0;
            all_starts.push(Complex64::from_polar(p0r * rr, ang));
        }
    }
    for j in 1..=3 {
        for &rr in &[0.5, 2.5] {
            for i in 0..6 {
                let ang = 2.0 * std::f64::consts::PI * i as f64 / 6.0;
                all_starts.push(mc.dd[j] + Complex64::from_polar(rr, ang));
            }
        }
    }
    for &sh1 in &[1.0, -1.0] {
        for &sh2 in &[1.0, -1.0] {
            for &z0 in &all_starts {
                if z0.norm() < 1e-8 {
                    continue;
                }
                let mut z = z0;
                let mut z2 = p0sq / z;
                let mut y1 = sh1 * mc.r(z).sqrt();
                let mut y2 = sh2 * mc.r(z2).sqrt();
                for _ in 0..80 {
                    let div = Divisor {
                        p1: CurvePoint { z, y: y1 },
                        p2: CurvePoint { z: z2, y: y2 },
                    };
                    let f = match resid(&div, 0) {
                        Some(f) => f,
                        None => break,
                    };
                    if f.norm() < 1e-11 {
                        break;
                    }
                    let h = 1e-7 * z.norm().max(1.0);
                    let zp = z + h;
                    let z2p = p0sq / zp;
                    let divp = Divisor {
                        p1: CurvePoint { z: zp, y: mc.cont_sqrt_r(zp, y1) },
                        p2: CurvePoint { z: z2p, y: mc.cont_sqrt_r(z2p, y2) },
                    };
                    let fp = match resid(&divp, 0) {
                        Some(fp) => fp,
                        None => break,
                    };
                    let df = (fp - f) / h;
                    if df.norm() == 0.0 || !df.is_finite() {
                        break;
                    }
                    let mut dz = f / df;
                    let cap = 0.3 * z.norm().min(z2.norm()) + 0.1;
                    if dz.norm() > cap {
                        dz *= cap / dz.norm();
                    }
                    let mut lam = 1.0;
                    let mut accepted = false;
                    while lam > 1e-4 {
                        let zn = z - lam * dz;
                        let z2n = p0sq / zn;
                        let y1n = mc.cont_sqrt_r(zn, y1);
                        let y2n = mc.cont_sqrt_r(z2n, y2);
                        let divn = Divisor {
                            p1: CurvePoint { z: zn, y: y1n },
                            p2: CurvePoint { z: z2n, y: y2n },
                        };
                        if let Some(fn_) = resid(&divn, 0) {
                            if fn_.norm() < f.norm() {
                                z = zn;
                                z2 = z2n;
                                y1 = y1n;
                                y2 = y2n;
                                accepted = true;
                                break;
                            }
                        }
                        lam /= 2.0;
                    }
                    if !accepted || !z.is_finite() || z.norm() > 1e7 {
                        break;
                    }
                }
                let div = Divisor {
                    p1: CurvePoint { z, y: y1 },
                    p2: CurvePoint { z: z2, y: y2 },
                };
                let gate = (0..3)
                    .map(|c| resid(&div, c).map(|f| f.norm()).unwrap_or(f64::INFINITY))
                    .fold(0.0, f64::max);
                if gate > 1e-5 {
                    continue;
                }
                if let Some(rec) = accept(&div, g2, p0sq, &t, &s, mc) {
                    return Ok(rec);
                }
            }
        }
    }
    Err(ManakovError::NoConvergence)
}

/// Recover divisors along a trajectory of `(xi, eta)` samples with
/// continuity seeding, a Gauss–Newton fallback from the extrapolated
/// divisor when the ratio-Newton fails near a branch-point graze, and a
/// point-labeling swap that keeps `z_1(t)` continuous.
pub fn recover_trajectory(
    samples: &[([Complex64; 3], [Complex64; 3])],
    mc: &ModuliConstants,
) -> Result<Vec<RecoveredDivisor>, ManakovError> {
    let mut out: Vec<RecoveredDivisor> = Vec::with_capacity(samples.len());
    let mut hist: Vec<Complex64> = Vec::new();
    for (xi, eta) in samples.iter() {
        let mut starts = Vec::new();
        let n = hist.len();
        if n >= 2 {
            starts.push(2.0 * hist[n - 1] - hist[n - 2]);
        }
        if n >= 1 {
            starts.push(hist[n - 1]);
        }
        let mut sol = recover_divisor(xi, eta, mc, &starts).ok();
        if sol.is_none() && out.len() >= 2 {
            // fallback: extrapolate the full divisor state and polish
            let (t, s, g2, p0sq) = targets(xi, eta, mc);
            let p0 = &out[out.len() - 2];
            let p1 = &out[out.len() - 1];
            let z1e = 2.0 * p1.divisor.p1.z - p0.divisor.p1.z;
            let z2e = 2.0 * p1.divisor.p2.z - p0.divisor.p2.z;
            let seed = Divisor {
                p1: CurvePoint { z: z1e, y: mc.cont_sqrt_r(z1e, p1.divisor.p1.y) },
                p2: CurvePoint { z: z2e, y: mc.cont_sqrt_r(z2e, p1.divisor.p2.y) },
            };
            let tscale = t.iter().map(|z| z.norm()).fold(1.0, f64::max);
            'try_g: for &sign in &[1.0, -1.0] {
                let gs = sign * g2.sqrt();
                let (polished, res) = polish(seed, gs, &p1.sg, &t, &s, mc);
                let rel = res / tscale;
                if rel < 1e-6 {
                    sol = Some(RecoveredDivisor {
                        divisor: polished,
                        g: gs,
                        sg: p1.sg,
                        res: rel,
                        p0sq,
                    });
                    break 'try_g;
                }
            }
        }
        let mut rec = sol.ok_or(ManakovError::NoConvergence)?;
        if let Some(&prev) = hist.last() {
            if (rec.divisor.p2.z - prev).norm() < (rec.divisor.p1.z - prev).norm() {
                std::mem::swap(&mut rec.divisor.p1, &mut rec.divisor.p2);
            }
        }
        hist.push(rec.divisor.p1.z);
        out.push(rec);
    }
    Ok(out)
}

/// Constants of the `H0` normalization, fitted along a trajectory of
/// recovered divisors: the affine model `1/g(t) = (1 - eps P_0(t))/kappa_g`
/// (with per-sample `±P_0`, `±g` sign assignment iterated to consistency),
/// the constancy of `C40(t) = (1 - eps P_0)^2 g^2 / (4 eps d_4)`, and the
/// calibration `kappa_40 = h_0 / C40`.
#[derive(Debug, Clone)]
pub struct NormalizationFit {
    pub epsilon: Complex64,
    pub kappa_g: Complex64,
    pub kappa_40: Complex64,
    /// Relative spread of `C40` across samples.
    pub c40_spread: f64,
    /// Max relative residual of the affine model.
    pub fit_residual: f64,
    /// Max residual of `(1 - eps P_0) g / kappa_g = 1` across samples.
    pub eq42_residual: f64,
    /// Sign-consistent `P_0` per sample.
    pub p0: Vec<Complex64>,
    /// Sign-consistent `g` per sample.
    pub g: Vec<Complex64>,
}

pub fn fit_normalization(
    recs: &[RecoveredDivisor],
    mc: &ModuliConstants,
    h0: f64,
) -> Result<NormalizationFit, ManakovError> {
    let n = recs.len();
    if n < 8 {
        return Err(ManakovError::NoConvergence);
    }
    let p0a: Vec<Complex64> = recs.iter().map(|r| r.p0sq.sqrt()).collect();
    let ga: Vec<Complex64> = recs.iter().map(|r| r.g).collect();
    // init: continuity signs over the first 6 samples
    let mut p0i = vec![p0a[0]];
    let mut gi = vec![ga[0]];
    for k in 1..6 {
        let p = p0a[k];
        p0i.push(if (p - p0i[k - 1]).norm() < (p + p0i[k - 1]).norm() { p } else { -p });
        let g = ga[k];
        gi.push(if (g - gi[k - 1]).norm() < (g + gi[k - 1]).norm() { g } else { -g });
    }
    let lstsq2 = |ps: &[Complex64], gs: &[Complex64]| -> (Complex64, Complex64) {
        let m = ps.len();
        let mut mat = DMatrix::<Complex64>::zeros(m, 2);
        let mut rhs = DVector::<Complex64>::zeros(m);
        for i in 0..m {
            mat[(i, 0)] = Complex64::new(1.0, 0.0);
            mat[(i, 1)] = ps[i];
            rhs[i] = Complex64::new(1.0, 0.0) / gs[i];
        }
        let svd = mat.svd(true, true);
        let x = svd.solve(&rhs, 1e-14).expect("2-column least squares");
        (x[0], x[1])
    };
    let (mut c0, mut c1) = lstsq2(&p0i, &gi);
    let mut p0f: Vec<Complex64> = Vec::new();
    let mut gf: Vec<Complex64> = Vec::new();
    for _ in 0..6 {
        let kg = Complex64::new(1.0, 0.0) / c0;
        let eps = -c1 * kg;
        p0f.clear();
        gf.clear();
        for k in 0..n {
            let mut best: Option<(f64, Complex64, Complex64)> = None;
            for &sp in &[1.0, -1.0] {
                for &sgn in &[1.0, -1.0] {
                    let r = ((Complex64::new(1.0, 0.0) - eps * sp * p0a[k]) / kg
                        - Complex64::new(1.0, 0.0) / (sgn * ga[k]))
                        .norm();
                    if best.is_none_or(|(b, _, _)| r < b) {
                        best = Some((r, sp * p0a[k], sgn * ga[k]));
                    }
                }
            }
            let (_, p, g) = best.unwrap();
            p0f.push(p);
            gf.push(g);
        }
        let (n0, n1) = lstsq2(&p0f, &gf);
        c0 = n0;
        c1 = n1;
    }
    let kappa_g = Complex64::new(1.0, 0.0) / c0;
    let epsilon = -c1 * kappa_g;
    let inv_g_mean: f64 =
        gf.iter().map(|g| (Complex64::new(1.0, 0.0) / g).norm()).sum::<f64>() / n as f64;
    let fit_residual = (0..n)
        .map(|k| (c0 + c1 * p0f[k] - Complex64::new(1.0, 0.0) / gf[k]).norm())
        .fold(0.0, f64::max)
        / inv_g_mean;
    let c40: Vec<Complex64> = (0..n)
        .map(|k| {
            let one = Complex64::new(1.0, 0.0);
            (one - epsilon * p0f[k]).powi(2) * gf[k] * gf[k] / (4.0 * epsilon * mc.dd[4])
        })
        .collect();
    let mean: Complex64 = c40.iter().sum::<Complex64>() / n as f64;
    let c40_spread = c40.iter().map(|z| (z - mean).norm()).fold(0.0, f64::max) / mean.norm();
    let kappa_40 = h0 / mean;
    let eq42_residual = (0..n)
        .map(|k| ((Complex64::new(1.0, 0.0) - epsilon * p0f[k]) * gf[k] / kappa_g
            - Complex64::new(1.0, 0.0))
        .norm())
        .fold(0.0, f64::max);
    if fit_residual > 1e-6 {
        return Err(ManakovError::FitResidualTooLarge { residual: fit_residual });
    }
    Ok(NormalizationFit {
        epsilon,
        kappa_g,
        kappa_40,
        c40_spread,
        fit_residual,
        eq42_residual,
        p0: p0f,
        g: gf,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_moduli(rng: &mut ChaCha8Rng) -> [Complex64; 3] {
        let mut d = [Complex64::default(); 3];
        for x in d.iter_mut() {
            *x = Complex64::new(rng.gen::<f64>() * 2.0 - 1.0, rng.gen::<f64>() * 2.0 - 1.0);
        }
        d
    }

    fn random_divisor(mc: &ModuliConstants, rng: &mut ChaCha8Rng) -> Divisor {
        let pt = |rng: &mut ChaCha8Rng| {
            let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let z = Complex64::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
            CurvePoint { z, y: sign * mc.r(z).sqrt() }
        };
        Divisor { p1: pt(rng), p2: pt(rng) }
    }

    #[test]
    fn p_single_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = random_moduli(&mut rng);
        let mc = ModuliConstants::new(&d);
        // vanishing factor
        let v = p_single(1, mc.dd[1], Complex64::new(0.3, 0.2), &mc);
        assert!(v.norm() < 1e-12);
        // j = 0 is sqrt(z1 z2)
        let (z1, z2) = (Complex64::new(1.0, 2.0), Complex64::new(-0.5, 0.3));
        assert!((p_single(0, z1, z2, &mc) - (z1 * z2).sqrt()).norm() < 1e-14);
        // symmetry
        assert!((p_single(2, z1, z2, &mc) - p_single(2, z2, z1, &mc)).norm() < 1e-14);
    }

    #[test]
    fn p_pair_symmetries() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let d = random_moduli(&mut rng);
        let mc = ModuliConstants::new(&d);
        let div = random_divisor(&mc, &mut rng);
        let swapped = Divisor { p1: div.p2, p2: div.p1 };
        let a = p_pair(1, 4, &div, &mc).unwrap();
        let b = p_pair(1, 4, &swapped, &mc).unwrap();
        assert!((a - b).norm() < 1e-12 * a.norm().max(1.0));
        let flipped = Divisor {
            p1: CurvePoint { z: div.p1.z, y: -div.p1.y },
            p2: CurvePoint { z: div.p2.z, y: -div.p2.y },
        };
        let c = p_pair(1, 4, &flipped, &mc).unwrap();
        assert!((a + c).norm() < 1e-12 * a.norm().max(1.0));
    }

    #[test]
    fn diagonal_divisor_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let d = random_moduli(&mut rng);
        let mc = ModuliConstants::new(&d);
        let z = Complex64::new(1.0, 1.0);
        let y = mc.r(z).sqrt();
        let div = Divisor { p1: CurvePoint { z, y }, p2: CurvePoint { z, y } };
        assert!(matches!(
            p_pair(1, 4, &div, &mc),
            Err(ManakovError::DiagonalDivisor { .. })
        ));
    }

    #[test]
    fn identity_suite_fuzz() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let d = random_moduli(&mut rng);
            let mc = ModuliConstants::new(&d);
            let div = random_divisor(&mc, &mut rng);
            let s = Complex64::new(rng.gen::<f64>() * 6.0 - 3.0, rng.gen::<f64>() * 6.0 - 3.0);
            // keep the probe away from the branch points
            if mc.dd.iter().any(|&dj| (s - dj).norm() < 0.1) {
                continue;
            }
            let rep = identity_suite(&div, &mc, s).unwrap();
            assert!(rep.max() < 1e-10, "residuals {rep:?} for d = {d:?}");
        }
    }

    #[test]
    fn recover_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for trial in 0..5 {
            let d = random_moduli(&mut rng);
            let mc = ModuliConstants::new(&d);
            let div = random_divisor(&mc, &mut rng);
            let g = Complex64::new(0.4, -0.15);
            let mut xi = [Complex64::default(); 3];
            let mut eta = [Complex64::default(); 3];
            let mut ok = true;
            for j in 1..=3 {
                let (k, l) = CYC_W[j - 1];
                match (p_pair(k, l, &div, &mc), p_pair(j, 4, &div, &mc)) {
                    (Ok(pkl), Ok(pj4)) => {
                        xi[j - 1] = mc.sqrt_cbig[j - 1] * g * pkl;
                        eta[j - 1] = mc.sqrt_cbig[j - 1] * g * pj4;
                    }
                    _ => ok = false,
                }
            }
            if !ok {
                continue;
            }
            let rec = recover_divisor(&xi, &eta, &mc, &[]).unwrap();
            assert!(rec.res < 1e-9, "trial {trial}: residual {}", rec.res);
            // z-values match up to point swap
            let (z1, z2) = (rec.divisor.p1.z, rec.divisor.p2.z);
            let direct = (z1 - div.p1.z).norm() + (z2 - div.p2.z).norm();
            let swapped = (z1 - div.p2.z).norm() + (z2 - div.p1.z).norm();
            assert!(
                direct.min(swapped) < 1e-7 * div.p1.z.norm().max(1.0),
                "trial {trial}: z mismatch {} / {}",
                direct,
                swapped
            );
        }
    }

    #[test]
    fn recover_g_overdetermination() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = random_moduli(&mut rng);
        let mc = ModuliConstants::new(&d);
        let div = random_divisor(&mc, &mut rng);
        let g = Complex64::new(-0.3, 0.22);
        let mut xi = [Complex64::default(); 3];
        let mut eta = [Complex64::default(); 3];
        for j in 1..=3 {
            let (k, l) = CYC_W[j - 1];
            xi[j - 1] = mc.sqrt_cbig[j - 1] * g * p_pair(k, l, &div, &mc).unwrap();
            eta[j - 1] = mc.sqrt_cbig[j - 1] * g * p_pair(j, 4, &div, &mc).unwrap();
        }
        let rec = recover_divisor(&xi, &eta, &mc, &[]).unwrap();
        // component-wise g agrees with the returned g
        for j in 1..=3 {
            let (k, l) = CYC_W[j - 1];
            let pkl = p_pair(k, l, &rec.divisor, &mc).unwrap();
            let gj = xi[j - 1] / (mc.sqrt_cbig[j - 1] * pkl);
            assert!(
                (gj - rec.g * rec.sg[j - 1]).norm() < 1e-8 * rec.g.norm(),
                "component {j}"
            );
        }
    }
}
