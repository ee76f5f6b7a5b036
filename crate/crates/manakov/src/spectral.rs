//! Step A of the solution: the quartic spectral polynomial `F(s)`, its
//! roots, the isotropic vectors, the linearizing `(xi, eta)` transform, the
//! Kötter coefficients, the moduli `d_j` of the genus-2 curve, the `H0`
//! normal form, and the constant `epsilon`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::core::{AngularMomentum, IntegralLevels};
use crate::error::ManakovError;

/// Cyclic index triples `(j, k, l)` over `{1, 2, 3}` (1-based).
pub const CYC: [(usize, usize, usize); 3] = [(1, 2, 3), (2, 3, 1), (3, 1, 2)];

/// Everything derived from the integrals and moduli of inertia alone:
/// spectral roots, Kötter coefficient tables, curve moduli, and `epsilon`.
/// A function of `(IntegralLevels, a)` only — recomputing from the state at
/// a different time yields the same data.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// Moduli of inertia the data was built from.
    pub a: [f64; 4],
    /// Integral levels the data was built from.
    pub h: IntegralLevels,
    /// Roots of `F(s)`, ordered: conjugate pair (Im > 0 first) then the
    /// rest sorted by (Re, Im).
    pub roots: [Complex64; 4],
    /// `P[j][p] = sqrt(s_j4(s_p)) / sqrt(F'(s_p))` (j = 1..3, p = 1..4).
    pub p_table: [[Complex64; 4]; 3],
    /// `Q[j][p] = sqrt(s_kl(s_p)) / sqrt(F'(s_p))`.
    pub q_table: [[Complex64; 4]; 3],
    /// Coefficients of `m_j = alpha_j xi_j + beta_j eta_j`.
    pub alpha: [Complex64; 3],
    pub beta: [Complex64; 3],
    /// Coefficients of `n_j = gamma_j xi_j + delta_j eta_j`.
    pub gamma: [Complex64; 3],
    pub delta: [Complex64; 3],
    /// Minors `Delta_j^(p) = P_j^(q) Q_j^(r) - P_j^(r) Q_j^(q)` with
    /// `(p, q, r)` cyclic over the first three roots.
    pub delta_table: [[Complex64; 3]; 3],
    /// `sqrt(d_j) = (Delta_j^(1) - i Delta_j^(2)) / Delta_j^(3)`.
    pub sqrt_d: [Complex64; 3],
    /// Curve moduli `d_1, d_2, d_3` (with `d_0 = 0` implied).
    pub d: [Complex64; 3],
    /// `d_4 = d_1 d_2 d_3`.
    pub d4: Complex64,
    /// The constant of the `H0` normal form, principal-branch value.
    pub epsilon: Complex64,
}

/// Expand the monic polynomial with the given roots into coefficients
/// ordered from the leading power down (like the roots' companion form).
fn poly_from_real_roots(roots: &[f64]) -> Vec<f64> {
    let mut c = vec![1.0];
    for &r in roots {
        let mut nc = vec![0.0; c.len() + 1];
        for (i, &ci) in c.iter().enumerate() {
            nc[i] += ci;
            nc[i + 1] -= ci * r;
        }
        c = nc;
    }
    c
}

fn polymul(p: &[f64], q: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; p.len() + q.len() - 1];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            out[i + j] += pi * qj;
        }
    }
    out
}

/// Horner evaluation; coefficients from the leading power down.
pub fn polyval(c: &[f64], s: Complex64) -> Complex64 {
    c.iter().fold(Complex64::new(0.0, 0.0), |acc, &ci| acc * s + ci)
}

fn polyder(c: &[f64]) -> Vec<f64> {
    let n = c.len() - 1;
    c[..n]
        .iter()
        .enumerate()
        .map(|(i, &ci)| ci * (n - i) as f64)
        .collect()
}

/// Coefficients (degree 4 down to 0) of the spectral quartic
/// `F(s) = [(h1 s^2 - h2 s + h3)^2 - 4 h0^2 G(s)] / (h1^2 - 4 h0^2)`.
pub fn f_poly(h: &IntegralLevels, a: &[f64; 4]) -> Result<[f64; 5], ManakovError> {
    let lead = h.h1 * h.h1 - 4.0 * h.h0 * h.h0;
    let scale = h.h1.abs().max(h.h2.abs()).max(h.h3.abs()).max(1.0);
    if lead.abs() < 1e-12 * scale * scale {
        return Err(ManakovError::DegenerateLevel);
    }
    let g = poly_from_real_roots(a);
    let p2 = [h.h1, -h.h2, h.h3];
    let sq = polymul(&p2, &p2);
    let mut f = [0.0; 5];
    for i in 0..5 {
        f[i] = (sq[i] - 4.0 * h.h0 * h.h0 * g[i]) / lead;
    }
    Ok(f)
}

/// Roots of the spectral quartic via companion-matrix eigenvalues, polished
/// by Newton iteration, ordered with the conjugate pair (if any) first.
pub fn quartic_roots(h: &IntegralLevels, a: &[f64; 4]) -> Result<[Complex64; 4], ManakovError> {
    let f = f_poly(h, a)?;
    let fd = polyder(&f);
    // companion matrix of the monic quartic (f[0] == 1 by construction)
    let mut comp = DMatrix::<f64>::zeros(4, 4);
    for i in 0..4 {
        comp[(0, i)] = -f[i + 1] / f[0];
    }
    for i in 1..4 {
        comp[(i, i - 1)] = 1.0;
    }
    let eig = comp.complex_eigenvalues();
    let mut roots: Vec<Complex64> = eig.iter().map(|&z| Complex64::new(z.re, z.im)).collect();
    // Newton polish
    for r in roots.iter_mut() {
        for _ in 0..50 {
            let fv = polyval(&f, *r);
            let dv = polyval(&fd, *r);
            if dv.norm() == 0.0 {
                break;
            }
            let step = fv / dv;
            *r -= step;
            if step.norm() < 1e-15 * r.norm().max(1.0) {
                break;
            }
        }
    }
    // separation check
    let scale: f64 = roots.iter().map(|r| r.norm()).fold(1.0, f64::max);
    for i in 0..4 {
        for j in i + 1..4 {
            let sep = (roots[i] - roots[j]).norm();
            if sep < 1e-6 * scale {
                return Err(ManakovError::RepeatedRoot { sep });
            }
        }
    }
    roots.sort_by(|x, y| {
        (x.re, x.im)
            .partial_cmp(&(y.re, y.im))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    // select a conjugate pair as (s1, s2) with Im s1 > 0 when one exists
    let mut ordered = [Complex64::default(); 4];
    let mut pair: Option<(usize, usize)> = None;
    'outer: for i in 0..4 {
        for j in i + 1..4 {
            if roots[i].im.abs() > 1e-12 * scale
                && (roots[i] - roots[j].conj()).norm() < 1e-9 * scale
            {
                pair = Some((i, j));
                break 'outer;
            }
        }
    }
    if let Some((i, j)) = pair {
        let s1 = if roots[i].im > 0.0 { roots[i] } else { roots[j] };
        ordered[0] = s1;
        ordered[1] = s1.conj();
        let rest: Vec<Complex64> = (0..4).filter(|&k| k != i && k != j).map(|k| roots[k]).collect();
        ordered[2] = rest[0];
        ordered[3] = rest[1];
    } else {
        for (k, &r) in roots.iter().enumerate() {
            ordered[k] = r;
        }
    }
    Ok(ordered)
}

/// Branch data at a spectral point: `sqrt(s_j4)` (principal) and
/// `sqrt(s_kl) = sqrt(G)/sqrt(s_j4)` with the `sqrt(G)` sheet defined by
/// `sqrt(G)(s) := -(h1 s^2 - h2 s + h3)/(2 h0)`, the choice that makes the
/// generating function `f(s)` vanish at spectral roots.
pub fn branch_data(
    s: Complex64,
    h: &IntegralLevels,
    a: &[f64; 4],
) -> Result<([Complex64; 3], [Complex64; 3]), ManakovError> {
    let g_poly = poly_from_real_roots(a);
    let gv = polyval(&g_poly, s);
    let sqrt_g = -(h.h1 * s * s - h.h2 * s + h.h3) / (2.0 * h.h0);
    let residual = (sqrt_g * sqrt_g - gv).norm() / gv.norm().max(1.0);
    if residual > 1e-8 {
        return Err(ManakovError::BranchSelectionFailed { residual });
    }
    let mut sj4 = [Complex64::default(); 3];
    let mut skl = [Complex64::default(); 3];
    for j in 0..3 {
        sj4[j] = ((s - a[j]) * (s - a[3])).sqrt();
        skl[j] = sqrt_g / sj4[j];
    }
    Ok((sj4, skl))
}

/// The two selected isotropic vectors `l^(p) = l(s_p)/sqrt(F'(s_p))`,
/// p = 1, 2 (the conjugate pair).
pub fn isotropic_vectors(
    l: &AngularMomentum,
    a: &[f64; 4],
    h: &IntegralLevels,
    roots: &[Complex64; 4],
) -> Result<[[Complex64; 3]; 2], ManakovError> {
    let f = f_poly(h, a)?;
    let fd = polyder(&f);
    let m = l.m();
    let n = l.n();
    let mut out = [[Complex64::default(); 3]; 2];
    for p in 0..2 {
        let s = roots[p];
        let (sj4, skl) = branch_data(s, h, a)?;
        let sf = polyval(&fd, s).sqrt();
        for j in 0..3 {
            out[p][j] = (sj4[j] * m[j] + skl[j] * n[j]) / sf;
        }
    }
    Ok(out)
}

/// `xi_j = l_j^(1) + i l_j^(2)`, `eta_j = l_j^(1) - i l_j^(2)`.
pub fn xi_eta(l1: &[Complex64; 3], l2: &[Complex64; 3]) -> ([Complex64; 3], [Complex64; 3]) {
    let i = Complex64::new(0.0, 1.0);
    let mut xi = [Complex64::default(); 3];
    let mut eta = [Complex64::default(); 3];
    for j in 0..3 {
        xi[j] = l1[j] + i * l2[j];
        eta[j] = l1[j] - i * l2[j];
    }
    (xi, eta)
}

/// Kötter coefficient tables: `P`, `Q` at all four roots, the inversion
/// coefficients `alpha..delta` of Eq-style `m = alpha xi + beta eta`,
/// `n = gamma xi + delta eta`, and the `Delta_j^(p)` minor table.
#[derive(Debug, Clone)]
pub struct KoetterCoefficients {
    pub p_table: [[Complex64; 4]; 3],
    pub q_table: [[Complex64; 4]; 3],
    pub alpha: [Complex64; 3],
    pub beta: [Complex64; 3],
    pub gamma: [Complex64; 3],
    pub delta: [Complex64; 3],
    pub delta_table: [[Complex64; 3]; 3],
}

pub fn koetter_coefficients(
    roots: &[Complex64; 4],
    h: &IntegralLevels,
    a: &[f64; 4],
) -> Result<KoetterCoefficients, ManakovError> {
    let f = f_poly(h, a)?;
    let fd = polyder(&f);
    let mut p_table = [[Complex64::default(); 4]; 3];
    let mut q_table = [[Complex64::default(); 4]; 3];
    for p in 0..4 {
        let s = roots[p];
        let (sj4, skl) = branch_data(s, h, a)?;
        let sf = polyval(&fd, s).sqrt();
        for j in 0..3 {
            p_table[j][p] = sj4[j] / sf;
            q_table[j][p] = skl[j] / sf;
        }
    }
    let i = Complex64::new(0.0, 1.0);
    let mut alpha = [Complex64::default(); 3];
    let mut beta = [Complex64::default(); 3];
    let mut gamma = [Complex64::default(); 3];
    let mut delta = [Complex64::default(); 3];
    for j in 0..3 {
        let (p1, q1) = (p_table[j][0], q_table[j][0]);
        let (p2, q2) = (p_table[j][1], q_table[j][1]);
        let det = 2.0 * i * (p2 * q1 - p1 * q2);
        alpha[j] = (q1 - i * q2) / det;
        beta[j] = -(q1 + i * q2) / det;
        gamma[j] = -(p1 - i * p2) / det;
        delta[j] = (p1 + i * p2) / det;
    }
    // Delta_j^(p) over the first three roots, (p, q, r) cyclic: the minor
    // P_j^(q) Q_j^(r) - P_j^(r) Q_j^(q); this is the reading under which
    // sum_p (Delta_j^(p))^2 = 0 holds.
    const CYCP: [(usize, usize); 3] = [(1, 2), (2, 0), (0, 1)];
    let mut delta_table = [[Complex64::default(); 3]; 3];
    for j in 0..3 {
        for (p, &(q, r)) in CYCP.iter().enumerate() {
            delta_table[j][p] = p_table[j][q] * q_table[j][r] - p_table[j][r] * q_table[j][q];
        }
        let d3 = delta_table[j][2].norm();
        if d3 < 1e-12 {
            return Err(ManakovError::VanishingDelta { j: j + 1, value: d3 });
        }
    }
    Ok(KoetterCoefficients { p_table, q_table, alpha, beta, gamma, delta, delta_table })
}

/// Moduli of the genus-2 curve from the minor table:
/// `sqrt(d_j) = (Delta_j^(1) - i Delta_j^(2)) / Delta_j^(3)`; the
/// reciprocal formula `-(Delta_j^(1) + i Delta_j^(2)) / Delta_j^(3)` must
/// agree with `1/sqrt(d_j)`.
pub fn moduli(
    delta_table: &[[Complex64; 3]; 3],
) -> Result<([Complex64; 3], [Complex64; 3], Complex64), ManakovError> {
    let i = Complex64::new(0.0, 1.0);
    let mut sqrt_d = [Complex64::default(); 3];
    let mut d = [Complex64::default(); 3];
    for j in 0..3 {
        let d3 = delta_table[j][2];
        if d3.norm() < 1e-12 {
            return Err(ManakovError::VanishingDelta { j: j + 1, value: d3.norm() });
        }
        sqrt_d[j] = (delta_table[j][0] - i * delta_table[j][1]) / d3;
        let inv = -(delta_table[j][0] + i * delta_table[j][1]) / d3;
        let deviation = (sqrt_d[j] * inv - 1.0).norm();
        if deviation > 1e-8 {
            return Err(ManakovError::InconsistentModulus { deviation });
        }
        d[j] = sqrt_d[j] * sqrt_d[j];
    }
    let d4 = d[0] * d[1] * d[2];
    Ok((sqrt_d, d, d4))
}

/// Result of reducing `H0` to the normal form
/// `sum_j A_j (xi_j^2 - eta_j^2) + B_j xi_j eta_j` modulo the Kötter
/// quadrics, with the model fit `A_j = alpha + beta d_j + gamma / d_j`,
/// `B_j = delta (d_j + 1/d_j)`.
#[derive(Debug, Clone)]
pub struct NormalForm {
    pub a_coeff: [Complex64; 3],
    pub b_coeff: [Complex64; 3],
    /// Fitted scalars `(alpha, beta, gamma, delta)` of the model.
    pub scalars: [Complex64; 4],
    /// Max absolute residual of the 9x7 least-squares system.
    pub fit_residual: f64,
    /// The reduced form evaluated at the supplied `(xi, eta)`.
    pub value: Complex64,
}

pub fn h0_normal_form(
    xi: &[Complex64; 3],
    eta: &[Complex64; 3],
    coeffs: &KoetterCoefficients,
    d: &[Complex64; 3],
    h: &IntegralLevels,
) -> Result<NormalForm, ManakovError> {
    // raw quadratic form: h0 = sum u_j xi^2 + v_j eta^2 + w_j xi eta with
    // u = alpha*gamma, v = beta*delta, w = alpha*delta + beta*gamma
    // (substitute m, n in the Pfaffian's diagonal-free pairing).
    let mut u = [Complex64::default(); 3];
    let mut v = [Complex64::default(); 3];
    let mut w = [Complex64::default(); 3];
    for j in 0..3 {
        u[j] = coeffs.alpha[j] * coeffs.gamma[j];
        v[j] = coeffs.beta[j] * coeffs.delta[j];
        w[j] = coeffs.alpha[j] * coeffs.delta[j] + coeffs.beta[j] * coeffs.gamma[j];
    }
    // reduce modulo the quadrics: unknowns x = (lam, nu, mu, al, be, ga, de)
    //   u_j + lam + nu d_j          = al + be d_j + ga/d_j
    //   v_j + lam + nu/d_j          = -(al + be d_j + ga/d_j)
    //   w_j + mu                    = de (d_j + 1/d_j)
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::default();
    let mut m = DMatrix::<Complex64>::zeros(9, 7);
    let mut rhs = DVector::<Complex64>::zeros(9);
    for j in 0..3 {
        let dj = d[j];
        let row = [one, dj, zero, -one, -dj, -one / dj, zero];
        for (k, &val) in row.iter().enumerate() {
            m[(j, k)] = val;
        }
        rhs[j] = -u[j];
        let row = [one, one / dj, zero, one, dj, one / dj, zero];
        for (k, &val) in row.iter().enumerate() {
            m[(3 + j, k)] = val;
        }
        rhs[3 + j] = -v[j];
        m[(6 + j, 2)] = one;
        m[(6 + j, 6)] = -(dj + one / dj);
        rhs[6 + j] = -w[j];
    }
    let svd = m.clone().svd(true, true);
    let x = svd
        .solve(&rhs, 1e-13)
        .map_err(|_| ManakovError::FitResidualTooLarge { residual: f64::INFINITY })?;
    let resid_vec = &m * &x - &rhs;
    let fit_residual = resid_vec.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = h.h0.abs().max(h.h1.abs()).max(h.h2.abs()).max(h.h3.abs()).max(1.0);
    if fit_residual > 1e-8 * scale {
        return Err(ManakovError::FitResidualTooLarge { residual: fit_residual });
    }
    let (al, be, ga, de) = (x[3], x[4], x[5], x[6]);
    let mut a_coeff = [Complex64::default(); 3];
    let mut b_coeff = [Complex64::default(); 3];
    let mut value = Complex64::default();
    for j in 0..3 {
        a_coeff[j] = al + be * d[j] + ga / d[j];
        b_coeff[j] = de * (d[j] + one / d[j]);
        value += a_coeff[j] * (xi[j] * xi[j] - eta[j] * eta[j]) + b_coeff[j] * xi[j] * eta[j];
    }
    Ok(NormalForm { a_coeff, b_coeff, scalars: [al, be, ga, de], fit_residual, value })
}

/// The constant `epsilon` of the `H0` normal form, principal branches:
/// with `A = sqrt((s1-s3)(s2-s4))`, `B = sqrt((s1-s4)(s2-s3))`,
/// `C = sqrt((s1-s2)(s3-s4))`,
/// `epsilon = (B - A) / (sqrt(d4) C)  [= -C / (sqrt(d4)(A + B))]`.
/// The two forms agree identically via `A^2 - B^2 = C^2`.
pub fn epsilon(roots: &[Complex64; 4], d4: Complex64) -> Complex64 {
    let (s1, s2, s3, s4) = (roots[0], roots[1], roots[2], roots[3]);
    let a = ((s1 - s3) * (s2 - s4)).sqrt();
    let b = ((s1 - s4) * (s2 - s3)).sqrt();
    let c = ((s1 - s2) * (s3 - s4)).sqrt();
    (b - a) / (d4.sqrt() * c)
}

/// All sign variants of [`epsilon`]; a downstream normalization fit fixes
/// the branch when the principal value is not the matching one.
pub fn epsilon_candidates(roots: &[Complex64; 4], d4: Complex64) -> Vec<Complex64> {
    let (s1, s2, s3, s4) = (roots[0], roots[1], roots[2], roots[3]);
    let a = ((s1 - s3) * (s2 - s4)).sqrt();
    let b = ((s1 - s4) * (s2 - s3)).sqrt();
    let c = ((s1 - s2) * (s3 - s4)).sqrt();
    let sd4 = d4.sqrt();
    let mut out = Vec::new();
    for &sa in &[1.0, -1.0] {
        for &sb in &[1.0, -1.0] {
            out.push((sb * b - sa * a) / (sd4 * c));
        }
    }
    out
}

/// Build the full spectral data set from a state (only its integrals
/// matter) and the moduli of inertia.
pub fn spectral_data(
    l: &AngularMomentum,
    h: &IntegralLevels,
    a: &[f64; 4],
) -> Result<SpectralData, ManakovError> {
    let _ = l; // integrals carry all the information; kept for call-site symmetry
    let roots = quartic_roots(h, a)?;
    let coeffs = koetter_coefficients(&roots, h, a)?;
    let (sqrt_d, d, d4) = moduli(&coeffs.delta_table)?;
    let eps = epsilon(&roots, d4);
    Ok(SpectralData {
        a: *a,
        h: *h,
        roots,
        p_table: coeffs.p_table,
        q_table: coeffs.q_table,
        alpha: coeffs.alpha,
        beta: coeffs.beta,
        gamma: coeffs.gamma,
        delta: coeffs.delta,
        delta_table: coeffs.delta_table,
        sqrt_d,
        d,
        d4,
        epsilon: eps,
    })
}

impl SpectralData {
    /// `(xi, eta)` at a state using this (fixed) spectral data: the
    /// isotropic combinations built from the stored `P`, `Q` tables.
    pub fn xi_eta_at(&self, l: &AngularMomentum) -> ([Complex64; 3], [Complex64; 3]) {
        let m = l.m();
        let n = l.n();
        let i = Complex64::new(0.0, 1.0);
        let mut xi = [Complex64::default(); 3];
        let mut eta = [Complex64::default(); 3];
        for j in 0..3 {
            let l1 = self.p_table[j][0] * m[j] + self.q_table[j][0] * n[j];
            let l2 = self.p_table[j][1] * m[j] + self.q_table[j][1] * n[j];
            xi[j] = l1 + i * l2;
            eta[j] = l1 - i * l2;
        }
        (xi, eta)
    }

    /// Residuals of the three Kötter quadrics at `(xi, eta)`:
    /// `sum(xi^2 + eta^2)`, `sum(xi eta)`, `sum(d xi^2 + eta^2 / d)`.
    pub fn quadric_residuals(&self, xi: &[Complex64; 3], eta: &[Complex64; 3]) -> [f64; 3] {
        let mut q1 = Complex64::default();
        let mut q2 = Complex64::default();
        let mut q3 = Complex64::default();
        for j in 0..3 {
            q1 += xi[j] * xi[j] + eta[j] * eta[j];
            q2 += xi[j] * eta[j];
            q3 += self.d[j] * xi[j] * xi[j] + eta[j] * eta[j] / self.d[j];
        }
        [q1.norm(), q2.norm(), q3.norm()]
    }

    /// Rebuild the state from `(xi, eta)` through the Kötter coefficients.
    pub fn state_from_xi_eta(&self, xi: &[Complex64; 3], eta: &[Complex64; 3]) -> [Complex64; 6] {
        let mut m = [Complex64::default(); 3];
        let mut n = [Complex64::default(); 3];
        for j in 0..3 {
            m[j] = self.alpha[j] * xi[j] + self.beta[j] * eta[j];
            n[j] = self.gamma[j] * xi[j] + self.delta[j] * eta[j];
        }
        // m = (l23, -l13, l12), n = (l14, l24, l34)
        [m[2], -m[1], n[0], m[0], n[1], n[2]]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::core::{integrals, InertiaParameters};
    use crate::dynamics::integrate;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_unit_state(seed: u64) -> AngularMomentum {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = [0.0; 6];
        for x in v.iter_mut() {
            *x = rng.gen::<f64>() * 2.0 - 1.0;
        }
        let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in v.iter_mut() {
            *x /= n;
        }
        AngularMomentum::new(v)
    }

    fn setup() -> (InertiaParameters, AngularMomentum, IntegralLevels) {
        let p = InertiaParameters::canonical();
        let l = random_unit_state(11);
        let h = integrals(&l, &p.a);
        (p, l, h)
    }

    #[test]
    fn roots_annihilate_f() {
        let (p, _, h) = setup();
        let f = f_poly(&h, &p.a).unwrap();
        let roots = quartic_roots(&h, &p.a).unwrap();
        for r in roots {
            assert!(polyval(&f, r).norm() < 1e-10);
        }
    }

    #[test]
    fn roots_conjugate_pairs_for_real_data() {
        let (p, _, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        // real-coefficient polynomial: root set closed under conjugation
        for r in roots.iter() {
            let conj_present = roots.iter().any(|q| (q - r.conj()).norm() < 1e-9);
            assert!(conj_present);
        }
    }

    #[test]
    fn degenerate_levels_rejected() {
        let p = InertiaParameters::canonical();
        let h = IntegralLevels { h0: 0.5, h1: 1.0, h2: 2.0, h3: 1.5 };
        assert!(matches!(f_poly(&h, &p.a), Err(ManakovError::DegenerateLevel)));
    }

    #[test]
    fn zero_h0_gives_repeated_roots() {
        let p = InertiaParameters::canonical();
        // h0 = 0 makes F a perfect square of the quadratic
        let h = IntegralLevels { h0: 0.0, h1: 1.0, h2: 4.0, h3: 3.5 };
        assert!(matches!(
            quartic_roots(&h, &p.a),
            Err(ManakovError::RepeatedRoot { .. })
        ));
    }

    #[test]
    fn isotropic_vectors_are_isotropic() {
        let (p, l, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        let iv = isotropic_vectors(&l, &p.a, &h, &roots).unwrap();
        for v in iv.iter() {
            let sq: Complex64 = v.iter().map(|z| z * z).sum();
            assert!(sq.norm() < 1e-10, "(l^(p))^2 = {sq}");
        }
    }

    #[test]
    fn four_root_isotropy_sum() {
        // sum over all four roots of (l_k^(p))^2 vanishes per component
        let (p, l, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        let f = f_poly(&h, &p.a).unwrap();
        let fd = polyder(&f);
        let m = l.m();
        let n = l.n();
        for k in 0..3 {
            let mut tot = Complex64::default();
            for root in roots.iter() {
                let (sj4, skl) = branch_data(*root, &h, &p.a).unwrap();
                let sf = polyval(&fd, *root).sqrt();
                let lv = (sj4[k] * m[k] + skl[k] * n[k]) / sf;
                tot += lv * lv;
            }
            assert!(tot.norm() < 1e-10, "component {k}: {tot}");
        }
    }

    #[test]
    fn xi_eta_on_first_two_quadrics() {
        let (p, l, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        let iv = isotropic_vectors(&l, &p.a, &h, &roots).unwrap();
        let (xi, eta) = xi_eta(&iv[0], &iv[1]);
        let q1: Complex64 = (0..3).map(|j| xi[j] * xi[j] + eta[j] * eta[j]).sum();
        let q2: Complex64 = (0..3).map(|j| xi[j] * eta[j]).sum();
        assert!(q1.norm() < 1e-10 && q2.norm() < 1e-10);
    }

    #[test]
    fn koetter_round_trip() {
        let (p, l, h) = setup();
        let sd = spectral_data(&l, &h, &p.a).unwrap();
        let (xi, eta) = sd.xi_eta_at(&l);
        let rebuilt = sd.state_from_xi_eta(&xi, &eta);
        for (i, z) in rebuilt.iter().enumerate() {
            assert!((z.re - l.0[i]).abs() < 1e-9 && z.im.abs() < 1e-9);
        }
    }

    #[test]
    fn conjugate_root_real_structure() {
        // with s2 = conj(s1) and real state: conj(xi_j) = -i xi_j,
        // e^{i pi/4} alpha and e^{-i pi/4} beta are real (likewise gamma,
        // delta) — the structure that makes the rebuilt m, n real.
        let (p, l, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        assert!((roots[1] - roots[0].conj()).norm() < 1e-9);
        let co = koetter_coefficients(&roots, &h, &p.a).unwrap();
        let w = Complex64::from_polar(1.0, std::f64::consts::FRAC_PI_4);
        for j in 0..3 {
            assert!((w * co.alpha[j]).im.abs() < 1e-12);
            assert!((co.beta[j] / w).im.abs() < 1e-12);
            assert!((w * co.gamma[j]).im.abs() < 1e-12);
            assert!((co.delta[j] / w).im.abs() < 1e-12);
        }
        let iv = isotropic_vectors(&l, &p.a, &h, &roots).unwrap();
        let (xi, _) = xi_eta(&iv[0], &iv[1]);
        let i = Complex64::new(0.0, 1.0);
        for z in xi.iter() {
            assert!((z.conj() + i * z).norm() < 1e-12);
        }
    }

    #[test]
    fn delta_squares_sum_to_zero() {
        let (p, _, h) = setup();
        let roots = quartic_roots(&h, &p.a).unwrap();
        let co = koetter_coefficients(&roots, &h, &p.a).unwrap();
        for j in 0..3 {
            let s: Complex64 = co.delta_table[j].iter().map(|z| z * z).sum();
            assert!(s.norm() < 1e-9, "j={j}: {s}");
        }
    }

    #[test]
    fn moduli_consistent_and_third_quadric() {
        let (p, l, h) = setup();
        let sd = spectral_data(&l, &h, &p.a).unwrap();
        let (xi, eta) = sd.xi_eta_at(&l);
        let q = sd.quadric_residuals(&xi, &eta);
        assert!(q[2] < 1e-9, "third quadric: {}", q[2]);
        let prod = sd.d[0] * sd.d[1] * sd.d[2];
        assert!((prod - sd.d4).norm() < 1e-12);
    }

    #[test]
    fn quadrics_and_moduli_stable_along_trajectory() {
        let (p, l, h) = setup();
        let sd = spectral_data(&l, &h, &p.a).unwrap();
        let traj = integrate(&l, &p.c, 5.0, 1e-3, 100).unwrap();
        let mut max_d_spread: f64 = 0.0;
        for st in traj.states.iter() {
            let (xi, eta) = sd.xi_eta_at(st);
            let q = sd.quadric_residuals(&xi, &eta);
            assert!(q.iter().all(|&r| r < 1e-9), "quadrics {q:?}");
            let h_t = integrals(st, &p.a);
            let sd_t = spectral_data(st, &h_t, &p.a).unwrap();
            for j in 0..3 {
                max_d_spread = max_d_spread.max((sd_t.d[j] - sd.d[j]).norm());
            }
        }
        assert!(max_d_spread < 1e-8, "d spread {max_d_spread}");
    }

    #[test]
    fn normal_form_reduces_to_h0() {
        let (p, l, h) = setup();
        let sd = spectral_data(&l, &h, &p.a).unwrap();
        let co = koetter_coefficients(&sd.roots, &h, &p.a).unwrap();
        let (xi, eta) = sd.xi_eta_at(&l);
        let nf = h0_normal_form(&xi, &eta, &co, &sd.d, &h).unwrap();
        assert!(nf.fit_residual < 1e-8, "fit residual {}", nf.fit_residual);
        assert!((nf.value - h.h0).norm() < 1e-9, "form value {} vs h0 {}", nf.value, h.h0);
    }

    #[test]
    fn epsilon_label_swap_invariance() {
        let (p, l, h) = setup();
        let sd = spectral_data(&l, &h, &p.a).unwrap();
        let r = sd.roots;
        let swapped = [r[1], r[0], r[3], r[2]];
        let e1 = epsilon(&sd.roots, sd.d4);
        let e2 = epsilon(&swapped, sd.d4);
        assert!((e1.norm() - e2.norm()).abs() < 1e-12 * e1.norm().max(1e-30));
        assert!(e1.norm() > 0.0 && e1.is_finite());
        let _ = l;
    }
}
