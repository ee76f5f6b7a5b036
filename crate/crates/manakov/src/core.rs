//! Domain types, index conventions, and the so(4) Poisson structure.
//!
//! The six independent components of an antisymmetric 4x4 angular-momentum
//! matrix are stored in the fixed order `(l12, l13, l14, l23, l24, l34)`.
//! The cyclic views `m_j = l_kl`, `n_j = l_j4` (with `(j,k,l)` a cyclic
//! permutation of `(1,2,3)`) are provided as accessors; note `m_2 = -l13`.

use crate::error::ManakovError;

/// Index pairs `(i, j)` (1-based, `i < j`) for the storage order.
pub const PAIRS: [(usize, usize); 6] = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

/// Complementary pair of `(i, j)` in `{1,2,3,4}`, in increasing order.
pub const COMPLEMENT: [(usize, usize); 6] = [(3, 4), (2, 4), (2, 3), (1, 4), (1, 3), (1, 2)];

/// Inertia parameters: moduli `a_j`, `b_j` and the derived symmetric
/// coefficient matrix `c_ij = (b_i - b_j)/(a_i - a_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InertiaParameters {
    pub a: [f64; 4],
    pub b: [f64; 4],
    pub c: [[f64; 4]; 4],
}

impl InertiaParameters {
    /// Build from `a`, `b`; fails if the `a_j` are not pairwise distinct.
    pub fn new(a: [f64; 4], b: [f64; 4]) -> Result<Self, ManakovError> {
        let c = derive_c(&a, &b)?;
        Ok(Self { a, b, c })
    }

    /// Build from an explicit symmetric coefficient matrix (diagonal zeroed).
    /// `a` is still required for the spectral constructions.
    pub fn from_c(a: [f64; 4], c: [[f64; 4]; 4]) -> Result<Self, ManakovError> {
        for i in 0..4 {
            for j in (i + 1)..4 {
                if a[i] == a[j] {
                    return Err(ManakovError::DuplicateModulus { i, j });
                }
                if (c[i][j] - c[j][i]).abs() > 1e-12 * (1.0 + c[i][j].abs()) {
                    return Err(ManakovError::AsymmetricCoefficients { i, j });
                }
            }
        }
        let mut c = c;
        for i in 0..4 {
            c[i][i] = 0.0;
        }
        Ok(Self { a, b: [0.0; 4], c })
    }

    /// The canonical test instance: `a = (1,2,3,4)`, `b = a^2`, for which
    /// `c_ij = a_i + a_j`.
    pub fn canonical() -> Self {
        Self::new([1.0, 2.0, 3.0, 4.0], [1.0, 4.0, 9.0, 16.0]).expect("distinct moduli")
    }
}

/// `c_ij = (b_i - b_j)/(a_i - a_j)`, zero diagonal.
pub fn derive_c(a: &[f64; 4], b: &[f64; 4]) -> Result<[[f64; 4]; 4], ManakovError> {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            if i == j {
                continue;
            }
            let da = a[i] - a[j];
            if da == 0.0 {
                return Err(ManakovError::DuplicateModulus { i, j });
            }
            c[i][j] = (b[i] - b[j]) / da;
        }
    }
    Ok(c)
}

/// Six-component angular momentum in storage order `(l12,l13,l14,l23,l24,l34)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AngularMomentum(pub [f64; 6]);

impl AngularMomentum {
    pub fn new(l: [f64; 6]) -> Self {
        Self(l)
    }

    /// Signed component `l_ij` for any `i != j` in 1..=4.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        assert!((1..=4).contains(&i) && (1..=4).contains(&j) && i != j, "bad indices ({i},{j})");
        if i < j {
            self.0[pair_index(i, j)]
        } else {
            -self.0[pair_index(j, i)]
        }
    }

    /// `m = (l23, -l13, l12)` — the cyclic 3-vector.
    pub fn m(&self) -> [f64; 3] {
        [self.0[3], -self.0[1], self.0[0]]
    }

    /// `n = (l14, l24, l34)`.
    pub fn n(&self) -> [f64; 3] {
        [self.0[2], self.0[4], self.0[5]]
    }

    /// Rebuild from the cyclic views (round trip of `m`/`n`).
    pub fn from_mn(m: [f64; 3], n: [f64; 3]) -> Self {
        Self([m[2], -m[1], n[0], m[0], n[1], n[2]])
    }

    /// Full antisymmetric 4x4 matrix.
    pub fn as_matrix(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (idx, &(i, j)) in PAIRS.iter().enumerate() {
            out[i - 1][j - 1] = self.0[idx];
            out[j - 1][i - 1] = -self.0[idx];
        }
        out
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// Storage index of the (i,j) pair with `i < j` (1-based).
pub fn pair_index(i: usize, j: usize) -> usize {
    match (i, j) {
        (1, 2) => 0,
        (1, 3) => 1,
        (1, 4) => 2,
        (2, 3) => 3,
        (2, 4) => 4,
        (3, 4) => 5,
        _ => panic!("bad pair ({i},{j})"),
    }
}

/// Values of the four integrals of motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegralLevels {
    pub h0: f64,
    pub h1: f64,
    pub h2: f64,
    pub h3: f64,
}

/// The so(4) Poisson bracket `{l_ij, l_km}` evaluated at `l`:
/// `l_im d_jk - l_ik d_jm + l_jk d_im - l_jm d_ik`.
pub fn poisson_bracket(
    i: usize,
    j: usize,
    k: usize,
    m: usize,
    l: &AngularMomentum,
) -> Result<f64, ManakovError> {
    for &x in &[i, j, k, m] {
        if !(1..=4).contains(&x) {
            return Err(ManakovError::IndexOutOfRange(x));
        }
    }
    if i == j || k == m {
        return Err(ManakovError::IndexOutOfRange(0));
    }
    let d = |p: usize, q: usize| if p == q { 1.0 } else { 0.0 };
    let lv = |p: usize, q: usize| if p == q { 0.0 } else { l.get(p, q) };
    Ok(lv(i, m) * d(j, k) - lv(i, k) * d(j, m) + lv(j, k) * d(i, m) - lv(j, m) * d(i, k))
}

/// The four integrals of motion.
///
/// `h0` is the Pfaffian `l12 l34 - l13 l24 + l14 l23`; `h1 = sum l_jk^2`;
/// `h2`, `h3` carry the weights of the *complementary* index pair:
/// for the component `l_jk` with complement `(k', l')`,
/// `h2 += (a_k' + a_l') l_jk^2` and `h3 += a_k' a_l' l_jk^2`.
/// Only this weighting is conserved by the Manakov flow.
pub fn integrals(l: &AngularMomentum, a: &[f64; 4]) -> IntegralLevels {
    let v = &l.0;
    let h0 = v[0] * v[5] - v[1] * v[4] + v[2] * v[3];
    let mut h1 = 0.0;
    let mut h2 = 0.0;
    let mut h3 = 0.0;
    for idx in 0..6 {
        let (p, q) = COMPLEMENT[idx];
        let sq = v[idx] * v[idx];
        h1 += sq;
        h2 += (a[p - 1] + a[q - 1]) * sq;
        h3 += a[p - 1] * a[q - 1] * sq;
    }
    IntegralLevels { h0, h1, h2, h3 }
}

/// The Hamiltonian `H = 1/2 sum c_jk l_jk^2` (sum over `j < k`).
pub fn hamiltonian(l: &AngularMomentum, c: &[[f64; 4]; 4]) -> f64 {
    PAIRS
        .iter()
        .enumerate()
        .map(|(idx, &(i, j))| 0.5 * c[i - 1][j - 1] * l.0[idx] * l.0[idx])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn derive_c_canonical_sum() {
        // a=(1,2,3,4), b=a^2 gives c_ij = a_i + a_j.
        let p = InertiaParameters::canonical();
        assert_abs_diff_eq!(p.c[0][1], 3.0);
        assert_abs_diff_eq!(p.c[2][3], 7.0);
        assert_abs_diff_eq!(p.c[1][2], 5.0);
    }

    #[test]
    fn derive_c_equal_b_gives_ones() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let c = derive_c(&a, &a).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_abs_diff_eq!(c[i][j], 1.0);
                }
            }
        }
    }

    #[test]
    fn derive_c_constant_b_gives_zero() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let c = derive_c(&a, &[5.0; 4]).unwrap();
        assert!(c.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn derive_c_rejects_duplicate_moduli() {
        assert!(derive_c(&[1.0, 1.0, 3.0, 4.0], &[0.0; 4]).is_err());
    }

    #[test]
    fn bracket_l12_l23_is_l13() {
        let mut v = [0.0; 6];
        v[pair_index(1, 3)] = 0.7;
        let l = AngularMomentum::new(v);
        assert_abs_diff_eq!(poisson_bracket(1, 2, 2, 3, &l).unwrap(), 0.7, epsilon = 1e-15);
    }

    #[test]
    fn bracket_disjoint_pairs_vanish() {
        let l = AngularMomentum::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_abs_diff_eq!(poisson_bracket(1, 2, 3, 4, &l).unwrap(), 0.0);
    }

    #[test]
    fn bracket_antisymmetry() {
        let l = AngularMomentum::new([0.3, -0.1, 0.9, 0.2, -0.5, 0.4]);
        for &(i, j) in &PAIRS {
            for &(k, m) in &PAIRS {
                let f = poisson_bracket(i, j, k, m, &l).unwrap();
                let r = poisson_bracket(k, m, i, j, &l).unwrap();
                assert_abs_diff_eq!(f, -r, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn bracket_same_pair_vanishes() {
        let l = AngularMomentum::new([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_abs_diff_eq!(poisson_bracket(1, 2, 2, 1, &l).unwrap(), 0.0);
    }

    #[test]
    fn jacobi_identity_spot_check() {
        // {l_a, {l_b, l_c}} + cyclic = 0; evaluated numerically at a random
        // point via the structure constants (the bracket is linear in l).
        let l = AngularMomentum::new([0.3, -0.1, 0.9, 0.2, -0.5, 0.4]);
        // bracket of coordinate pairs returns a linear combination of l's;
        // reconstruct structure constants by evaluating on basis vectors.
        let basis_bracket = |pi: usize, pj: usize| -> [f64; 6] {
            let mut out = [0.0; 6];
            for t in 0..6 {
                let mut e = [0.0; 6];
                e[t] = 1.0;
                let el = AngularMomentum::new(e);
                let (i, j) = PAIRS[pi];
                let (k, m) = PAIRS[pj];
                out[t] = poisson_bracket(i, j, k, m, &el).unwrap();
            }
            out
        };
        let dot = |x: &[f64; 6], l: &AngularMomentum| -> f64 {
            x.iter().zip(l.0.iter()).map(|(a, b)| a * b).sum()
        };
        for a in 0..6 {
            for b in 0..6 {
                for c in 0..6 {
                    // {a,{b,c}}: expand {b,c} over basis, then bracket with a.
                    let bc = basis_bracket(b, c);
                    let mut term1 = 0.0;
                    for t in 0..6 {
                        term1 += bc[t] * dot(&basis_bracket(a, t), &l);
                    }
                    let ca = basis_bracket(c, a);
                    let mut term2 = 0.0;
                    for t in 0..6 {
                        term2 += ca[t] * dot(&basis_bracket(b, t), &l);
                    }
                    let ab = basis_bracket(a, b);
                    let mut term3 = 0.0;
                    for t in 0..6 {
                        term3 += ab[t] * dot(&basis_bracket(c, t), &l);
                    }
                    assert!(
                        (term1 + term2 + term3).abs() < 1e-12,
                        "Jacobi fails at ({a},{b},{c})"
                    );
                }
            }
        }
    }

    #[test]
    fn integrals_zero_momentum() {
        let h = integrals(&AngularMomentum::default(), &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!((h.h0, h.h1, h.h2, h.h3), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn integrals_two_component_example() {
        // l12=1, l34=2, a=(1,2,3,4): complementary weights give
        // h2 = (a3+a4)*1 + (a1+a2)*4 = 19, h3 = a3 a4 *1 + a1 a2 *4 = 20.
        let mut v = [0.0; 6];
        v[pair_index(1, 2)] = 1.0;
        v[pair_index(3, 4)] = 2.0;
        let h = integrals(&AngularMomentum::new(v), &[1.0, 2.0, 3.0, 4.0]);
        assert_abs_diff_eq!(h.h0, 2.0);
        assert_abs_diff_eq!(h.h1, 5.0);
        assert_abs_diff_eq!(h.h2, 19.0);
        assert_abs_diff_eq!(h.h3, 20.0);
    }

    #[test]
    fn mn_round_trip() {
        let l = AngularMomentum::new([0.3, -0.1, 0.9, 0.2, -0.5, 0.4]);
        let back = AngularMomentum::from_mn(l.m(), l.n());
        assert_eq!(l, back);
        assert_abs_diff_eq!(l.m()[1], -l.0[1]); // m_2 = -l13
    }
}
