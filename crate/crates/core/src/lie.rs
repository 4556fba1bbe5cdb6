//! Small-matrix kernels for the structure group.
//!
//! Two groups are supported: the abelian `U(1)` (rank 1, a single unit
//! complex number) and `SU(2)` (rank 2). Both are stored in the same 2×2
//! complex buffer; rank-1 elements only ever touch the `(0, 0)` entry, so the
//! general 2×2 arithmetic keeps the unused entries exactly zero.
//!
//! The algebra basis for `su(2)` is `τ_a = -(i/2) σ_a`, which gives
//! `[τ_1, τ_2] = τ_3` and `inner(τ_a, τ_b) = δ_ab / 2`. For `u(1)` the single
//! generator is `i`, with `inner(i, i) = 1`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;
use thiserror::Error;

/// Unitarity tolerance for group elements.
pub const UNITARITY_TOL: f64 = 1e-12;

/// Angular distance from `-1` below which the principal logarithm is refused.
pub const BRANCH_TOL: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LieError {
    #[error("log undefined: eigenvalue angle {angle} lies within {tol} of the branch cut at -1")]
    BranchCut { angle: f64, tol: f64 },
    #[error("polar decomposition singular (|det| = {det_abs:e})")]
    SingularPolar { det_abs: f64 },
}

/// Structure group of the bundle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Group {
    U1,
    Su2,
}

impl Group {
    /// Matrix size `N`.
    pub fn rank(self) -> usize {
        match self {
            Group::U1 => 1,
            Group::Su2 => 2,
        }
    }

    /// Real dimension of the Lie algebra.
    pub fn algebra_dim(self) -> usize {
        match self {
            Group::U1 => 1,
            Group::Su2 => 3,
        }
    }

    pub fn from_rank(rank: usize) -> Option<Group> {
        match rank {
            1 => Some(Group::U1),
            2 => Some(Group::Su2),
            _ => None,
        }
    }

    pub fn is_abelian(self) -> bool {
        self == Group::U1
    }

    /// Basis generator `a` (`τ_a` for SU(2), `i` for U(1)).
    pub fn generator(self, a: usize) -> AlgebraElement {
        let mut c = [0.0; 3];
        c[a] = 1.0;
        AlgebraElement::from_coords(self, &c[..self.algebra_dim()])
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Group::U1 => write!(f, "u1"),
            Group::Su2 => write!(f, "su2"),
        }
    }
}

/// A complex matrix of rank 1 or 2, stored row-major in a 2×2 buffer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Matrix {
    rank: u8,
    m: [Complex64; 4],
}

impl Matrix {
    pub fn zeros(rank: usize) -> Self {
        assert!(rank == 1 || rank == 2, "unsupported matrix rank {rank}");
        Matrix {
            rank: rank as u8,
            m: [ZERO; 4],
        }
    }

    pub fn identity(rank: usize) -> Self {
        let mut z = Self::zeros(rank);
        z.m[0] = ONE;
        if rank == 2 {
            z.m[3] = ONE;
        }
        z
    }

    /// Builds a matrix from row-major entries (`rank²` of them).
    pub fn from_entries(rank: usize, entries: &[Complex64]) -> Self {
        assert_eq!(entries.len(), rank * rank, "entry count does not match rank");
        let mut z = Self::zeros(rank);
        for i in 0..rank {
            for j in 0..rank {
                z.m[2 * i + j] = entries[rank * i + j];
            }
        }
        z
    }

    pub fn rank(&self) -> usize {
        self.rank as usize
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.m[2 * i + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        debug_assert!(i < self.rank() && j < self.rank());
        self.m[2 * i + j] = v;
    }

    /// Row-major entries, `rank²` of them.
    pub fn entries(&self) -> impl Iterator<Item = Complex64> + '_ {
        let r = self.rank();
        (0..r).flat_map(move |i| (0..r).map(move |j| self.m[2 * i + j]))
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Matrix {
            rank: self.rank,
            m: [m[0].conj(), m[2].conj(), m[1].conj(), m[3].conj()],
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.m[0] + self.m[3]
    }

    pub fn det(&self) -> Complex64 {
        if self.rank == 1 {
            self.m[0]
        } else {
            self.m[0] * self.m[3] - self.m[1] * self.m[2]
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        let m = &self.m;
        Matrix {
            rank: self.rank,
            m: [m[0] * s, m[1] * s, m[2] * s, m[3] * s],
        }
    }

    pub fn scale_complex(&self, s: Complex64) -> Self {
        let m = &self.m;
        Matrix {
            rank: self.rank,
            m: [m[0] * s, m[1] * s, m[2] * s, m[3] * s],
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d.norm() == 0.0 {
            return None;
        }
        let m = &self.m;
        Some(if self.rank == 1 {
            Matrix {
                rank: 1,
                m: [ONE / m[0], ZERO, ZERO, ZERO],
            }
        } else {
            Matrix {
                rank: 2,
                m: [m[3] / d, -m[1] / d, -m[2] / d, m[0] / d],
            }
        })
    }

    pub fn is_finite(&self) -> bool {
        self.m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Add for Matrix {
    type Output = Matrix;
    fn add(self, o: Matrix) -> Matrix {
        debug_assert_eq!(self.rank, o.rank);
        Matrix {
            rank: self.rank,
            m: [
                self.m[0] + o.m[0],
                self.m[1] + o.m[1],
                self.m[2] + o.m[2],
                self.m[3] + o.m[3],
            ],
        }
    }
}

impl Sub for Matrix {
    type Output = Matrix;
    fn sub(self, o: Matrix) -> Matrix {
        debug_assert_eq!(self.rank, o.rank);
        Matrix {
            rank: self.rank,
            m: [
                self.m[0] - o.m[0],
                self.m[1] - o.m[1],
                self.m[2] - o.m[2],
                self.m[3] - o.m[3],
            ],
        }
    }
}

impl Mul for Matrix {
    type Output = Matrix;
    fn mul(self, o: Matrix) -> Matrix {
        debug_assert_eq!(self.rank, o.rank);
        let (a, b) = (&self.m, &o.m);
        if self.rank == 1 {
            return Matrix {
                rank: 1,
                m: [a[0] * b[0], ZERO, ZERO, ZERO],
            };
        }
        Matrix {
            rank: 2,
            m: [
                a[0] * b[0] + a[1] * b[2],
                a[0] * b[1] + a[1] * b[3],
                a[2] * b[0] + a[3] * b[2],
                a[2] * b[1] + a[3] * b[3],
            ],
        }
    }
}

/// Element of the Lie algebra: anti-Hermitian (and traceless for `N = 2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlgebraElement(Matrix);

/// Element of the structure group: unitary (and unimodular for `N = 2`).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupElement(Matrix);

impl AlgebraElement {
    pub fn zero(group: Group) -> Self {
        AlgebraElement(Matrix::zeros(group.rank()))
    }

    /// Wraps a matrix without projecting. Callers must guarantee the
    /// algebra invariants; use [`project_algebra`] otherwise.
    pub fn from_matrix_unchecked(m: Matrix) -> Self {
        AlgebraElement(m)
    }

    /// `Σ_a c_a T_a` in the group's basis (`τ_a` or `i`).
    pub fn from_coords(group: Group, c: &[f64]) -> Self {
        assert_eq!(c.len(), group.algebra_dim());
        match group {
            Group::U1 => {
                let mut m = Matrix::zeros(1);
                m.m[0] = Complex64::new(0.0, c[0]);
                AlgebraElement(m)
            }
            Group::Su2 => {
                let (x1, x2, x3) = (c[0], c[1], c[2]);
                AlgebraElement(Matrix {
                    rank: 2,
                    m: [
                        Complex64::new(0.0, -0.5 * x3),
                        Complex64::new(-0.5 * x2, -0.5 * x1),
                        Complex64::new(0.5 * x2, -0.5 * x1),
                        Complex64::new(0.0, 0.5 * x3),
                    ],
                })
            }
        }
    }

    /// Coordinates in the group's basis; inverse of [`Self::from_coords`].
    pub fn coords(&self) -> [f64; 3] {
        let m = &self.0.m;
        if self.0.rank == 1 {
            [m[0].im, 0.0, 0.0]
        } else {
            [
                -(m[1].im + m[2].im),
                m[2].re - m[1].re,
                m[3].im - m[0].im,
            ]
        }
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.rank()
    }

    pub fn group(&self) -> Group {
        Group::from_rank(self.rank()).expect("rank is 1 or 2")
    }

    pub fn scale(&self, s: f64) -> Self {
        AlgebraElement(self.0.scale(s))
    }

    /// Norm induced by [`inner`].
    pub fn norm(&self) -> f64 {
        inner(self, self).max(0.0).sqrt()
    }

    pub fn norm_sqr(&self) -> f64 {
        inner(self, self)
    }

    pub fn is_zero(&self) -> bool {
        self.0.m.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }
}

impl Add for AlgebraElement {
    type Output = AlgebraElement;
    fn add(self, o: Self) -> Self {
        AlgebraElement(self.0 + o.0)
    }
}

impl Sub for AlgebraElement {
    type Output = AlgebraElement;
    fn sub(self, o: Self) -> Self {
        AlgebraElement(self.0 - o.0)
    }
}

impl Neg for AlgebraElement {
    type Output = AlgebraElement;
    fn neg(self) -> Self {
        AlgebraElement(self.0.scale(-1.0))
    }
}

impl AddAssign for AlgebraElement {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for AlgebraElement {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl Mul<f64> for AlgebraElement {
    type Output = AlgebraElement;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

impl GroupElement {
    pub fn identity(group: Group) -> Self {
        GroupElement(Matrix::identity(group.rank()))
    }

    /// Wraps a matrix without re-unitarizing.
    pub fn from_matrix_unchecked(m: Matrix) -> Self {
        GroupElement(m)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn rank(&self) -> usize {
        self.0.rank()
    }

    pub fn inverse(&self) -> Self {
        GroupElement(self.0.dagger())
    }

    /// `‖U†U − I‖_F` plus, for `N = 2`, `|det U − 1|`.
    pub fn unitarity_defect(&self) -> f64 {
        let r = self.rank();
        let mut d = (self.0.dagger() * self.0 - Matrix::identity(r)).frobenius_norm();
        if r == 2 {
            d += (self.0.det() - ONE).norm();
        }
        d
    }

    pub fn is_identity(&self) -> bool {
        self.0 == Matrix::identity(self.rank())
    }

    /// Frobenius distance between two group elements.
    pub fn distance(&self, o: &GroupElement) -> f64 {
        (self.0 - o.0).frobenius_norm()
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    fn mul(self, o: Self) -> Self {
        GroupElement(self.0 * o.0)
    }
}

/// Lie bracket `XY − YX`.
pub fn bracket(x: &AlgebraElement, y: &AlgebraElement) -> AlgebraElement {
    assert_eq!(x.rank(), y.rank(), "bracket of algebra elements with different ranks");
    if x.rank() == 1 {
        return AlgebraElement::zero(Group::U1);
    }
    AlgebraElement(x.0 * y.0 - y.0 * x.0)
}

/// Ad-invariant inner product `−Re tr(XY)`.
pub fn inner(x: &AlgebraElement, y: &AlgebraElement) -> f64 {
    assert_eq!(x.rank(), y.rank(), "inner product of algebra elements with different ranks");
    let (a, b) = (&x.0.m, &y.0.m);
    if x.rank() == 1 {
        return -(a[0] * b[0]).re;
    }
    -(a[0] * b[0] + a[1] * b[2] + a[2] * b[1] + a[3] * b[3]).re
}

/// Matrix exponential by scaling and squaring of the truncated Taylor series.
pub fn exp(x: &AlgebraElement) -> GroupElement {
    let rank = x.rank();
    let norm = x.0.frobenius_norm();
    let mut squarings = 0u32;
    if norm > 1.0 {
        squarings = norm.log2().ceil() as u32;
    }
    let y = x.0.scale(0.5f64.powi(squarings as i32));
    // ‖y‖ ≤ 1: the degree-20 remainder is below 1/21! ≈ 2e-20.
    let id = Matrix::identity(rank);
    let mut acc = id;
    for k in (1..=20).rev() {
        acc = id + (y * acc).scale(1.0 / k as f64);
    }
    for _ in 0..squarings {
        acc = acc * acc;
    }
    GroupElement(acc)
}

/// Closed-form exponential: `cos(θ/2) I + 2 sin(θ/2) n·τ` for SU(2), `e^{iθ}`
/// for U(1). Used as an independent cross-check of [`exp`].
pub fn exp_closed_form(x: &AlgebraElement) -> GroupElement {
    let c = x.coords();
    match x.group() {
        Group::U1 => {
            let mut m = Matrix::zeros(1);
            m.m[0] = Complex64::new(c[0].cos(), c[0].sin());
            GroupElement(m)
        }
        Group::Su2 => {
            let theta = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
            let half = 0.5 * theta;
            // 2 sin(θ/2)/θ, with its Taylor limit at θ → 0.
            let k = if theta < 1e-8 {
                1.0 - theta * theta / 24.0
            } else {
                2.0 * half.sin() / theta
            };
            GroupElement(Matrix::identity(2).scale(half.cos()) + x.0.scale(k))
        }
    }
}

/// Principal logarithm.
pub fn log(u: &GroupElement) -> Result<AlgebraElement, LieError> {
    let m = &u.0.m;
    if u.rank() == 1 {
        let phi = m[0].im.atan2(m[0].re);
        if std::f64::consts::PI - phi.abs() < BRANCH_TOL {
            return Err(LieError::BranchCut {
                angle: phi,
                tol: BRANCH_TOL,
            });
        }
        return Ok(AlgebraElement::from_coords(Group::U1, &[phi]));
    }
    let cos_half = 0.5 * (m[0].re + m[3].re);
    let v = project_algebra(&u.0);
    let vc = v.coords();
    let sin_half = 0.5 * (vc[0] * vc[0] + vc[1] * vc[1] + vc[2] * vc[2]).sqrt();
    let half = sin_half.atan2(cos_half);
    if std::f64::consts::PI - half < BRANCH_TOL {
        return Err(LieError::BranchCut {
            angle: half,
            tol: BRANCH_TOL,
        });
    }
    let k = if sin_half < 1e-8 {
        1.0 + half * half / 6.0
    } else {
        half / sin_half
    };
    Ok(v.scale(k))
}

/// `U⁻¹ X U`.
pub fn adjoint(u: &GroupElement, x: &AlgebraElement) -> AlgebraElement {
    assert_eq!(u.rank(), x.rank(), "adjoint action with mismatched ranks");
    if u.rank() == 1 {
        return *x;
    }
    AlgebraElement(u.0.dagger() * x.0 * u.0)
}

/// Nearest unitary matrix via the polar factor, with the determinant phase
/// removed for `N = 2`.
pub fn project_group(m: &Matrix) -> Result<GroupElement, LieError> {
    let det_abs = m.det().norm();
    if !(det_abs > 1e-12) || !m.is_finite() {
        return Err(LieError::SingularPolar { det_abs });
    }
    if m.rank() == 1 {
        let mut z = Matrix::zeros(1);
        z.m[0] = m.m[0] / m.m[0].norm();
        return Ok(GroupElement(z));
    }
    // Newton iteration Z ← (Z + Z^{-†}) / 2 converges quadratically to the
    // unitary polar factor.
    let mut z = *m;
    for _ in 0..60 {
        let inv_dag = match z.inverse() {
            Some(inv) => inv.dagger(),
            None => return Err(LieError::SingularPolar { det_abs }),
        };
        let next = (z + inv_dag).scale(0.5);
        let change = (next - z).frobenius_norm();
        z = next;
        if change < 1e-15 {
            break;
        }
    }
    let d = z.det();
    let phase = Complex64::from_polar(1.0, -0.5 * d.arg());
    Ok(GroupElement(z.scale_complex(phase)))
}

/// Anti-Hermitian part, with the trace removed for `N = 2`.
pub fn project_algebra(m: &Matrix) -> AlgebraElement {
    let ah = (*m - m.dagger()).scale(0.5);
    if m.rank() == 1 {
        let mut z = Matrix::zeros(1);
        z.m[0] = Complex64::new(0.0, ah.m[0].im);
        return AlgebraElement(z);
    }
    let tr = ah.trace() * 0.5;
    let mut out = ah - Matrix::identity(2).scale_complex(tr);
    // Diagonal entries of an anti-Hermitian matrix are purely imaginary.
    out.m[0].re = 0.0;
    out.m[3].re = 0.0;
    AlgebraElement(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tau(a: usize) -> AlgebraElement {
        Group::Su2.generator(a)
    }

    fn close(x: &Matrix, y: &Matrix, tol: f64) -> bool {
        (*x - *y).frobenius_norm() <= tol
    }

    #[test]
    fn pauli_brackets_by_hand() {
        // τ1 = [[0, -i/2], [-i/2, 0]], τ2 = [[0, -1/2], [1/2, 0]]
        // τ1 τ2 = [[-i/4, 0], [0, i/4]], τ2 τ1 = [[i/4, 0], [0, -i/4]]
        let b = bracket(&tau(0), &tau(1));
        let expected = Matrix::from_entries(
            2,
            &[
                Complex64::new(0.0, -0.5),
                ZERO,
                ZERO,
                Complex64::new(0.0, 0.5),
            ],
        );
        assert!(close(b.matrix(), &expected, 1e-16));
        assert!(close(b.matrix(), tau(2).matrix(), 1e-16));
        assert!(bracket(&tau(0), &tau(0)).is_zero());
        let x = AlgebraElement::from_coords(Group::U1, &[0.7]);
        let y = AlgebraElement::from_coords(Group::U1, &[-1.3]);
        assert!(bracket(&x, &y).is_zero());
    }

    #[test]
    #[should_panic]
    fn bracket_rank_mismatch_panics() {
        let x = AlgebraElement::from_coords(Group::U1, &[0.7]);
        bracket(&x, &tau(0));
    }

    #[test]
    fn inner_of_generators() {
        assert!((inner(&tau(0), &tau(0)) - 0.5).abs() < 1e-16);
        assert_eq!(inner(&tau(0), &tau(1)), 0.0);
        assert_eq!(inner(&AlgebraElement::zero(Group::Su2), &tau(2)), 0.0);
        let x = AlgebraElement::from_coords(Group::U1, &[2.0]);
        assert_eq!(inner(&x, &x), 4.0);
    }

    #[test]
    fn coords_roundtrip() {
        let x = AlgebraElement::from_coords(Group::Su2, &[0.3, -1.1, 2.5]);
        assert_eq!(x.coords(), [0.3, -1.1, 2.5]);
        assert!((x.norm_sqr() - 0.5 * (0.09 + 1.21 + 6.25)).abs() < 1e-15);
    }

    #[test]
    fn exp_special_values() {
        assert!(exp(&AlgebraElement::zero(Group::Su2)).is_identity());
        let e = exp(&tau(2).scale(2.0 * std::f64::consts::PI));
        assert!(close(e.matrix(), &Matrix::identity(2).scale(-1.0), 1e-14));
        let x = AlgebraElement::from_coords(Group::Su2, &[0.4, 1.2, -0.7]);
        let p = exp(&x) * exp(&(-x));
        assert!(close(p.matrix(), &Matrix::identity(2), 1e-14));
    }

    #[test]
    fn log_special_values() {
        assert!(log(&GroupElement::identity(Group::Su2)).unwrap().norm() < 1e-16);
        let x = tau(0).scale(0.3);
        let l = log(&exp_closed_form(&x)).unwrap();
        assert!(close(l.matrix(), x.matrix(), 1e-12));
        let minus_i = GroupElement::from_matrix_unchecked(Matrix::identity(2).scale(-1.0));
        assert!(matches!(log(&minus_i), Err(LieError::BranchCut { .. })));
        let minus_one = GroupElement::from_matrix_unchecked(Matrix::identity(1).scale(-1.0));
        assert!(matches!(log(&minus_one), Err(LieError::BranchCut { .. })));
    }

    #[test]
    fn adjoint_cases() {
        let x = AlgebraElement::from_coords(Group::Su2, &[0.4, 1.2, -0.7]);
        let id = GroupElement::identity(Group::Su2);
        assert_eq!(adjoint(&id, &x), x);
        let u = exp(&AlgebraElement::from_coords(Group::Su2, &[1.0, -2.0, 0.5]));
        let t = adjoint(&u, &tau(0));
        assert!((inner(&t, &t) - 0.5).abs() < 1e-15);
        let a = AlgebraElement::from_coords(Group::U1, &[0.9]);
        let v = exp(&AlgebraElement::from_coords(Group::U1, &[2.0]));
        assert_eq!(adjoint(&v, &a), a);
    }

    #[test]
    fn projections() {
        let mut m = Matrix::identity(2);
        m.set(0, 1, Complex64::new(1e-8, -3e-9));
        m.set(1, 1, Complex64::new(1.0 + 2e-8, 1e-9));
        let g = project_group(&m).unwrap();
        assert!(g.unitarity_defect() < UNITARITY_TOL);
        let x = AlgebraElement::from_coords(Group::Su2, &[0.4, 1.2, -0.7]);
        assert_eq!(project_algebra(x.matrix()), x);
        // Hermitian input has no anti-Hermitian part at all.
        let h = Matrix::from_entries(
            2,
            &[
                Complex64::new(2.0, 0.0),
                Complex64::new(0.5, 0.25),
                Complex64::new(0.5, -0.25),
                Complex64::new(-1.0, 0.0),
            ],
        );
        assert!(project_algebra(&h).is_zero());
        assert!(matches!(
            project_group(&Matrix::zeros(2)),
            Err(LieError::SingularPolar { .. })
        ));
    }

    fn su2_coords(bound: f64) -> impl Strategy<Value = [f64; 3]> {
        prop::array::uniform3(-bound..bound)
    }

    proptest! {
        #[test]
        fn bracket_antisymmetric_and_jacobi(a in su2_coords(3.0), b in su2_coords(3.0), c in su2_coords(3.0)) {
            let (x, y, z) = (
                AlgebraElement::from_coords(Group::Su2, &a),
                AlgebraElement::from_coords(Group::Su2, &b),
                AlgebraElement::from_coords(Group::Su2, &c),
            );
            prop_assert_eq!(bracket(&x, &y), -bracket(&y, &x));
            let j = bracket(&x, &bracket(&y, &z)) + bracket(&y, &bracket(&z, &x)) + bracket(&z, &bracket(&x, &y));
            prop_assert!(j.norm() <= 1e-13 * x.norm() * y.norm() * z.norm() + 1e-300);
        }

        #[test]
        fn exp_matches_closed_form(a in su2_coords(10.0)) {
            let mut x = AlgebraElement::from_coords(Group::Su2, &a);
            if x.norm() > 10.0 {
                x = x.scale(10.0 / x.norm());
            }
            let e = exp(&x);
            prop_assert!(close(e.matrix(), exp_closed_form(&x).matrix(), 1e-14), "err {:e}", (*e.matrix() - *exp_closed_form(&x).matrix()).frobenius_norm());
            prop_assert!(e.unitarity_defect() < UNITARITY_TOL);
        }

        #[test]
        fn exp_log_roundtrip(a in su2_coords(3.0)) {
            let mut x = AlgebraElement::from_coords(Group::Su2, &a);
            if x.norm() >= 3.0 {
                x = x.scale(2.99 / x.norm());
            }
            let l = log(&exp(&x)).unwrap();
            prop_assert!(close(l.matrix(), x.matrix(), 1e-11));
            let u = exp(&x);
            prop_assert!(close(exp(&l).matrix(), u.matrix(), 1e-12));
        }

        #[test]
        fn adjoint_preserves_inner(a in su2_coords(3.0), b in su2_coords(3.0), g in su2_coords(6.0)) {
            let (x, y) = (AlgebraElement::from_coords(Group::Su2, &a), AlgebraElement::from_coords(Group::Su2, &b));
            let u = exp(&AlgebraElement::from_coords(Group::Su2, &g));
            let lhs = inner(&adjoint(&u, &x), &adjoint(&u, &y));
            prop_assert!((lhs - inner(&x, &y)).abs() <= 1e-13 * x.norm() * y.norm() + 1e-300);
        }

        #[test]
        fn exp_derivative_majorant(a in su2_coords(1.0), b in su2_coords(1.0)) {
            // Path u(t) = u0 + t·v with |u| ≤ 1 on [0, dt]: the difference
            // quotient of e^{u(t)} is bounded by e^{|u|}·|du/dt| + O(dt).
            let mut u0 = AlgebraElement::from_coords(Group::Su2, &a);
            if u0.norm() > 0.9 { u0 = u0.scale(0.9 / u0.norm()); }
            let v = AlgebraElement::from_coords(Group::Su2, &b);
            let dt = 1e-6;
            let d = (*exp(&(u0 + v.scale(dt))).matrix() - *exp(&u0).matrix()).scale(1.0 / dt);
            // Frobenius norm of an algebra element is sqrt(2)·‖·‖ for SU(2).
            let lhs = d.frobenius_norm() / 2f64.sqrt();
            let rhs = (u0.norm() * 2f64.sqrt()).exp() * v.norm();
            prop_assert!(lhs <= rhs + 1e-5);
        }
    }
}
