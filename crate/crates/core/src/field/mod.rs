//! Periodic lattice geometry and algebra-valued fields on it.
//!
//! Fields are plain value snapshots. A [`Connection`] stores one algebra
//! element per site and direction, a [`TwoForm`] one per site and ordered
//! pair `μ < ν`, a [`Section`] one per site. Sites are numbered with axis 1
//! fastest, and the component index runs fastest within a site, which is
//! also the order of the snapshot format.

mod norms;
mod ops;
mod patch;
pub mod snapshot;

pub use norms::*;
pub use ops::*;
pub use patch::{normal_component, restrict, BallPatch, Face, SiteClass};
pub(crate) use patch::displacement;

use thiserror::Error;

use crate::lie::{AlgebraElement, Group, GroupElement};

pub const MAX_DIM: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("lattice dimension {0} unsupported (expected 2, 3 or 4)")]
    Dimension(usize),
    #[error("extent {extent} on axis {axis} must be even and at least 4")]
    Extent { axis: usize, extent: usize },
    #[error("lattice spacing must be positive and finite, got {0}")]
    Spacing(f64),
    #[error("patch radius {radius} exceeds the no-self-wrap bound {bound}")]
    PatchTooLarge { radius: f64, bound: f64 },
    #[error("patch has an empty interior (radius {0})")]
    EmptyInterior(f64),
    #[error("lp exponent must be >= 1, got {0}")]
    Exponent(f64),
}

/// A flat periodic lattice `Z_{L_1} × … × Z_{L_n}` with spacing `h`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Lattice {
    dim: usize,
    extents: [usize; MAX_DIM],
    strides: [usize; MAX_DIM],
    spacing: f64,
}

impl Lattice {
    pub fn new(extents: &[usize], spacing: f64) -> Result<Self, FieldError> {
        let dim = extents.len();
        if !(2..=MAX_DIM).contains(&dim) {
            return Err(FieldError::Dimension(dim));
        }
        for (axis, &e) in extents.iter().enumerate() {
            if e < 4 || e % 2 != 0 {
                return Err(FieldError::Extent { axis, extent: e });
            }
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(FieldError::Spacing(spacing));
        }
        let mut ext = [1; MAX_DIM];
        let mut strides = [0; MAX_DIM];
        let mut s = 1;
        for mu in 0..dim {
            ext[mu] = extents[mu];
            strides[mu] = s;
            s *= extents[mu];
        }
        Ok(Lattice {
            dim,
            extents: ext,
            strides,
            spacing,
        })
    }

    /// Cubic lattice `L^n` with physical side length `L·h`.
    pub fn cubic(dim: usize, extent: usize, spacing: f64) -> Result<Self, FieldError> {
        Self::new(&vec![extent; dim], spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extents(&self) -> &[usize] {
        &self.extents[..self.dim]
    }

    pub fn extent(&self, mu: usize) -> usize {
        self.extents[mu]
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn sites(&self) -> usize {
        self.extents().iter().product()
    }

    /// Volume element `h^n`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.sites() as f64 * self.cell_volume()
    }

    /// Number of ordered pairs `μ < ν`.
    pub fn n_pairs(&self) -> usize {
        self.dim * (self.dim - 1) / 2
    }

    /// Ordered pairs `(μ, ν)` with `μ < ν`, lexicographic.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_pairs());
        for mu in 0..self.dim {
            for nu in mu + 1..self.dim {
                out.push((mu, nu));
            }
        }
        out
    }

    pub fn n_triples(&self) -> usize {
        self.dim * (self.dim - 1) * (self.dim.saturating_sub(2)) / 6
    }

    /// Ordered triples `(λ, μ, ν)` with `λ < μ < ν`, lexicographic.
    pub fn triples(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for l in 0..self.dim {
            for m in l + 1..self.dim {
                for n in m + 1..self.dim {
                    out.push((l, m, n));
                }
            }
        }
        out
    }

    /// Index of `(μ, ν)` in [`Self::pairs`]; requires `μ < ν`.
    pub fn pair_index(&self, mu: usize, nu: usize) -> usize {
        debug_assert!(mu < nu && nu < self.dim);
        // Pairs starting with k < μ contribute (n-1-k) entries each.
        mu * (2 * self.dim - mu - 1) / 2 + (nu - mu - 1)
    }

    pub fn coord(&self, site: usize, mu: usize) -> usize {
        (site / self.strides[mu]) % self.extents[mu]
    }

    pub fn coords(&self, site: usize) -> [usize; MAX_DIM] {
        let mut c = [0; MAX_DIM];
        for mu in 0..self.dim {
            c[mu] = self.coord(site, mu);
        }
        c
    }

    pub fn site(&self, coords: &[usize]) -> usize {
        (0..self.dim)
            .map(|mu| (coords[mu] % self.extents[mu]) * self.strides[mu])
            .sum()
    }

    /// `x + e_μ` with periodic wrap.
    #[inline]
    pub fn fwd(&self, site: usize, mu: usize) -> usize {
        if self.coord(site, mu) + 1 == self.extents[mu] {
            site + self.strides[mu] - self.extents[mu] * self.strides[mu]
        } else {
            site + self.strides[mu]
        }
    }

    /// `x − e_μ` with periodic wrap.
    #[inline]
    pub fn bwd(&self, site: usize, mu: usize) -> usize {
        if self.coord(site, mu) == 0 {
            site + (self.extents[mu] - 1) * self.strides[mu]
        } else {
            site - self.strides[mu]
        }
    }

    /// Site shifted by an integer offset vector.
    pub fn offset(&self, site: usize, delta: &[isize]) -> usize {
        let mut s = 0;
        for mu in 0..self.dim {
            let l = self.extents[mu] as isize;
            let c = (self.coord(site, mu) as isize + delta[mu]).rem_euclid(l);
            s += c as usize * self.strides[mu];
        }
        s
    }

    /// Physical position `h·x` of a site.
    pub fn position(&self, site: usize) -> [f64; MAX_DIM] {
        let mut p = [0.0; MAX_DIM];
        for mu in 0..self.dim {
            p[mu] = self.coord(site, mu) as f64 * self.spacing;
        }
        p
    }

    /// Physical side lengths `L_μ·h`.
    pub fn side_length(&self, mu: usize) -> f64 {
        self.extents[mu] as f64 * self.spacing
    }

    /// Same physical torus at twice the resolution.
    pub fn refined(&self) -> Self {
        let ext: Vec<usize> = self.extents().iter().map(|e| 2 * e).collect();
        Lattice::new(&ext, self.spacing / 2.0).expect("refinement preserves validity")
    }

    /// Explicit-scheme stability bound `h² / (2n)`.
    pub fn cfl_bound(&self) -> f64 {
        self.spacing * self.spacing / (2.0 * self.dim as f64)
    }
}

/// Common access to algebra-valued lattice fields.
pub trait AlgebraField: Sized {
    fn lattice(&self) -> &Lattice;
    fn group(&self) -> Group;
    /// Values per site (1 for sections, `n` for 1-forms, `n(n-1)/2` for 2-forms).
    fn components(&self) -> usize;
    fn values(&self) -> &[AlgebraElement];
    fn values_mut(&mut self) -> &mut [AlgebraElement];
    fn from_values(lattice: Lattice, group: Group, values: Vec<AlgebraElement>) -> Self;

    fn zeros_like(&self) -> Self {
        let n = self.values().len();
        Self::from_values(*self.lattice(), self.group(), vec![AlgebraElement::zero(self.group()); n])
    }

    fn site_values(&self, site: usize) -> &[AlgebraElement] {
        let c = self.components();
        &self.values()[site * c..(site + 1) * c]
    }

    /// Pointwise norm `(Σ_components |v|²)^{1/2}` at a site.
    fn site_norm(&self, site: usize) -> f64 {
        self.site_values(site).iter().map(|v| v.norm_sqr()).sum::<f64>().max(0.0).sqrt()
    }

    fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    fn scale(&self, s: f64) -> Self {
        self.map(|a| a.scale(s))
    }

    /// `self + s·other`.
    fn axpy(&self, s: f64, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b.scale(s))
    }

    fn map(&self, f: impl Fn(AlgebraElement) -> AlgebraElement) -> Self {
        let values = self.values().iter().map(|&v| f(v)).collect();
        Self::from_values(*self.lattice(), self.group(), values)
    }

    fn zip_map(&self, other: &Self, f: impl Fn(AlgebraElement, AlgebraElement) -> AlgebraElement) -> Self {
        assert_eq!(self.lattice(), other.lattice(), "fields live on different lattices");
        let values = self
            .values()
            .iter()
            .zip(other.values())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Self::from_values(*self.lattice(), self.group(), values)
    }

    fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.matrix().is_finite())
    }
}

macro_rules! algebra_field {
    ($(#[$meta:meta])* $name:ident, $components:expr) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            lattice: Lattice,
            group: Group,
            values: Vec<AlgebraElement>,
        }

        impl $name {
            pub fn zeros(lattice: Lattice, group: Group) -> Self {
                let n = lattice.sites() * Self::components_for(&lattice);
                $name {
                    lattice,
                    group,
                    values: vec![AlgebraElement::zero(group); n],
                }
            }

            pub fn components_for(lattice: &Lattice) -> usize {
                let f: fn(&Lattice) -> usize = $components;
                f(lattice)
            }
        }

        impl AlgebraField for $name {
            fn lattice(&self) -> &Lattice {
                &self.lattice
            }
            fn group(&self) -> Group {
                self.group
            }
            fn components(&self) -> usize {
                Self::components_for(&self.lattice)
            }
            fn values(&self) -> &[AlgebraElement] {
                &self.values
            }
            fn values_mut(&mut self) -> &mut [AlgebraElement] {
                &mut self.values
            }
            fn from_values(lattice: Lattice, group: Group, values: Vec<AlgebraElement>) -> Self {
                assert_eq!(values.len(), lattice.sites() * Self::components_for(&lattice));
                $name { lattice, group, values }
            }
        }
    };
}

algebra_field!(
    /// Algebra-valued 0-form, one value per site.
    Section,
    |_| 1
);
algebra_field!(
    /// Algebra-valued 1-form: `A_μ(x)` lives on the edge from `x` to `x + e_μ`.
    Connection,
    |l| l.dim()
);
algebra_field!(
    /// Algebra-valued 2-form: `F_{μν}(x)` for `μ < ν` lives on the plaquette
    /// spanned by `e_μ, e_ν` at `x`. `F_{νμ} = −F_{μν}` on access.
    TwoForm,
    |l| l.n_pairs()
);

algebra_field!(
    /// Algebra-valued 3-form on ordered triples `λ < μ < ν` (empty for `n = 2`).
    ThreeForm,
    |l| l.n_triples()
);

/// 1-forms that are not connections (velocities, perturbations) share the type.
pub type OneForm = Connection;

impl Section {
    pub fn from_fn(lattice: Lattice, group: Group, f: impl Fn(usize) -> AlgebraElement) -> Self {
        let values = (0..lattice.sites()).map(f).collect();
        Section { lattice, group, values }
    }

    pub fn get(&self, site: usize) -> AlgebraElement {
        self.values[site]
    }

    pub fn set(&mut self, site: usize, v: AlgebraElement) {
        self.values[site] = v;
    }

    /// Mean value over all sites.
    pub fn mean(&self) -> AlgebraElement {
        mean_of(self.group, self.values.iter())
    }
}

pub(crate) fn mean_of<'a>(group: Group, it: impl Iterator<Item = &'a AlgebraElement>) -> AlgebraElement {
    let mut acc = AlgebraElement::zero(group);
    let mut n = 0usize;
    for v in it {
        acc += *v;
        n += 1;
    }
    if n == 0 {
        acc
    } else {
        acc.scale(1.0 / n as f64)
    }
}

impl Connection {
    pub fn from_fn(lattice: Lattice, group: Group, f: impl Fn(usize, usize) -> AlgebraElement) -> Self {
        let dim = lattice.dim();
        let values = (0..lattice.sites())
            .flat_map(|x| (0..dim).map(move |mu| (x, mu)))
            .map(|(x, mu)| f(x, mu))
            .collect();
        Connection { lattice, group, values }
    }

    #[inline]
    pub fn get(&self, site: usize, mu: usize) -> AlgebraElement {
        self.values[site * self.lattice.dim() + mu]
    }

    #[inline]
    pub fn set(&mut self, site: usize, mu: usize, v: AlgebraElement) {
        let d = self.lattice.dim();
        self.values[site * d + mu] = v;
    }
}

impl TwoForm {
    pub fn from_fn(lattice: Lattice, group: Group, f: impl Fn(usize, usize, usize) -> AlgebraElement) -> Self {
        let pairs = lattice.pairs();
        let values = (0..lattice.sites())
            .flat_map(|x| pairs.iter().map(move |&(mu, nu)| (x, mu, nu)))
            .map(|(x, mu, nu)| f(x, mu, nu))
            .collect();
        TwoForm { lattice, group, values }
    }

    /// `F_{μν}(x)` for any `μ ≠ ν`, using antisymmetry; zero on the diagonal.
    #[inline]
    pub fn get(&self, site: usize, mu: usize, nu: usize) -> AlgebraElement {
        use std::cmp::Ordering;
        match mu.cmp(&nu) {
            Ordering::Less => self.values[site * self.lattice.n_pairs() + self.lattice.pair_index(mu, nu)],
            Ordering::Greater => -self.values[site * self.lattice.n_pairs() + self.lattice.pair_index(nu, mu)],
            Ordering::Equal => AlgebraElement::zero(self.group),
        }
    }

    /// Stores `F_{μν}(x)`; `μ > ν` stores the negated value at `(ν, μ)`.
    pub fn set(&mut self, site: usize, mu: usize, nu: usize, v: AlgebraElement) {
        assert_ne!(mu, nu);
        let np = self.lattice.n_pairs();
        if mu < nu {
            let p = self.lattice.pair_index(mu, nu);
            self.values[site * np + p] = v;
        } else {
            let p = self.lattice.pair_index(nu, mu);
            self.values[site * np + p] = -v;
        }
    }
}

/// Group-valued field, one element per site.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeTransform {
    lattice: Lattice,
    group: Group,
    values: Vec<GroupElement>,
}

impl GaugeTransform {
    pub fn identity(lattice: Lattice, group: Group) -> Self {
        GaugeTransform {
            lattice,
            group,
            values: vec![GroupElement::identity(group); lattice.sites()],
        }
    }

    pub fn from_values(lattice: Lattice, group: Group, values: Vec<GroupElement>) -> Self {
        assert_eq!(values.len(), lattice.sites());
        GaugeTransform { lattice, group, values }
    }

    pub fn from_fn(lattice: Lattice, group: Group, f: impl Fn(usize) -> GroupElement) -> Self {
        let values = (0..lattice.sites()).map(f).collect();
        GaugeTransform { lattice, group, values }
    }

    /// `exp(u(x))` at every site.
    pub fn exp_of(u: &Section) -> Self {
        Self::from_fn(*u.lattice(), u.group(), |x| crate::lie::exp(&u.get(x)))
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn group(&self) -> Group {
        self.group
    }

    pub fn values(&self) -> &[GroupElement] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [GroupElement] {
        &mut self.values
    }

    pub fn get(&self, site: usize) -> GroupElement {
        self.values[site]
    }

    pub fn set(&mut self, site: usize, g: GroupElement) {
        self.values[site] = g;
    }

    /// Pointwise inverse.
    pub fn inverse(&self) -> Self {
        GaugeTransform {
            lattice: self.lattice,
            group: self.group,
            values: self.values.iter().map(|g| g.inverse()).collect(),
        }
    }

    /// Pointwise product `self(x)·other(x)`.
    pub fn compose(&self, other: &GaugeTransform) -> Self {
        assert_eq!(self.lattice, other.lattice);
        GaugeTransform {
            lattice: self.lattice,
            group: self.group,
            values: self.values.iter().zip(&other.values).map(|(a, b)| *a * *b).collect(),
        }
    }

    pub fn max_unitarity_defect(&self) -> f64 {
        self.values.iter().map(|g| g.unitarity_defect()).fold(0.0, f64::max)
    }
}
