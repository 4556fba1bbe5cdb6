//! Ball subdomains of the periodic lattice.

use super::{AlgebraField, FieldError, Lattice, OneForm, MAX_DIM};
use crate::lie::AlgebraElement;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SiteClass {
    Interior,
    Boundary,
    Exterior,
}

/// A boundary face: the edge leaving `site` along `sign · e_axis` exits the
/// patch, so the outward normal there is `sign · e_axis`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Face {
    pub site: usize,
    pub axis: usize,
    pub sign: i8,
}

/// Lattice metric ball `{x : |x − x₀| ≤ r}` (periodic Euclidean distance).
///
/// Boundary sites are ball sites with a face neighbour outside the ball;
/// boundary sites with no interior neighbour are dropped, so every boundary
/// site touches the interior.
#[derive(Clone, Debug, PartialEq)]
pub struct BallPatch {
    lattice: Lattice,
    center: usize,
    radius: f64,
    class: Vec<SiteClass>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    faces: Vec<Face>,
}

/// Signed minimal-image displacement of `site` from `center`, in sites.
pub(crate) fn displacement(lat: &Lattice, center: usize, site: usize) -> [isize; MAX_DIM] {
    let mut d = [0isize; MAX_DIM];
    for mu in 0..lat.dim() {
        let l = lat.extent(mu) as isize;
        let mut k = lat.coord(site, mu) as isize - lat.coord(center, mu) as isize;
        k = k.rem_euclid(l);
        if k > l / 2 {
            k -= l;
        }
        d[mu] = k;
    }
    d
}

impl BallPatch {
    pub fn new(lattice: Lattice, center: usize, radius: f64) -> Result<Self, FieldError> {
        let bound = Self::radius_bound(&lattice);
        if !(radius >= 0.0 && radius < bound) {
            return Err(FieldError::PatchTooLarge { radius, bound });
        }
        let h = lattice.spacing();
        let r2 = (radius / h) * (radius / h) * (1.0 + 1e-12);
        let in_ball: Vec<bool> = (0..lattice.sites())
            .map(|x| {
                let d = displacement(&lattice, center, x);
                let s: f64 = d[..lattice.dim()].iter().map(|&k| (k * k) as f64).sum();
                s <= r2
            })
            .collect();
        let neighbours = |x: usize| {
            (0..lattice.dim()).flat_map(move |mu| [lattice.fwd(x, mu), lattice.bwd(x, mu)])
        };
        let mut class: Vec<SiteClass> = (0..lattice.sites())
            .map(|x| {
                if !in_ball[x] {
                    SiteClass::Exterior
                } else if neighbours(x).all(|y| in_ball[y]) {
                    SiteClass::Interior
                } else {
                    SiteClass::Boundary
                }
            })
            .collect();
        for x in 0..lattice.sites() {
            if class[x] == SiteClass::Boundary && !neighbours(x).any(|y| class[y] == SiteClass::Interior) {
                class[x] = SiteClass::Exterior;
            }
        }
        let pick = |c: SiteClass| (0..lattice.sites()).filter(|&x| class[x] == c).collect::<Vec<_>>();
        let interior = pick(SiteClass::Interior);
        let boundary = pick(SiteClass::Boundary);
        let mut faces = Vec::new();
        for &b in &boundary {
            for axis in 0..lattice.dim() {
                if class[lattice.fwd(b, axis)] == SiteClass::Exterior {
                    faces.push(Face { site: b, axis, sign: 1 });
                }
                if class[lattice.bwd(b, axis)] == SiteClass::Exterior {
                    faces.push(Face { site: b, axis, sign: -1 });
                }
            }
        }
        Ok(BallPatch {
            lattice,
            center,
            radius,
            class,
            interior,
            boundary,
            faces,
        })
    }

    /// Radii must stay strictly below half the shortest side so the ball
    /// never wraps onto itself.
    pub fn radius_bound(lattice: &Lattice) -> f64 {
        (0..lattice.dim()).map(|mu| lattice.side_length(mu)).fold(f64::INFINITY, f64::min) / 2.0
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn center(&self) -> usize {
        self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn class(&self, site: usize) -> SiteClass {
        self.class[site]
    }

    pub fn contains(&self, site: usize) -> bool {
        self.class[site] != SiteClass::Exterior
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    pub fn boundary(&self) -> &[usize] {
        &self.boundary
    }

    /// Interior and boundary sites in increasing order.
    pub fn sites(&self) -> Vec<usize> {
        (0..self.lattice.sites()).filter(|&x| self.contains(x)).collect()
    }

    pub fn faces(&self) -> &[Face] {
        &self.faces
    }

    /// Edges `(x, μ)` with both endpoints in the patch.
    pub fn internal_edges(&self) -> Vec<(usize, usize)> {
        let lat = &self.lattice;
        let mut e = Vec::new();
        for x in 0..lat.sites() {
            if !self.contains(x) {
                continue;
            }
            for mu in 0..lat.dim() {
                if self.contains(lat.fwd(x, mu)) {
                    e.push((x, mu));
                }
            }
        }
        e
    }

    /// Interior sites as displacements from the center. Classification is
    /// translation invariant, so these describe the same ball at any center.
    pub fn interior_offsets(&self) -> Vec<[isize; MAX_DIM]> {
        self.interior.iter().map(|&x| displacement(&self.lattice, self.center, x)).collect()
    }

    /// Sites shared with another patch.
    pub fn overlap(&self, other: &BallPatch) -> Vec<usize> {
        (0..self.lattice.sites()).filter(|&x| self.contains(x) && other.contains(x)).collect()
    }
}

/// Copy of `f` with every value outside the patch set to zero.
pub fn restrict<F: AlgebraField>(f: &F, patch: &BallPatch) -> F {
    let c = f.components();
    let mut out = f.zeros_like();
    for x in patch.sites() {
        out.values_mut()[x * c..(x + 1) * c].copy_from_slice(f.site_values(x));
    }
    out
}

/// `ω · ν` on each boundary face, in the order of [`BallPatch::faces`].
/// A `+e_μ` face reads `ω_μ(b)`; a `−e_μ` face reads `−ω_μ(b − e_μ)`.
pub fn normal_component(w: &OneForm, patch: &BallPatch) -> Vec<AlgebraElement> {
    let lat = patch.lattice();
    patch
        .faces()
        .iter()
        .map(|f| {
            if f.sign > 0 {
                w.get(f.site, f.axis)
            } else {
                -w.get(lat.bwd(f.site, f.axis), f.axis)
            }
        })
        .collect()
}
