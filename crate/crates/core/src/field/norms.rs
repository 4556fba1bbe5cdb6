//! Discrete inner products and norms. All reductions are serial sums in
//! site order, so results are bit-reproducible.

use super::{AlgebraField, BallPatch, FieldError};
use crate::lie::inner;

/// `⟨a, b⟩ = h^n Σ_sites Σ_components inner(a, b)`.
pub fn inner_product<F: AlgebraField>(a: &F, b: &F) -> f64 {
    assert_eq!(a.lattice(), b.lattice());
    let s: f64 = a.values().iter().zip(b.values()).map(|(x, y)| inner(x, y)).sum();
    s * a.lattice().cell_volume()
}

pub fn l2_sq<F: AlgebraField>(f: &F) -> f64 {
    let s: f64 = f.values().iter().map(|v| v.norm_sqr()).sum();
    s * f.lattice().cell_volume()
}

pub fn l2<F: AlgebraField>(f: &F) -> f64 {
    l2_sq(f).max(0.0).sqrt()
}

/// `(h^n Σ_sites |v(x)|^p)^{1/p}` with `|v(x)|` the pointwise norm.
pub fn lp<F: AlgebraField>(f: &F, p: f64) -> Result<f64, FieldError> {
    if !(p >= 1.0) {
        return Err(FieldError::Exponent(p));
    }
    let sites = f.lattice().sites();
    let s: f64 = (0..sites).map(|x| f.site_norm(x).powf(p)).sum();
    Ok((s * f.lattice().cell_volume()).powf(1.0 / p))
}

/// Largest pointwise norm.
pub fn max_norm<F: AlgebraField>(f: &F) -> f64 {
    (0..f.lattice().sites()).map(|x| f.site_norm(x)).fold(0.0, f64::max)
}

/// `‖∇f‖²`: every component differenced forward along every axis.
pub fn grad_sq<F: AlgebraField>(f: &F) -> f64 {
    let lat = f.lattice();
    let c = f.components();
    let inv_h = 1.0 / lat.spacing();
    let vals = f.values();
    let mut s = 0.0;
    for x in 0..lat.sites() {
        for mu in 0..lat.dim() {
            let y = lat.fwd(x, mu);
            for k in 0..c {
                s += ((vals[y * c + k] - vals[x * c + k]).scale(inv_h)).norm_sqr();
            }
        }
    }
    s * lat.cell_volume()
}

/// `W^{1,2}` norm: `(‖f‖² + ‖∇f‖²)^{1/2}`.
pub fn w12<F: AlgebraField>(f: &F) -> f64 {
    (l2_sq(f) + grad_sq(f)).max(0.0).sqrt()
}

/// `h^n Σ_{interior} |v(x)|^p`, the p-th power of [`local_lp`].
pub fn local_lp_pow<F: AlgebraField>(f: &F, patch: &BallPatch, p: f64) -> Result<f64, FieldError> {
    if !(p >= 1.0) {
        return Err(FieldError::Exponent(p));
    }
    let interior = patch.interior();
    if interior.is_empty() {
        return Err(FieldError::EmptyInterior(patch.radius()));
    }
    let s: f64 = interior.iter().map(|&x| f.site_norm(x).powf(p)).sum();
    Ok(s * f.lattice().cell_volume())
}

/// `L^p` norm restricted to the interior sites of a patch.
pub fn local_lp<F: AlgebraField>(f: &F, patch: &BallPatch, p: f64) -> Result<f64, FieldError> {
    Ok(local_lp_pow(f, patch, p)?.powf(1.0 / p))
}
