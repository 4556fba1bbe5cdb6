//! `−d*d u = f` on the torus (FFT) or on a ball patch (conjugate gradient).

use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::{Bc, Domain, GaugeError};
use crate::field::{max_norm, AlgebraField, BallPatch, Lattice, Section};
use crate::lie::{AlgebraElement, Group};

/// Relative residual target of the patch solver.
const CG_TOL: f64 = 1e-13;

pub fn poisson_solve(f: &Section, domain: &Domain, bc: Bc) -> Result<Section, GaugeError> {
    match (domain, bc) {
        (Domain::Torus, Bc::DirichletZero) => Err(GaugeError::Config(
            "dirichlet_zero needs a patch domain".into(),
        )),
        (Domain::Torus, Bc::NeumannMeanZero) => {
            check_mean_zero(f, &(0..f.lattice().sites()).collect::<Vec<_>>())?;
            Ok(torus_solve(f))
        }
        (Domain::Patch(p), bc) => {
            let op = PatchLaplacian::new(p, bc);
            if bc == Bc::NeumannMeanZero {
                check_mean_zero(f, &op.sites)?;
            }
            op.solve(f)
        }
    }
}

fn check_mean_zero(f: &Section, sites: &[usize]) -> Result<(), GaugeError> {
    let mut sum = AlgebraElement::zero(f.group());
    for &x in sites {
        sum += f.get(x);
    }
    let mean = sum.scale(1.0 / sites.len() as f64).norm();
    if mean > 1e-12 * (1.0 + max_norm(f)) {
        return Err(GaugeError::Solvability { mean });
    }
    Ok(())
}

/// Real coordinate planes of a section, one `Vec` per algebra direction.
fn planes(f: &Section, sites: &[usize]) -> Vec<Vec<f64>> {
    (0..f.group().algebra_dim())
        .map(|c| sites.iter().map(|&x| f.get(x).coords()[c]).collect())
        .collect()
}

fn assemble(lat: Lattice, group: Group, sites: &[usize], planes: &[Vec<f64>]) -> Section {
    let mut u = Section::zeros(lat, group);
    let mut c = vec![0.0; group.algebra_dim()];
    for (i, &x) in sites.iter().enumerate() {
        for (k, p) in planes.iter().enumerate() {
            c[k] = p[i];
        }
        u.set(x, AlgebraElement::from_coords(group, &c));
    }
    u
}

/// In-place n-dimensional DFT, one axis at a time.
fn fft_nd(data: &mut [Complex64], lat: &Lattice, planner: &mut FftPlanner<f64>, inverse: bool) {
    let mut coords_stride = 1;
    for mu in 0..lat.dim() {
        let len = lat.extent(mu);
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let block = coords_stride * len;
        for start in (0..data.len()).step_by(block) {
            for off in 0..coords_stride {
                let base = start + off;
                for (i, z) in line.iter_mut().enumerate() {
                    *z = data[base + i * coords_stride];
                }
                fft.process(&mut line);
                for (i, z) in line.iter().enumerate() {
                    data[base + i * coords_stride] = *z;
                }
            }
        }
        coords_stride *= len;
    }
}

/// Discrete symbol `λ_k = Σ_μ 4/h² sin²(π k_μ / L_μ)` of `d*d`.
pub fn laplacian_symbol(lat: &Lattice, site: usize) -> f64 {
    let h = lat.spacing();
    (0..lat.dim())
        .map(|mu| {
            let s = (PI * lat.coord(site, mu) as f64 / lat.extent(mu) as f64).sin();
            4.0 / (h * h) * s * s
        })
        .sum()
}

fn torus_solve(f: &Section) -> Section {
    let lat = *f.lattice();
    let n = lat.sites();
    let sites: Vec<usize> = (0..n).collect();
    let mut planner = FftPlanner::new();
    let mut out = Vec::new();
    for plane in planes(f, &sites) {
        let mut data: Vec<Complex64> = plane.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft_nd(&mut data, &lat, &mut planner, false);
        for (k, z) in data.iter_mut().enumerate() {
            *z = if k == 0 { Complex64::new(0.0, 0.0) } else { -*z / laplacian_symbol(&lat, k) };
        }
        fft_nd(&mut data, &lat, &mut planner, true);
        out.push(data.iter().map(|z| z.re / n as f64).collect::<Vec<_>>());
    }
    assemble(lat, f.group(), &sites, &out)
}

/// `d*d` restricted to a patch: on interior sites with zero boundary values
/// (Dirichlet), or as the graph Laplacian of the patch-internal edges
/// (Neumann, natural zero-flux condition).
pub(crate) struct PatchLaplacian {
    pub(crate) sites: Vec<usize>,
    diag: Vec<f64>,
    /// `(row, col)` pairs of unit off-diagonal couplings (entry `−1/h²`).
    off: Vec<(usize, usize)>,
    inv_h2: f64,
    mean_zero: bool,
    lattice: Lattice,
}

impl PatchLaplacian {
    pub(crate) fn new(p: &BallPatch, bc: Bc) -> Self {
        let lat = *p.lattice();
        let inv_h2 = 1.0 / (lat.spacing() * lat.spacing());
        let sites: Vec<usize> = match bc {
            Bc::DirichletZero => p.interior().to_vec(),
            Bc::NeumannMeanZero => p.sites(),
        };
        let mut index = vec![usize::MAX; lat.sites()];
        for (i, &x) in sites.iter().enumerate() {
            index[x] = i;
        }
        let mut diag = vec![0.0; sites.len()];
        let mut off = Vec::new();
        match bc {
            Bc::DirichletZero => {
                for (i, &x) in sites.iter().enumerate() {
                    diag[i] = 2.0 * lat.dim() as f64;
                    for mu in 0..lat.dim() {
                        for y in [lat.fwd(x, mu), lat.bwd(x, mu)] {
                            if index[y] != usize::MAX {
                                off.push((i, index[y]));
                            }
                        }
                    }
                }
            }
            Bc::NeumannMeanZero => {
                for (x, mu) in p.internal_edges() {
                    let (i, j) = (index[x], index[lat.fwd(x, mu)]);
                    diag[i] += 1.0;
                    diag[j] += 1.0;
                    off.push((i, j));
                    off.push((j, i));
                }
            }
        }
        PatchLaplacian {
            sites,
            diag,
            off,
            inv_h2,
            mean_zero: bc == Bc::NeumannMeanZero,
            lattice: lat,
        }
    }

    fn apply(&self, v: &[f64], out: &mut [f64]) {
        for (o, (d, x)) in out.iter_mut().zip(self.diag.iter().zip(v)) {
            *o = d * x * self.inv_h2;
        }
        for &(i, j) in &self.off {
            out[i] -= v[j] * self.inv_h2;
        }
    }

    /// Dense matrix of the operator, for oracle tests.
    #[cfg(test)]
    pub(crate) fn dense(&self) -> Vec<Vec<f64>> {
        let m = self.sites.len();
        let mut a = vec![vec![0.0; m]; m];
        for i in 0..m {
            a[i][i] = self.diag[i] * self.inv_h2;
        }
        for &(i, j) in &self.off {
            a[i][j] -= self.inv_h2;
        }
        a
    }

    fn remove_mean(&self, v: &mut [f64]) {
        if self.mean_zero && !v.is_empty() {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter_mut().for_each(|x| *x -= m);
        }
    }

    /// Conjugate gradient for `L u = b`.
    fn cg(&self, b: &[f64]) -> Result<Vec<f64>, GaugeError> {
        let m = b.len();
        let mut b = b.to_vec();
        self.remove_mean(&mut b);
        let bnorm = dot(&b, &b).sqrt();
        let mut x = vec![0.0; m];
        if bnorm == 0.0 {
            return Ok(x);
        }
        let mut r = b.clone();
        let mut p = r.clone();
        let mut ap = vec![0.0; m];
        let mut rr = dot(&r, &r);
        let max_iter = 20 * m + 100;
        for _ in 0..max_iter {
            self.apply(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for i in 0..m {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            self.remove_mean(&mut r);
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= CG_TOL * bnorm {
                // Confirm with the true residual.
                self.apply(&x, &mut ap);
                let true_res = b.iter().zip(&ap).map(|(bi, ai)| (bi - ai).powi(2)).sum::<f64>().sqrt();
                if true_res <= 10.0 * CG_TOL * bnorm {
                    self.remove_mean(&mut x);
                    return Ok(x);
                }
            }
            let beta = rr_new / rr;
            for i in 0..m {
                p[i] = r[i] + beta * p[i];
            }
            rr = rr_new;
        }
        Err(GaugeError::SolverStall {
            residual: rr.sqrt() / bnorm,
        })
    }

    /// Solves `−L u = f` with `u = 0` off the unknown set.
    pub(crate) fn solve(&self, f: &Section) -> Result<Section, GaugeError> {
        let mut out = Vec::new();
        for plane in planes(f, &self.sites) {
            let b: Vec<f64> = plane.iter().map(|v| -v).collect();
            out.push(self.cg(&b)?);
        }
        Ok(assemble(self.lattice, f.group(), &self.sites, &out))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{d_section, d_star_one_form, l2};
    use nalgebra::{DMatrix, DVector};

    fn mode(lat: Lattice, k: [usize; 2]) -> Section {
        Section::from_fn(lat, Group::Su2, |x| {
            let ph = 2.0 * PI
                * (k[0] as f64 * lat.coord(x, 0) as f64 / lat.extent(0) as f64
                    + k[1] as f64 * lat.coord(x, 1) as f64 / lat.extent(1) as f64);
            AlgebraElement::from_coords(Group::Su2, &[ph.cos(), 0.0, 0.5 * ph.sin()])
        })
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let lat = Lattice::new(&[8, 8], 0.125).unwrap();
        let f = Section::zeros(lat, Group::Su2);
        assert_eq!(poisson_solve(&f, &Domain::Torus, Bc::NeumannMeanZero).unwrap(), f);
        let p = BallPatch::new(lat, 9, 0.3).unwrap();
        for bc in [Bc::DirichletZero, Bc::NeumannMeanZero] {
            assert_eq!(poisson_solve(&f, &Domain::Patch(p.clone()), bc).unwrap(), f);
        }
    }

    #[test]
    fn torus_single_mode_divides_by_symbol() {
        let lat = Lattice::new(&[16, 8], 0.25).unwrap();
        let f = mode(lat, [3, 1]);
        let u = poisson_solve(&f, &Domain::Torus, Bc::NeumannMeanZero).unwrap();
        let h = lat.spacing();
        let lam = 4.0 / (h * h) * ((PI * 3.0 / 16.0).sin().powi(2) + (PI / 8.0).sin().powi(2));
        assert!(l2(&u.sub(&f.scale(-1.0 / lam))) < 1e-13 * l2(&f) / lam);
        let back = d_star_one_form(&d_section(&u)).scale(-1.0);
        assert!(l2(&back.sub(&f)) < 1e-12 * l2(&f));
        assert!(u.mean().norm() < 1e-15);
    }

    #[test]
    fn torus_rejects_nonzero_mean() {
        let lat = Lattice::new(&[8, 8], 0.25).unwrap();
        let f = Section::from_fn(lat, Group::U1, |_| AlgebraElement::from_coords(Group::U1, &[1.0]));
        assert!(matches!(
            poisson_solve(&f, &Domain::Torus, Bc::NeumannMeanZero),
            Err(GaugeError::Solvability { .. })
        ));
        assert!(poisson_solve(&f, &Domain::Torus, Bc::DirichletZero).is_err());
    }

    fn dense_oracle(op: &PatchLaplacian, b: &[f64], neumann: bool) -> Vec<f64> {
        let m = b.len();
        let a = op.dense();
        let mut mat = DMatrix::from_fn(m, m, |i, j| a[i][j]);
        let mut rhs = DVector::from_column_slice(b);
        if neumann {
            // Bordered system fixes the constant null space.
            mat = mat.insert_row(m, 1.0).insert_column(m, 1.0);
            mat[(m, m)] = 0.0;
            rhs = rhs.insert_row(m, 0.0);
        }
        let sol = mat.lu().solve(&rhs).expect("nonsingular oracle system");
        sol.iter().take(m).copied().collect()
    }

    #[test]
    fn patch_solves_match_dense_oracle() {
        let lat = Lattice::cubic(3, 12, 0.5).unwrap();
        let center = lat.site(&[6, 6, 6]);
        let p = BallPatch::new(lat, center, 2.4).unwrap();
        assert!(p.sites().len() <= 1000);
        for bc in [Bc::DirichletZero, Bc::NeumannMeanZero] {
            let op = PatchLaplacian::new(&p, bc);
            // Delta at the center (mean removed for Neumann).
            let mut f = Section::zeros(lat, Group::U1);
            f.set(center, AlgebraElement::from_coords(Group::U1, &[1.0]));
            if bc == Bc::NeumannMeanZero {
                let m = 1.0 / op.sites.len() as f64;
                for &x in &op.sites {
                    let v = f.get(x).coords()[0] - m;
                    f.set(x, AlgebraElement::from_coords(Group::U1, &[v]));
                }
            }
            let u = poisson_solve(&f, &Domain::Patch(p.clone()), bc).unwrap();
            let b: Vec<f64> = op.sites.iter().map(|&x| -f.get(x).coords()[0]).collect();
            let oracle = dense_oracle(&op, &b, bc == Bc::NeumannMeanZero);
            let scale = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (i, &x) in op.sites.iter().enumerate() {
                assert!((u.get(x).coords()[0] - oracle[i]).abs() <= 1e-10 * scale);
            }
            if bc == Bc::DirichletZero {
                assert!(p.boundary().iter().all(|&x| u.get(x).is_zero()));
            }
        }
    }
}
