//! Monitors measuring the a-priori estimates on a stored run.
//!
//! Every monitor is a pure function of a [`RunHistory`]. None of them
//! asserts an unknown constant: each reports the smallest constant that
//! makes its inequality hold on the run.

use std::io::{self, Write};

use serde::Serialize;
use thiserror::Error;

use crate::field::{
    componentwise_laplacian, cov_grad_two_form_pointwise, curvature, d_one_form, d_star_three_form,
    d_star_two_form, d_two_form, displacement, l2, AlgebraField, BallPatch, Connection, FieldError, Lattice,
    ThreeForm, TwoForm, MAX_DIM,
};
use crate::lie::{bracket, AlgebraElement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("window [t0 - r0^2, t0] with r0 = {r0} precedes t = 0 for every stored time (last t = {t_last})")]
    Window { r0: f64, t_last: f64 },
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("run history has no connection snapshots; {0} needs them")]
    MissingConnection(&'static str),
    #[error("run history is empty")]
    Empty,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub curvature: TwoForm,
    pub connection: Option<Connection>,
}

/// Stored curvature (and optionally connection) snapshots of a run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunHistory {
    pub frames: Vec<Frame>,
}

impl RunHistory {
    pub fn push_connection(&mut self, t: f64, a: &Connection, keep_connection: bool) {
        self.frames.push(Frame {
            t,
            curvature: curvature(a),
            connection: keep_connection.then(|| a.clone()),
        });
    }

    pub fn push_curvature(&mut self, t: f64, f: TwoForm) {
        self.frames.push(Frame {
            t,
            curvature: f,
            connection: None,
        });
    }

    fn lattice(&self) -> Result<Lattice, AnalysisError> {
        self.frames.first().map(|f| *f.curvature.lattice()).ok_or(AnalysisError::Empty)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonitorRow {
    pub t: f64,
    pub patch: usize,
    pub value: f64,
    pub running_constant: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorReport {
    pub name: String,
    pub rows: Vec<MonitorRow>,
    /// Smallest constant making the inequality hold on the run.
    pub constant: f64,
    /// Measured hypothesis quantity, where the estimate has one.
    pub hypothesis: Option<f64>,
    pub bound: Option<f64>,
    pub pass: bool,
    pub flags: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MonitorSummary<'a> {
    pub name: &'a str,
    pub constant: f64,
    pub pass: bool,
}

impl MonitorReport {
    fn finish(name: &str, rows: Vec<MonitorRow>, hypothesis: Option<f64>, bound: Option<f64>, flags: Vec<String>) -> Self {
        let constant = rows.iter().map(|r| r.value).fold(0.0, f64::max);
        let pass = constant.is_finite() && bound.is_none_or(|b| constant <= b);
        MonitorReport {
            name: name.to_string(),
            rows,
            constant,
            hypothesis,
            bound,
            pass,
            flags,
        }
    }

    pub fn summary(&self) -> MonitorSummary<'_> {
        MonitorSummary {
            name: &self.name,
            constant: self.constant,
            pass: self.pass,
        }
    }

    pub fn write_csv<W: Write>(&self, w: &mut W) -> io::Result<()> {
        writeln!(w, "time,patch,value,running_constant")?;
        for r in &self.rows {
            writeln!(w, "{:e},{},{:e},{:e}", r.t, r.patch, r.value, r.running_constant)?;
        }
        Ok(())
    }
}

/// Interior offsets of a ball of radius `r`, valid at every center.
fn ball_offsets(lat: &Lattice, r: f64) -> Result<Vec<[isize; MAX_DIM]>, AnalysisError> {
    let p = BallPatch::new(*lat, 0, r)?;
    if p.interior().is_empty() {
        return Err(FieldError::EmptyInterior(r).into());
    }
    Ok(p.interior_offsets())
}

/// `h^n Σ_{x ∈ B(center)} v(x)` for a per-site density.
fn ball_sum(lat: &Lattice, density: &[f64], center: usize, offsets: &[[isize; MAX_DIM]]) -> f64 {
    let s: f64 = offsets.iter().map(|o| density[lat.offset(center, &o[..lat.dim()])]).sum();
    s * lat.cell_volume()
}

fn pointwise_pow(f: &TwoForm, p: f64) -> Vec<f64> {
    (0..f.lattice().sites()).map(|x| f.site_norm(x).powf(p)).collect()
}

/// Trapezoid integral of samples `(t_k, v_k)`.
fn trapezoid(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; t.len()];
    for k in 1..t.len() {
        acc[k] = acc[k - 1] + 0.5 * (t[k] - t[k - 1]) * (v[k] + v[k - 1]);
    }
    acc
}

/// Local energy inequality
/// `∫_{B_R}|F|^{n/2}(t) [+ ∫₀ᵗ∫_{B_R}|∇F|² for n = 4] ≤ ∫_{B_2R}|F|^{n/2}(0) + (C/R²)∫₀ᵗ∫_{B_2R}|F|^{n/2}`.
///
/// The `|F|^{(n−4)/2}|∇F|²` term is only included for `n = 4`, where the
/// exponent vanishes.
pub fn local_energy_monitor(history: &RunHistory, centers: &[usize], r: f64) -> Result<MonitorReport, AnalysisError> {
    let lat = history.lattice()?;
    let n = lat.dim();
    let p = n as f64 / 2.0;
    let small = ball_offsets(&lat, r)?;
    let large = ball_offsets(&lat, 2.0 * r)?;
    let times: Vec<f64> = history.frames.iter().map(|f| f.t).collect();
    let dens: Vec<Vec<f64>> = history.frames.iter().map(|f| pointwise_pow(&f.curvature, p)).collect();
    let grad: Option<Vec<Vec<f64>>> = if n == 4 {
        let mut g = Vec::new();
        for f in &history.frames {
            let a = f.connection.as_ref().ok_or(AnalysisError::MissingConnection("the n = 4 local energy"))?;
            g.push(cov_grad_two_form_pointwise(a, &f.curvature));
        }
        Some(g)
    } else {
        None
    };
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    for (pi, &c) in centers.iter().enumerate() {
        let lhs0: Vec<f64> = dens.iter().map(|d| ball_sum(&lat, d, c, &small)).collect();
        let big: Vec<f64> = dens.iter().map(|d| ball_sum(&lat, d, c, &large)).collect();
        let rhs1: Vec<f64> = trapezoid(&times, &big).iter().map(|v| v / (r * r)).collect();
        let grad_int = match &grad {
            Some(g) => trapezoid(&times, &g.iter().map(|d| ball_sum(&lat, d, c, &small)).collect::<Vec<_>>()),
            None => vec![0.0; times.len()],
        };
        let mut running = 0.0f64;
        for k in 0..times.len() {
            let excess = (lhs0[k] + grad_int[k] - big[0]).max(0.0);
            let ck = if excess == 0.0 {
                0.0
            } else if rhs1[k] > 0.0 {
                excess / rhs1[k]
            } else {
                flags.push(format!("center {c}: positive excess with zero integral at t = {}", times[k]));
                f64::INFINITY
            };
            running = running.max(ck);
            rows.push(MonitorRow {
                t: times[k],
                patch: pi,
                value: ck,
                running_constant: running,
            });
        }
    }
    Ok(MonitorReport::finish("local_energy", rows, None, None, flags))
}

/// Linear interpolation of a sampled curve at `t`.
fn interp(t: &[f64], v: &[f64], at: f64) -> f64 {
    match t.iter().position(|&s| s >= at) {
        Some(0) | None => v[if at <= t[0] { 0 } else { v.len() - 1 }],
        Some(k) => {
            let w = (at - t[k - 1]) / (t[k] - t[k - 1]);
            v[k - 1] + w * (v[k] - v[k - 1])
        }
    }
}

/// ε-regularity: the ratio `|F(x₀,t₀)|² r₀² / ∫_{t₀−r₀²}^{t₀}∫_{B_{r₀}(x₀)}|F|²`
/// maximized over centers and admissible times. The hypothesis
/// `sup_t ∫_{B_{r₀}}|F|^{n/2}` over the windows is reported alongside.
pub fn eps_regularity_monitor(history: &RunHistory, centers: &[usize], r0: f64) -> Result<MonitorReport, AnalysisError> {
    let lat = history.lattice()?;
    let p = lat.dim() as f64 / 2.0;
    let ball = ball_offsets(&lat, r0)?;
    let times: Vec<f64> = history.frames.iter().map(|f| f.t).collect();
    let t_first = times[0];
    let window = r0 * r0;
    let admissible: Vec<usize> = (0..times.len()).filter(|&k| times[k] - window >= t_first - 1e-12 * window).collect();
    if admissible.is_empty() {
        return Err(AnalysisError::Window {
            r0,
            t_last: *times.last().expect("nonempty"),
        });
    }
    let sq: Vec<Vec<f64>> = history.frames.iter().map(|f| pointwise_pow(&f.curvature, 2.0)).collect();
    let hyp: Vec<Vec<f64>> = history.frames.iter().map(|f| pointwise_pow(&f.curvature, p)).collect();
    let mut rows = Vec::new();
    let mut flags = Vec::new();
    let mut hypothesis = 0.0f64;
    for (pi, &c) in centers.iter().enumerate() {
        let energy: Vec<f64> = sq.iter().map(|d| ball_sum(&lat, d, c, &ball)).collect();
        let cumulative = trapezoid(&times, &energy);
        let hyp_c: Vec<f64> = hyp.iter().map(|d| ball_sum(&lat, d, c, &ball)).collect();
        let mut running = 0.0f64;
        for &k in &admissible {
            let start = times[k] - window;
            let den = cumulative[k] - interp(&times, &cumulative, start);
            let num = sq[k][c] * window;
            for (j, &t) in times.iter().enumerate() {
                if t >= start - 1e-12 * window && t <= times[k] {
                    hypothesis = hypothesis.max(hyp_c[j]);
                }
            }
            let ratio = if den > 0.0 {
                num / den
            } else {
                if num > 0.0 {
                    flags.push(format!("center {c}: zero window integral at t = {}", times[k]));
                }
                0.0
            };
            if den == 0.0 && num == 0.0 && flags.is_empty() {
                flags.push("0/0 ratios reported as 0".to_string());
            }
            running = running.max(ratio);
            rows.push(MonitorRow {
                t: times[k],
                patch: pi,
                value: ratio,
                running_constant: running,
            });
        }
    }
    Ok(MonitorReport::finish("eps_regularity", rows, Some(hypothesis), None, flags))
}

/// Sites `x₀` where, for every radius, the largest late-time value of
/// `∫_{B_R(x₀)}|F|^{n/2}` reaches `ε₀`. Late frames are the last
/// `late_frames` stored frames.
pub fn singular_detector(
    history: &RunHistory,
    eps0: f64,
    radii: &[f64],
    late_frames: usize,
) -> Result<Vec<usize>, AnalysisError> {
    let lat = history.lattice()?;
    if !(eps0 > 0.0) || radii.is_empty() {
        return Err(AnalysisError::Unsupported("singular detector needs eps0 > 0 and at least one radius".into()));
    }
    let p = lat.dim() as f64 / 2.0;
    let late = &history.frames[history.frames.len().saturating_sub(late_frames.max(1))..];
    let dens: Vec<Vec<f64>> = late.iter().map(|f| pointwise_pow(&f.curvature, p)).collect();
    let balls = radii.iter().map(|&r| ball_offsets(&lat, r)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..lat.sites())
        .filter(|&x| {
            balls.iter().all(|offs| {
                let m = dens.iter().map(|d| ball_sum(&lat, d, x, offs)).fold(0.0, f64::max);
                m >= eps0
            })
        })
        .collect())
}

/// `∫₀ᵀ‖∇_A F_A‖² / E(0)`, needing connection frames.
pub fn integrated_gradient_ratio(history: &RunHistory) -> Result<f64, AnalysisError> {
    let times: Vec<f64> = history.frames.iter().map(|f| f.t).collect();
    let mut g = Vec::new();
    for f in &history.frames {
        let a = f.connection.as_ref().ok_or(AnalysisError::MissingConnection("the gradient integral"))?;
        g.push(crate::field::cov_grad_two_form_sq(a, &f.curvature));
    }
    let total = *trapezoid(&times, &g).last().ok_or(AnalysisError::Empty)?;
    let e0 = 0.5 * crate::field::l2_sq(&history.frames[0].curvature);
    Ok(if e0 > 0.0 { total / e0 } else { 0.0 })
}

/// Cube-centred exterior covariant derivative `D_A F` of a 2-form.
///
/// For the cube at `x` spanned by `(λ, μ, ν)`, each signed face pair
/// contributes `(F_{face}(x+e_dir) − F_{face}(x))/h + [Ā_dir, F̄_{face}]`, with
/// `Ā_dir` the mean of the four `dir`-edges of the cube and `F̄` the mean of
/// the two parallel faces.
pub fn cov_d_two_form(a: &Connection, f: &TwoForm) -> ThreeForm {
    let lat = *a.lattice();
    let mut out = d_two_form(f);
    if a.group().is_abelian() {
        return out;
    }
    let nt = lat.n_triples();
    for x in 0..lat.sites() {
        for (ti, &(l, m, n)) in lat.triples().iter().enumerate() {
            let mut acc = AlgebraElement::zero(a.group());
            for (dir, (p, q), sign) in [(l, (m, n), 1.0), (m, (l, n), -1.0), (n, (l, m), 1.0)] {
                let (yp, yq) = (lat.fwd(x, p), lat.fwd(x, q));
                let ybar = (a.get(x, dir) + a.get(yp, dir) + a.get(yq, dir) + a.get(lat.fwd(yp, q), dir)).scale(0.25);
                let fbar = (f.get(x, p, q) + f.get(lat.fwd(x, dir), p, q)).scale(0.5);
                acc += bracket(&ybar, &fbar).scale(sign);
            }
            out.values_mut()[x * nt + ti] += acc;
        }
    }
    out
}

/// `‖D_A F_A‖_{l2}`; identically zero for `n = 2`.
pub fn bianchi_residual(a: &Connection) -> f64 {
    l2(&cov_d_two_form(a, &curvature(a)))
}

/// `‖dd*F + d*dF + Δ_c F‖` for abelian `A`, where `Δ_c` is the
/// componentwise lattice Laplacian. Refused for nonabelian groups.
pub fn weitzenboeck_residual_abelian(a: &Connection) -> Result<f64, AnalysisError> {
    if !a.group().is_abelian() {
        return Err(AnalysisError::Unsupported(
            "the nonabelian Weitzenboeck identity carries unspecified F#F constants".into(),
        ));
    }
    let f = curvature(a);
    let hodge = d_one_form(&d_star_two_form(&f)).add(&d_star_three_form(&d_two_form(&f)));
    Ok(l2(&hodge.add(&componentwise_laplacian(&f))))
}

/// Sites in increasing order, the default set of monitor centers.
pub fn all_sites(lat: &Lattice) -> Vec<usize> {
    (0..lat.sites()).collect()
}

/// Minimal-image displacement in physical units, used for reporting.
pub fn separation(lat: &Lattice, a: usize, b: usize) -> f64 {
    let d = displacement(lat, a, b);
    (d[..lat.dim()].iter().map(|&k| (k * k) as f64).sum::<f64>()).sqrt() * lat.spacing()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lie::Group;
    use std::f64::consts::PI;

    fn zero_history(lat: Lattice, frames: usize) -> RunHistory {
        let mut h = RunHistory::default();
        for k in 0..frames {
            h.push_connection(k as f64 * 0.01, &Connection::zeros(lat, Group::Su2), true);
        }
        h
    }

    #[test]
    fn zero_runs_give_zero_constants() {
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let h = zero_history(lat, 5);
        let c = all_sites(&lat);
        let le = local_energy_monitor(&h, &c, 0.2).unwrap();
        assert_eq!(le.constant, 0.0);
        let er = eps_regularity_monitor(&h, &c, 0.1).unwrap();
        assert_eq!(er.constant, 0.0);
        assert!(er.flags.iter().any(|f| f.contains("0/0")));
        assert!(singular_detector(&h, 1e-3, &[0.0625, 0.125], 2).unwrap().is_empty());
        assert_eq!(bianchi_residual(&Connection::zeros(lat, Group::Su2)), 0.0);
        assert_eq!(weitzenboeck_residual_abelian(&Connection::zeros(lat, Group::U1)).unwrap(), 0.0);
    }

    #[test]
    fn window_before_start_is_an_error() {
        let lat = Lattice::cubic(2, 8, 0.125).unwrap();
        let h = zero_history(lat, 3);
        assert!(matches!(eps_regularity_monitor(&h, &[0], 0.3), Err(AnalysisError::Window { .. })));
        assert!(local_energy_monitor(&h, &[0], 0.3).is_err());
    }

    #[test]
    fn constant_decaying_field_has_closed_form_ratio() {
        // F(t) = F0 e^{-μt} on every plaquette: ratio at t0 is
        // r0² e^{-2μ t0} / (V_ball ∫_{t0-r0²}^{t0} e^{-2μt} dt).
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let mu = 3.0;
        let r0 = 0.2;
        let f0 = TwoForm::from_fn(lat, Group::U1, |_, _, _| AlgebraElement::from_coords(Group::U1, &[0.7]));
        let mut h = RunHistory::default();
        let steps = 4000;
        let t_end = 0.08;
        for k in 0..=steps {
            let t = t_end * k as f64 / steps as f64;
            h.push_curvature(t, f0.scale((-mu * t).exp()));
        }
        let rep = eps_regularity_monitor(&h, &[0], r0).unwrap();
        let n_ball = BallPatch::new(lat, 0, r0).unwrap().interior().len() as f64;
        let vol = n_ball * lat.cell_volume();
        let w = r0 * r0;
        let t0 = t_end;
        let integral = ((-2.0 * mu * (t0 - w)).exp() - (-2.0 * mu * t0).exp()) / (2.0 * mu);
        let expected = w * (-2.0 * mu * t0).exp() / (vol * integral);
        let last = rep.rows.last().unwrap();
        assert!((last.t - t0).abs() < 1e-15);
        assert!((last.value - expected).abs() < 1e-6 * expected, "{} vs {expected}", last.value);
    }

    #[test]
    fn spike_is_flagged_at_its_site_only() {
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let spike = lat.site(&[5, 9]);
        let mut f = TwoForm::zeros(lat, Group::Su2);
        // h²|F| = 1 at the spike site.
        f.set(spike, 0, 1, Group::Su2.generator(0).scale(256.0 * 2f64.sqrt()));
        let mut h = RunHistory::default();
        h.push_curvature(0.0, TwoForm::zeros(lat, Group::Su2));
        h.push_curvature(0.1, f);
        let flagged = singular_detector(&h, 0.5, &[1.0 / 16.0, 2.0 / 16.0], 1).unwrap();
        assert_eq!(flagged, vec![spike]);
    }

    #[test]
    fn abelian_weitzenboeck_and_bianchi_vanish() {
        let lat = Lattice::cubic(3, 8, 0.125).unwrap();
        let a = Connection::from_fn(lat, Group::U1, |x, mu| {
            let p = lat.position(x);
            AlgebraElement::from_coords(Group::U1, &[(2.0 * PI * (p[(mu + 1) % 3] + 0.3 * p[mu])).sin()])
        });
        assert!(weitzenboeck_residual_abelian(&a).unwrap() < 1e-11);
        assert!(bianchi_residual(&a) < 1e-11);
        let b = Connection::zeros(lat, Group::Su2);
        assert!(weitzenboeck_residual_abelian(&b).is_err());
    }

    #[test]
    fn monitors_are_deterministic() {
        let lat = Lattice::cubic(2, 8, 0.125).unwrap();
        let mut h = RunHistory::default();
        for k in 0..4 {
            let a = Connection::from_fn(lat, Group::Su2, |x, mu| {
                Group::Su2.generator(mu).scale(0.1 * (x as f64 + k as f64).sin())
            });
            h.push_connection(0.01 * k as f64, &a, false);
        }
        let c = all_sites(&lat);
        assert_eq!(local_energy_monitor(&h, &c, 0.15).unwrap(), local_energy_monitor(&h, &c, 0.15).unwrap());
        assert!((separation(&lat, 0, lat.site(&[3, 4])) - 0.625).abs() < 1e-15);
    }
}
