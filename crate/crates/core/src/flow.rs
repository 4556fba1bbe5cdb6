//! Explicit integration of the Yang-Mills flow.
//!
//! The raw flow is `∂A/∂t = −D_A*F_A`. The DeTurck variant adds
//! `−D_a(D_a*a)` and co-integrates the gauge ODE `dS/dt = −S·D_a*a`; the raw
//! solution is recovered as `A = apply_gauge(S⁻¹, a)`.
//!
//! The energy is `½‖F‖²`, which is the functional whose gradient is
//! `D_A*F_A`, so `E(t) + ∫‖∂A/∂s‖² = E(0)` holds exactly along the flow.

use std::io::{self, Write};

use thiserror::Error;

use crate::field::{
    cov_d_section, cov_d_star_one_form, cov_d_star_two_form, curvature, d_star_one_form, l2,
    l2_sq, max_norm, AlgebraField, Connection, GaugeTransform, Lattice, OneForm, Section, TwoForm,
};
use crate::lie::{adjoint, exp, log, project_algebra, project_group, GroupElement, LieError, Matrix};

/// Pointwise curvature above which a run is declared singular.
pub const OVERFLOW_GUARD: f64 = 1e12;

/// Classical RK4 is stable for `dt·λ_max ≤ 2.785`; Euler for `≤ 2`.
const RK4_STABILITY_FACTOR: f64 = 1.39;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlowError {
    #[error("dt = {dt} exceeds the stability bound {bound} (h²/(2n) = {cfl}, scheme {scheme})")]
    Cfl { dt: f64, bound: f64, cfl: f64, scheme: &'static str },
    #[error("invalid flow config: {0}")]
    Config(String),
    #[error("singular stop at step {step}, t = {t}: max |F| = {max_curvature:e} at {} site(s)", sites.len())]
    Singular {
        step: usize,
        t: f64,
        max_curvature: f64,
        /// Sites whose pointwise curvature is non-finite or above the guard.
        sites: Vec<usize>,
    },
    #[error("gauge action undefined on edge ({site}, {mu}): {source}")]
    GaugeLog { site: usize, mu: usize, source: LieError },
    #[error("gauge re-projection failed at site {site}: {source}")]
    Projection { site: usize, source: LieError },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    Raw,
    DeTurck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    Rk4,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Euler => "euler",
            Scheme::Rk4 => "rk4",
        }
    }

    fn stability_factor(self) -> f64 {
        match self {
            Scheme::Euler => 1.0,
            Scheme::Rk4 => RK4_STABILITY_FACTOR,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeStep {
    Auto,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowConfig {
    pub variant: Variant,
    pub scheme: Scheme,
    pub dt: TimeStep,
    pub cfl_safety: f64,
    pub t_end: f64,
    pub reproject_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            variant: Variant::Raw,
            scheme: Scheme::Euler,
            dt: TimeStep::Auto,
            cfl_safety: 0.5,
            t_end: 0.01,
            reproject_every: 1,
        }
    }
}

impl FlowConfig {
    /// Resolved step size for a lattice, validated against the scheme's
    /// stability bound.
    pub fn step_size(&self, lattice: &Lattice) -> Result<f64, FlowError> {
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(FlowError::Config(format!("cfl_safety {} must lie in (0, 1]", self.cfl_safety)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(FlowError::Config(format!("t_end {} must be positive", self.t_end)));
        }
        if self.reproject_every == 0 {
            return Err(FlowError::Config("reproject_every must be at least 1".into()));
        }
        let cfl = lattice.cfl_bound();
        let bound = cfl * self.scheme.stability_factor();
        match self.dt {
            TimeStep::Auto => Ok(self.cfl_safety * cfl),
            TimeStep::Fixed(dt) if dt > 0.0 && dt <= bound => Ok(dt),
            TimeStep::Fixed(dt) => Err(FlowError::Cfl {
                dt,
                bound,
                cfl,
                scheme: self.scheme.name(),
            }),
        }
    }
}

/// `−D_A*F_A`.
pub fn rhs_raw(a: &Connection) -> OneForm {
    cov_d_star_two_form(a, &curvature(a)).scale(-1.0)
}

/// `−D_a*F_a − D_a(D_a*a)`.
pub fn rhs_deturck(a: &Connection) -> OneForm {
    let gauge = cov_d_section(a, &cov_d_star_one_form(a, a));
    rhs_raw(a).sub(&gauge)
}

/// `dS/dt = −S(x)·(D_a*a)(x)` at every site.
pub fn rhs_gauge_ode(s: &GaugeTransform, a: &Connection) -> Vec<Matrix> {
    let sigma = cov_d_star_one_form(a, a);
    gauge_ode_with(s.values().iter().map(|g| *g.matrix()), &sigma)
}

fn gauge_ode_with(s: impl Iterator<Item = Matrix>, sigma: &Section) -> Vec<Matrix> {
    s.zip(sigma.values()).map(|(m, v)| (m * *v.matrix()).scale(-1.0)).collect()
}

/// `½‖F_A‖²`.
pub fn energy(a: &Connection) -> f64 {
    0.5 * l2_sq(&curvature(a))
}

/// Gauge action `a = S⁻¹dS + S⁻¹AS`, realized on each edge as
/// `a_μ(x) = log(S(x)⁻¹ exp(hA_μ(x)) S(x+e_μ)) / h`.
///
/// Edges whose endpoints carry bitwise equal group elements take the exact
/// adjoint `S⁻¹A_μS`, so identity and site-constant gauges act without
/// roundoff. The link form composes exactly:
/// `apply_gauge(S₂, apply_gauge(S₁, A)) = apply_gauge(S₁S₂, A)`.
pub fn apply_gauge(s: &GaugeTransform, a: &Connection) -> Result<Connection, FlowError> {
    let lat = *a.lattice();
    let h = lat.spacing();
    let mut out = a.clone();
    for x in 0..lat.sites() {
        let sx = s.get(x);
        for mu in 0..lat.dim() {
            let sy = s.get(lat.fwd(x, mu));
            let v = a.get(x, mu);
            let w = if sx == sy {
                adjoint(&sx, &v)
            } else {
                let link = sx.inverse() * exp(&v.scale(h)) * sy;
                log(&link)
                    .map_err(|source| FlowError::GaugeLog { site: x, mu, source })?
                    .scale(1.0 / h)
            };
            out.set(x, mu, w);
        }
    }
    Ok(out)
}

/// `A(t) = apply_gauge(S(t)⁻¹, a(t))` for each stored time.
pub fn reconstruct_raw(a: &[Connection], s: &[GaugeTransform]) -> Result<Vec<Connection>, FlowError> {
    if a.len() != s.len() {
        return Err(FlowError::Config(format!(
            "trajectories not aligned: {} connections vs {} gauges",
            a.len(),
            s.len()
        )));
    }
    a.iter().zip(s).map(|(a, s)| apply_gauge(&s.inverse(), a)).collect()
}

/// One CSV row per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagRow {
    pub step: usize,
    pub t: f64,
    pub ym_energy: f64,
    pub grad_norm_sq: f64,
    pub energy_identity_residual: f64,
    pub max_point_curvature: f64,
    pub dstar_a_residual: f64,
    pub dt: f64,
}

pub const CSV_HEADER: &str =
    "step,t,ym_energy,grad_norm_sq,energy_identity_residual,max_point_curvature,dstar_a_residual,dt";

impl DiagRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            self.step,
            self.t,
            self.ym_energy,
            self.grad_norm_sq,
            self.energy_identity_residual,
            self.max_point_curvature,
            self.dstar_a_residual,
            self.dt
        )
    }
}

pub fn write_csv<W: Write>(w: &mut W, rows: &[DiagRow]) -> io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.csv())?;
    }
    Ok(())
}

/// Connection, optional gauge, time and the running energy integral.
#[derive(Clone, Debug)]
pub struct FlowState {
    config: FlowConfig,
    dt: f64,
    a: Connection,
    s: Option<GaugeTransform>,
    t: f64,
    step: usize,
    energy0: f64,
    energy_integral: f64,
    // Quantities at the current state, reused by the next step.
    curvature: TwoForm,
    grad: OneForm,
    grad_sq: f64,
    history: Vec<DiagRow>,
}

impl FlowState {
    pub fn new(a0: Connection, config: FlowConfig) -> Result<Self, FlowError> {
        let dt = config.step_size(a0.lattice())?;
        let s = match config.variant {
            Variant::Raw => None,
            Variant::DeTurck => Some(GaugeTransform::identity(*a0.lattice(), a0.group())),
        };
        let f = curvature(&a0);
        let grad = cov_d_star_two_form(&a0, &f);
        let grad_sq = l2_sq(&grad);
        let energy0 = 0.5 * l2_sq(&f);
        let row = DiagRow {
            step: 0,
            t: 0.0,
            ym_energy: energy0,
            grad_norm_sq: grad_sq,
            energy_identity_residual: 0.0,
            max_point_curvature: max_norm(&f),
            dstar_a_residual: l2(&d_star_one_form(&a0)),
            dt: 0.0,
        };
        Ok(FlowState {
            config,
            dt,
            a: a0,
            s,
            t: 0.0,
            step: 0,
            energy0,
            energy_integral: 0.0,
            curvature: f,
            grad,
            grad_sq,
            history: vec![row],
        })
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn connection(&self) -> &Connection {
        &self.a
    }

    /// Companion gauge (DeTurck variant only).
    pub fn gauge(&self) -> Option<&GaugeTransform> {
        self.s.as_ref()
    }

    /// The raw-flow solution: `a` itself, or `apply_gauge(S⁻¹, a)`.
    pub fn raw_connection(&self) -> Result<Connection, FlowError> {
        match &self.s {
            None => Ok(self.a.clone()),
            Some(s) => apply_gauge(&s.inverse(), &self.a),
        }
    }

    pub fn curvature(&self) -> &TwoForm {
        &self.curvature
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn energy(&self) -> f64 {
        0.5 * l2_sq(&self.curvature)
    }

    pub fn initial_energy(&self) -> f64 {
        self.energy0
    }

    /// Trapezoid approximation of `∫₀ᵗ ‖∂A/∂s‖²`.
    pub fn energy_integral(&self) -> f64 {
        self.energy_integral
    }

    /// `|E(t) + ∫‖∂A‖² − E(0)|`.
    pub fn energy_identity_residual(&self) -> f64 {
        (self.energy() + self.energy_integral - self.energy0).abs()
    }

    pub fn history(&self) -> &[DiagRow] {
        &self.history
    }

    fn field_rhs(&self, a: &Connection) -> OneForm {
        match self.config.variant {
            Variant::Raw => rhs_raw(a),
            Variant::DeTurck => rhs_deturck(a),
        }
    }

    /// Advances one step of size `dt()`.
    pub fn step(&mut self) -> Result<&DiagRow, FlowError> {
        let dt = self.dt;
        let (a_new, s_new) = match self.config.scheme {
            Scheme::Euler => {
                let k = match self.config.variant {
                    Variant::Raw => self.grad.scale(-1.0),
                    Variant::DeTurck => self.field_rhs(&self.a),
                };
                let a_new = self.a.axpy(dt, &k);
                let s_new = self.s.as_ref().map(|s| {
                    let ds = rhs_gauge_ode(s, &self.a);
                    s.values().iter().zip(ds).map(|(g, d)| *g.matrix() + d.scale(dt)).collect::<Vec<_>>()
                });
                (a_new, s_new)
            }
            Scheme::Rk4 => self.rk4(dt),
        };
        let a_new = a_new.map(|v| project_algebra(v.matrix()));
        let s_new = match s_new {
            None => None,
            Some(m) => Some(self.finish_gauge(m)?),
        };
        let f = curvature(&a_new);
        let max_f = max_norm(&f);
        if !(max_f <= OVERFLOW_GUARD) || !a_new.is_finite() {
            let sites = (0..f.lattice().sites())
                .filter(|&x| !(f.site_norm(x) <= OVERFLOW_GUARD))
                .collect();
            return Err(FlowError::Singular {
                step: self.step + 1,
                t: self.t + dt,
                max_curvature: max_f,
                sites,
            });
        }
        let grad = cov_d_star_two_form(&a_new, &f);
        let grad_sq = l2_sq(&grad);
        self.energy_integral += 0.5 * dt * (self.grad_sq + grad_sq);
        self.t += dt;
        self.step += 1;
        self.a = a_new;
        if s_new.is_some() {
            self.s = s_new;
        }
        self.curvature = f;
        self.grad = grad;
        self.grad_sq = grad_sq;
        let row = DiagRow {
            step: self.step,
            t: self.t,
            ym_energy: self.energy(),
            grad_norm_sq: grad_sq,
            energy_identity_residual: self.energy_identity_residual(),
            max_point_curvature: max_f,
            dstar_a_residual: l2(&d_star_one_form(&self.a)),
            dt,
        };
        self.history.push(row);
        Ok(self.history.last().expect("row just pushed"))
    }

    fn rk4(&self, dt: f64) -> (Connection, Option<Vec<Matrix>>) {
        let a0 = &self.a;
        let s0: Option<Vec<Matrix>> = self.s.as_ref().map(|s| s.values().iter().map(|g| *g.matrix()).collect());
        let gauge_rhs = |s: &[Matrix], a: &Connection| gauge_ode_with(s.iter().copied(), &cov_d_star_one_form(a, a));
        let shift = |s: &[Matrix], k: &[Matrix], c: f64| s.iter().zip(k).map(|(m, d)| *m + d.scale(c)).collect::<Vec<_>>();

        let k1 = self.field_rhs(a0);
        let a2 = a0.axpy(0.5 * dt, &k1);
        let k2 = self.field_rhs(&a2);
        let a3 = a0.axpy(0.5 * dt, &k2);
        let k3 = self.field_rhs(&a3);
        let a4 = a0.axpy(dt, &k3);
        let k4 = self.field_rhs(&a4);
        let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
        let a_new = a0.axpy(dt / 6.0, &incr);

        let s_new = s0.map(|s| {
            // The gauge stages see the same field stages as the connection.
            let m1 = gauge_rhs(&s, a0);
            let m2 = gauge_rhs(&shift(&s, &m1, 0.5 * dt), &a2);
            let m3 = gauge_rhs(&shift(&s, &m2, 0.5 * dt), &a3);
            let m4 = gauge_rhs(&shift(&s, &m3, dt), &a4);
            (0..s.len())
                .map(|i| s[i] + (m1[i] + m2[i].scale(2.0) + m3[i].scale(2.0) + m4[i]).scale(dt / 6.0))
                .collect()
        });
        (a_new, s_new)
    }

    fn finish_gauge(&self, m: Vec<Matrix>) -> Result<GaugeTransform, FlowError> {
        let s = self.s.as_ref().expect("gauge present for the DeTurck variant");
        let reproject = (self.step + 1).is_multiple_of(self.config.reproject_every);
        let values = m
            .into_iter()
            .enumerate()
            .map(|(site, m)| {
                if reproject {
                    project_group(&m).map_err(|source| FlowError::Projection { site, source })
                } else {
                    Ok(GroupElement::from_matrix_unchecked(m))
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GaugeTransform::from_values(*s.lattice(), s.group(), values))
    }

    /// Steps until `t_end`, calling `observe` after every step.
    pub fn run_observed(&mut self, mut observe: impl FnMut(&FlowState)) -> Result<(), FlowError> {
        let n = self.steps_to(self.config.t_end);
        for _ in 0..n {
            self.step()?;
            observe(self);
        }
        Ok(())
    }

    pub fn run(&mut self) -> Result<(), FlowError> {
        self.run_observed(|_| {})
    }

    /// Remaining steps of size `dt()` needed to reach `t` (rounded to the
    /// nearest whole step).
    pub fn steps_to(&self, t: f64) -> usize {
        ((t - self.t) / self.dt).round().max(0.0) as usize
    }
}
