//! The Coulomb fixed-point iteration
//! `−d*d u^k = d*[(e^{u})⁻¹de^{u} − du] + d*[cross terms] + d*[e^{−u}Ae^{u}]`,
//! all evaluated at `u = u^{k−1}`. Its fixed points satisfy `d*a = 0` with
//! `a = apply_gauge(exp(u), A)`.

use super::{poisson_solve, Bc, Domain, GaugeError, GaugeFixConfig};
use crate::field::{
    cov_d_section, cov_grad_two_form_pointwise, curvature, d_section, d_star_one_form, AlgebraField, Connection,
    GaugeTransform, Lattice, OneForm, Section, TwoForm,
};
use crate::flow::apply_gauge;
use crate::lie::{adjoint, log, AlgebraElement};

/// Sites and edges over which a domain's norms and codifferential run.
#[derive(Clone, Debug)]
pub struct DomainMask {
    lattice: Lattice,
    /// Sites where `d*a = 0` is imposed.
    solve_site: Vec<bool>,
    /// Sites carrying norms.
    site: Vec<bool>,
    /// Edges `(x, μ)` at index `x·n + μ`.
    edge: Vec<bool>,
}

impl DomainMask {
    pub fn new(lattice: Lattice, domain: &Domain, bc: Bc) -> Self {
        let n = lattice.dim();
        match domain {
            Domain::Torus => DomainMask {
                lattice,
                solve_site: vec![true; lattice.sites()],
                site: vec![true; lattice.sites()],
                edge: vec![true; lattice.sites() * n],
            },
            Domain::Patch(p) => {
                let site: Vec<bool> = (0..lattice.sites()).map(|x| p.contains(x)).collect();
                let mut edge = vec![false; lattice.sites() * n];
                for (x, mu) in p.internal_edges() {
                    edge[x * n + mu] = true;
                }
                let solve_site = match bc {
                    Bc::DirichletZero => {
                        let mut s = vec![false; lattice.sites()];
                        p.interior().iter().for_each(|&x| s[x] = true);
                        s
                    }
                    Bc::NeumannMeanZero => site.clone(),
                };
                DomainMask {
                    lattice,
                    solve_site,
                    site,
                    edge,
                }
            }
        }
    }

    pub fn has_edge(&self, x: usize, mu: usize) -> bool {
        self.edge[x * self.lattice.dim() + mu]
    }

    pub fn has_site(&self, x: usize) -> bool {
        self.site[x]
    }

    /// Codifferential using only domain edges, evaluated on the solve sites.
    /// For the Neumann patch this drops the flux through crossing faces,
    /// which is the discrete `a·ν = 0`.
    pub fn d_star(&self, w: &OneForm) -> Section {
        let lat = &self.lattice;
        let inv_h = 1.0 / lat.spacing();
        let mut out = Section::zeros(*lat, w.group());
        for x in (0..lat.sites()).filter(|&x| self.solve_site[x]) {
            let mut acc = AlgebraElement::zero(w.group());
            for mu in 0..lat.dim() {
                let y = lat.bwd(x, mu);
                if self.has_edge(y, mu) {
                    acc += w.get(y, mu);
                }
                if self.has_edge(x, mu) {
                    acc -= w.get(x, mu);
                }
            }
            out.set(x, acc.scale(inv_h));
        }
        out
    }

    /// Zero outside the domain edges.
    pub fn mask_one_form(&self, w: &OneForm) -> OneForm {
        let mut out = w.clone();
        let n = self.lattice.dim();
        for (i, v) in out.values_mut().iter_mut().enumerate() {
            if !self.edge[i] {
                *v = AlgebraElement::zero(w.group());
            }
        }
        debug_assert_eq!(out.values().len(), self.lattice.sites() * n);
        out
    }

    pub fn section_l2_sq(&self, s: &Section) -> f64 {
        let sum: f64 = (0..self.lattice.sites()).filter(|&x| self.site[x]).map(|x| s.get(x).norm_sqr()).sum();
        sum * self.lattice.cell_volume()
    }

    pub fn section_w12(&self, s: &Section) -> f64 {
        let lat = &self.lattice;
        let inv_h = 1.0 / lat.spacing();
        let mut g = 0.0;
        for x in 0..lat.sites() {
            for mu in 0..lat.dim() {
                if self.has_edge(x, mu) {
                    g += ((s.get(lat.fwd(x, mu)) - s.get(x)).scale(inv_h)).norm_sqr();
                }
            }
        }
        (self.section_l2_sq(s) + g * lat.cell_volume()).sqrt()
    }

    pub fn one_form_l2_sq(&self, w: &OneForm) -> f64 {
        let sum: f64 = w.values().iter().zip(&self.edge).filter(|(_, &e)| e).map(|(v, _)| v.norm_sqr()).sum();
        sum * self.lattice.cell_volume()
    }

    /// `(‖w‖² + ‖∇w‖²)^{1/2}` with differences taken only between domain edges.
    pub fn one_form_w12(&self, w: &OneForm) -> f64 {
        let lat = &self.lattice;
        let inv_h = 1.0 / lat.spacing();
        let mut g = 0.0;
        for x in 0..lat.sites() {
            for lambda in 0..lat.dim() {
                let y = lat.fwd(x, lambda);
                for mu in 0..lat.dim() {
                    if self.has_edge(x, mu) && self.has_edge(y, mu) {
                        g += ((w.get(y, mu) - w.get(x, mu)).scale(inv_h)).norm_sqr();
                    }
                }
            }
        }
        (self.one_form_l2_sq(w) + g * lat.cell_volume()).sqrt()
    }

    /// `‖F‖²` over plaquettes whose four edges lie in the domain.
    pub fn two_form_l2_sq(&self, f: &TwoForm) -> f64 {
        let lat = &self.lattice;
        let mut sum = 0.0;
        for x in 0..lat.sites() {
            for (mu, nu) in lat.pairs() {
                if self.has_edge(x, mu)
                    && self.has_edge(x, nu)
                    && self.has_edge(lat.fwd(x, nu), mu)
                    && self.has_edge(lat.fwd(x, mu), nu)
                {
                    sum += f.get(x, mu, nu).norm_sqr();
                }
            }
        }
        sum * lat.cell_volume()
    }

    /// `(h^n Σ_x |A(x)|^p)^{1/p}` with `|A(x)|` over the domain edges at `x`.
    pub fn one_form_lp(&self, w: &OneForm, p: f64) -> f64 {
        let lat = &self.lattice;
        let mut sum = 0.0;
        for x in (0..lat.sites()).filter(|&x| self.site[x]) {
            let s: f64 = (0..lat.dim()).filter(|&mu| self.has_edge(x, mu)).map(|mu| w.get(x, mu).norm_sqr()).sum();
            sum += s.sqrt().powf(p);
        }
        (sum * lat.cell_volume()).powf(1.0 / p)
    }

    /// `‖∇_a F_a‖²` summed over domain sites.
    pub fn cov_grad_curvature_sq(&self, a: &Connection) -> f64 {
        let g = cov_grad_two_form_pointwise(a, &curvature(a));
        let sum: f64 = g.iter().zip(&self.site).filter(|(_, &s)| s).map(|(v, _)| v).sum();
        sum * self.lattice.cell_volume()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct GaugeFixReport {
    pub iterations: usize,
    /// `‖d*a‖` before the first iteration.
    pub initial_residual: f64,
    pub residual_history: Vec<f64>,
    pub u_norm_history: Vec<f64>,
    /// `‖u^k − u^{k−1}‖ / ‖u^{k−1} − u^{k−2}‖` in `W^{1,2}`, from `k = 2`.
    pub contraction_ratios: Vec<f64>,
    /// Norms of the three right-hand-side terms per iteration: pure-gauge
    /// remainder, cross terms, conjugated connection.
    pub term_norms: Vec<[f64; 3]>,
    pub max_unitarity_defect: f64,
    /// `w12(a) / l2(F_a)` (0 when both vanish).
    pub uhlenbeck_ratio: f64,
    pub converged: bool,
}

impl GaugeFixReport {
    pub fn final_residual(&self) -> f64 {
        self.residual_history.last().copied().unwrap_or(self.initial_residual)
    }

    /// Successive residual ratios `r_k / r_{k−1}`.
    pub fn residual_ratios(&self) -> Vec<f64> {
        let mut all = vec![self.initial_residual];
        all.extend(&self.residual_history);
        all.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "iter,residual,u_w12,contraction_ratio")?;
        writeln!(w, "0,{:e},0,", self.initial_residual)?;
        for k in 0..self.iterations {
            let ratio = if k >= 1 { format!("{:e}", self.contraction_ratios[k - 1]) } else { String::new() };
            writeln!(w, "{},{:e},{:e},{}", k + 1, self.residual_history[k], self.u_norm_history[k], ratio)?;
        }
        Ok(())
    }
}

/// Output of a gauge fix.
#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFix {
    pub u: Section,
    pub s: GaugeTransform,
    pub a: Connection,
    pub report: GaugeFixReport,
}

struct Iterate {
    s: GaugeTransform,
    a: Connection,
    residual: f64,
}

fn evaluate(a0: &Connection, u: &Section, mask: &DomainMask) -> Result<Iterate, GaugeError> {
    let s = GaugeTransform::exp_of(u);
    let a = apply_gauge(&s, a0)?;
    let residual = mask.section_l2_sq(&mask.d_star(&a)).sqrt();
    Ok(Iterate { s, a, residual })
}

/// The iteration right-hand side at `u`, split into its three terms.
fn iteration_rhs(a0: &Connection, u: &Section, it: &Iterate, mask: &DomainMask) -> Result<(Section, [f64; 3]), GaugeError> {
    let lat = *a0.lattice();
    let pure = apply_gauge(&it.s, &Connection::zeros(lat, a0.group()))?;
    let conj = Connection::from_fn(lat, a0.group(), |x, mu| adjoint(&it.s.get(x), &a0.get(x, mu)));
    let cross = it.a.sub(&pure).sub(&conj);
    let t1 = mask.d_star(&pure.sub(&d_section(u)));
    let t2 = mask.d_star(&cross);
    let t3 = mask.d_star(&conj);
    let norms = [&t1, &t2, &t3].map(|t| mask.section_l2_sq(t).sqrt());
    Ok((t1.add(&t2).add(&t3), norms))
}

/// Small-field check `‖A‖_{L^n(domain)} ≤ ε₁`.
pub fn small_field_norm(a: &Connection, domain: &Domain, bc: Bc) -> f64 {
    let mask = DomainMask::new(*a.lattice(), domain, bc);
    mask.one_form_lp(a, a.lattice().dim() as f64)
}

pub fn coulomb_fix(a: &Connection, config: &GaugeFixConfig) -> Result<GaugeFix, GaugeError> {
    coulomb_fix_from(a, config, None)
}

/// [`coulomb_fix`] started from `u0` instead of zero.
pub fn coulomb_fix_from(a0: &Connection, config: &GaugeFixConfig, u0: Option<&Section>) -> Result<GaugeFix, GaugeError> {
    config.validate()?;
    let lat = *a0.lattice();
    let mask = DomainMask::new(lat, &config.domain, config.bc);
    let norm = mask.one_form_lp(a0, lat.dim() as f64);
    if !(norm <= config.small_field_guard) {
        return Err(GaugeError::SmallField {
            norm,
            guard: config.small_field_guard,
        });
    }
    let mut u = u0.cloned().unwrap_or_else(|| Section::zeros(lat, a0.group()));
    let mut it = evaluate(a0, &u, &mask)?;
    let mut report = GaugeFixReport {
        initial_residual: it.residual,
        max_unitarity_defect: it.s.max_unitarity_defect(),
        ..GaugeFixReport::default()
    };
    let mut prev_step: Option<f64> = None;
    report.converged = it.residual <= config.tol;
    while !report.converged && report.iterations < config.max_iters {
        let (g, terms) = iteration_rhs(a0, &u, &it, &mask)?;
        let solved = poisson_solve(&g, &config.domain, config.bc)?;
        let u_new = if config.damping == 1.0 {
            solved
        } else {
            u.scale(1.0 - config.damping).axpy(config.damping, &solved)
        };
        let step = mask.section_w12(&u_new.sub(&u));
        it = evaluate(a0, &u_new, &mask)?;
        u = u_new;
        report.iterations += 1;
        report.residual_history.push(it.residual);
        report.u_norm_history.push(mask.section_w12(&u));
        report.term_norms.push(terms);
        report.max_unitarity_defect = report.max_unitarity_defect.max(it.s.max_unitarity_defect());
        if let Some(p) = prev_step {
            report.contraction_ratios.push(if p > 0.0 { step / p } else { 0.0 });
        }
        prev_step = Some(step);
        report.converged = it.residual <= config.tol;
    }
    let a = match (&config.domain, config.bc) {
        (Domain::Patch(_), Bc::NeumannMeanZero) => mask.mask_one_form(&it.a),
        _ => it.a,
    };
    let w = mask.one_form_w12(&a);
    let f = mask.two_form_l2_sq(&curvature(&a)).sqrt();
    report.uhlenbeck_ratio = if f > 0.0 {
        w / f
    } else if w == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    if !report.converged {
        return Err(GaugeError::NotConverged(Box::new(report)));
    }
    Ok(GaugeFix { u, s: it.s, a, report })
}

/// Per-sample fixes along a time family plus the integrated
/// gauge-velocity ratio.
#[derive(Clone, Debug)]
pub struct TimeFamily {
    pub fixes: Vec<GaugeFix>,
    /// `s_j = log(S_j⁻¹ S_{j+1}) / Δt_j`.
    pub velocities: Vec<Section>,
    /// `Σ Δt (‖s_j‖² + ‖D_a s_j‖²)`.
    pub numerator: f64,
    /// `Σ Δt ‖∇_a F_a‖²`.
    pub denominator: f64,
    pub ratio: f64,
    pub max_residual: f64,
}

/// Gauge-fixes each sample, warm-starting from the previous one.
pub fn coulomb_fix_time_family(
    samples: &[Connection],
    times: &[f64],
    config: &GaugeFixConfig,
) -> Result<TimeFamily, GaugeError> {
    if samples.len() != times.len() || samples.is_empty() {
        return Err(GaugeError::Config("need one time per sample and at least one sample".into()));
    }
    let lat = *samples[0].lattice();
    let mask = DomainMask::new(lat, &config.domain, config.bc);
    for (index, w) in samples.windows(2).enumerate() {
        let drift = mask.one_form_w12(&w[1].sub(&w[0]));
        if !(drift <= config.drift_guard) {
            return Err(GaugeError::Drift {
                index,
                drift,
                guard: config.drift_guard,
            });
        }
    }
    let mut fixes: Vec<GaugeFix> = Vec::with_capacity(samples.len());
    for a in samples {
        let fix = coulomb_fix_from(a, config, fixes.last().map(|f| &f.u))?;
        fixes.push(fix);
    }
    let mut velocities = Vec::new();
    let (mut numerator, mut denominator) = (0.0, 0.0);
    for j in 0..fixes.len().saturating_sub(1) {
        let dt = times[j + 1] - times[j];
        if !(dt > 0.0) {
            return Err(GaugeError::Config(format!("sample times must increase (index {j})")));
        }
        let (sj, sk) = (&fixes[j].s, &fixes[j + 1].s);
        let mut v = Section::zeros(lat, samples[0].group());
        for x in 0..lat.sites() {
            let g = sj.get(x).inverse() * sk.get(x);
            if !g.is_identity() {
                let l = log(&g).map_err(|source| GaugeError::Lie { site: x, source })?;
                v.set(x, l.scale(1.0 / dt));
            }
        }
        let a = &fixes[j].a;
        numerator += dt * (mask.section_l2_sq(&v) + mask.one_form_l2_sq(&cov_d_section(a, &v)));
        denominator += dt * mask.cov_grad_curvature_sq(a);
        velocities.push(v);
    }
    let ratio = if denominator > 0.0 {
        numerator / denominator
    } else if numerator == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    let max_residual = fixes.iter().map(|f| f.report.final_residual()).fold(0.0, f64::max);
    Ok(TimeFamily {
        fixes,
        velocities,
        numerator,
        denominator,
        ratio,
        max_residual,
    })
}

/// Global `‖d*a‖_{l2}` on the torus.
pub fn dstar_residual(a: &Connection) -> f64 {
    crate::field::l2(&d_star_one_form(a))
}
