//! End-to-end experiments: flow equivalence, stability under perturbation,
//! gauge quality along the flow, and energy decay, each over a ladder of
//! refinement levels.

use std::f64::consts::PI;
use std::fs;
use std::io;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exec;
use crate::field::{
    d_section, d_star_one_form, l2, AlgebraField, Connection, FieldError, GaugeTransform, Lattice, Section,
};
use crate::flow::{self, apply_gauge, reconstruct_raw, FlowConfig, FlowError, FlowState, TimeStep, Variant};
use crate::gauge::{coulomb_fix_time_family, poisson_solve, Bc, Domain, GaugeError, GaugeFixConfig};
use crate::lie::{AlgebraElement, Group};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("experiment config: {0}")]
    Config(String),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Gauge(#[from] GaugeError),
    #[error("writing report: {0}")]
    Io(#[from] io::Error),
}

/// Initial connection generators.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialData {
    Zero,
    /// `A_p = amplitude · sin(2π Σ k_μ x_μ / ℓ_μ)` along the polarization
    /// axis `p`, which must satisfy `k_p = 0` (divergence-free). For SU(2)
    /// the values lie along the first generator.
    AbelianMode { k: Vec<i64>, polarization: usize, amplitude: f64 },
    /// Random superposition of Fourier modes with `|m_μ| ≤ band` in every
    /// component; every component is bounded by `amplitude`.
    RandomSmooth { seed: u64, band: usize, amplitude: f64 },
    /// `S⁻¹dS` for `S = exp(u)`, `u` a random smooth section.
    PureGauge { seed: u64, band: usize, amplitude: f64 },
}

impl InitialData {
    pub fn name(&self) -> &'static str {
        match self {
            InitialData::Zero => "zero",
            InitialData::AbelianMode { .. } => "abelian_mode",
            InitialData::RandomSmooth { .. } => "random_smooth",
            InitialData::PureGauge { .. } => "pure_gauge",
        }
    }

    fn band(&self) -> Option<usize> {
        match self {
            InitialData::RandomSmooth { band, .. } | InitialData::PureGauge { band, .. } => Some(*band),
            InitialData::AbelianMode { k, .. } => Some(k.iter().map(|v| v.unsigned_abs() as usize).max().unwrap_or(0)),
            InitialData::Zero => None,
        }
    }

    pub fn validate(&self, lat: &Lattice) -> Result<(), HarnessError> {
        if let Some(b) = self.band() {
            let l_min = lat.extents().iter().copied().min().unwrap_or(0);
            if 4 * b >= l_min {
                return Err(HarnessError::Config(format!(
                    "{}: mode band {b} must stay below L/4 = {} on the coarsest lattice",
                    self.name(),
                    l_min as f64 / 4.0
                )));
            }
        }
        match self {
            InitialData::AbelianMode { k, polarization, amplitude } => {
                if k.len() != lat.dim() {
                    return Err(HarnessError::Config(format!("abelian_mode: k has {} entries, lattice dimension {}", k.len(), lat.dim())));
                }
                if *polarization >= lat.dim() || k[*polarization] != 0 {
                    return Err(HarnessError::Config("abelian_mode: polarization axis needs k_p = 0".into()));
                }
                check_amplitude(*amplitude)
            }
            InitialData::RandomSmooth { amplitude, .. } | InitialData::PureGauge { amplitude, .. } => check_amplitude(*amplitude),
            InitialData::Zero => Ok(()),
        }
    }

    pub fn generate(&self, lat: Lattice, group: Group) -> Result<Connection, HarnessError> {
        self.validate(&lat)?;
        Ok(match self {
            InitialData::Zero => Connection::zeros(lat, group),
            InitialData::AbelianMode { k, polarization, amplitude } => {
                let t = group.generator(0);
                Connection::from_fn(lat, group, |x, mu| {
                    if mu != *polarization {
                        return t.scale(0.0);
                    }
                    let p = lat.position(x);
                    let phase: f64 = (0..lat.dim()).map(|i| k[i] as f64 * p[i] / lat.side_length(i)).sum();
                    t.scale(amplitude * (2.0 * PI * phase).sin())
                })
            }
            InitialData::RandomSmooth { seed, band, amplitude } => {
                let modes = SmoothModes::new(*seed, *band, lat.dim(), lat.dim(), group.algebra_dim());
                Connection::from_fn(lat, group, |x, mu| {
                    let mut p = lat.position(x);
                    p[mu] += 0.5 * lat.spacing();
                    modes.eval(&lat, group, mu, &p).scale(*amplitude)
                })
            }
            InitialData::PureGauge { seed, band, amplitude } => {
                let u = smooth_section(lat, group, *seed, *band, *amplitude);
                apply_gauge(&GaugeTransform::exp_of(&u), &Connection::zeros(lat, group))?
            }
        })
    }
}

fn check_amplitude(a: f64) -> Result<(), HarnessError> {
    if a.is_finite() && a >= 0.0 {
        Ok(())
    } else {
        Err(HarnessError::Config(format!("amplitude {a} must be finite and non-negative")))
    }
}

/// Random Fourier coefficients, drawn in a fixed order that depends only on
/// the seed, band and shape, never on the lattice size.
struct SmoothModes {
    modes: Vec<[i64; 4]>,
    // coef[(component · algebra_dim + a) · modes + m] = (weight, phase)
    coef: Vec<(f64, f64)>,
    algebra_dim: usize,
    dim: usize,
}

impl SmoothModes {
    fn new(seed: u64, band: usize, dim: usize, components: usize, algebra_dim: usize) -> Self {
        let b = band as i64;
        let mut modes = Vec::new();
        let mut m = [0i64; 4];
        let count = (2 * band + 1).pow(dim as u32);
        for idx in 0..count {
            let mut r = idx;
            for slot in m.iter_mut().take(dim) {
                *slot = (r % (2 * band + 1)) as i64 - b;
                r /= 2 * band + 1;
            }
            modes.push(m);
        }
        let weight = |m: &[i64; 4]| 1.0 / (1.0 + m.iter().map(|v| (v * v) as f64).sum::<f64>());
        let norm: f64 = modes.iter().map(weight).sum();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut coef = Vec::with_capacity(components * algebra_dim * modes.len());
        for _ in 0..components * algebra_dim {
            for m in &modes {
                let u: f64 = rng.gen_range(-1.0..1.0);
                let phase: f64 = rng.gen_range(0.0..2.0 * PI);
                coef.push((u * weight(m) / norm, phase));
            }
        }
        SmoothModes { modes, coef, algebra_dim, dim }
    }

    fn eval(&self, lat: &Lattice, group: Group, component: usize, p: &[f64; 4]) -> AlgebraElement {
        let nm = self.modes.len();
        let mut c = [0.0; 3];
        for (a, slot) in c.iter_mut().enumerate().take(self.algebra_dim) {
            let base = (component * self.algebra_dim + a) * nm;
            *slot = self
                .modes
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let arg: f64 = (0..self.dim).map(|mu| m[mu] as f64 * p[mu] / lat.side_length(mu)).sum();
                    let (w, ph) = self.coef[base + i];
                    w * (2.0 * PI * arg + ph).cos()
                })
                .sum();
        }
        AlgebraElement::from_coords(group, &c[..self.algebra_dim])
    }
}

/// Band-limited random section with every component bounded by `amplitude`.
pub fn smooth_section(lat: Lattice, group: Group, seed: u64, band: usize, amplitude: f64) -> Section {
    let modes = SmoothModes::new(seed, band, lat.dim(), 1, group.algebra_dim());
    Section::from_fn(lat, group, |x| modes.eval(&lat, group, 0, &lat.position(x)).scale(amplitude))
}

/// Divergence-free part of a band-limited random 1-form, normalized to unit
/// `l2` norm. The gradient part is removed with the torus Poisson solve.
pub fn divergence_free_perturbation(lat: Lattice, group: Group, seed: u64, band: usize) -> Result<Connection, HarnessError> {
    let w = InitialData::RandomSmooth { seed, band, amplitude: 1.0 }.generate(lat, group)?;
    // d*(w − du) = 0  ⇔  −d*d u = −d*w.
    let u = poisson_solve(&d_star_one_form(&w).scale(-1.0), &Domain::Torus, Bc::NeumannMeanZero)?;
    let b = w.sub(&d_section(&u));
    let n = l2(&b);
    if !(n > 0.0) {
        return Err(HarnessError::Config(format!("perturbation seed {seed} has no divergence-free part")));
    }
    Ok(b.scale(1.0 / n))
}

/// How successive levels refine.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Refinement {
    /// Extents double and `h` halves; the step size follows the config
    /// (an automatic step therefore shrinks by 4).
    Joint,
    /// Lattice fixed; the level-0 step size halves each level.
    TimeStep,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentSpec {
    pub name: String,
    /// Level-0 extents.
    pub extents: Vec<usize>,
    /// Level-0 spacing.
    pub spacing: f64,
    pub group: Group,
    pub initial: InitialData,
    pub flow: FlowConfig,
    pub levels: usize,
    pub refinement: Refinement,
    /// Number of sample intervals for time-sampled measurements.
    pub samples: usize,
    pub gauge: GaugeFixConfig,
}

impl ExperimentSpec {
    pub fn new(name: &str, lattice: Lattice, group: Group, initial: InitialData) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            extents: lattice.extents().to_vec(),
            spacing: lattice.spacing(),
            group,
            initial,
            flow: FlowConfig::default(),
            levels: 1,
            refinement: Refinement::Joint,
            samples: 10,
            gauge: GaugeFixConfig::default(),
        }
    }

    pub fn lattice(&self, level: usize) -> Result<Lattice, HarnessError> {
        match self.refinement {
            Refinement::Joint => {
                let f = 1usize << level;
                let ext: Vec<usize> = self.extents.iter().map(|e| e * f).collect();
                Ok(Lattice::new(&ext, self.spacing / f as f64)?)
            }
            Refinement::TimeStep => Ok(Lattice::new(&self.extents, self.spacing)?),
        }
    }

    pub fn flow_config(&self, level: usize) -> Result<FlowConfig, HarnessError> {
        let mut cfg = self.flow;
        if self.refinement == Refinement::TimeStep {
            let dt0 = self.flow.step_size(&self.lattice(0)?)?;
            cfg.dt = TimeStep::Fixed(dt0 / (1u64 << level) as f64);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.levels == 0 {
            return Err(HarnessError::Config("refinement levels must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(HarnessError::Config("samples must be at least 1".into()));
        }
        let lat = self.lattice(0)?;
        self.initial.validate(&lat)?;
        for l in 0..self.levels {
            self.flow_config(l)?.step_size(&self.lattice(l)?)?;
        }
        self.gauge.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelReport {
    pub level: usize,
    pub extents: Vec<usize>,
    pub spacing: f64,
    pub dt: f64,
    pub steps: usize,
    pub values: Vec<(String, f64)>,
}

impl LevelReport {
    pub fn get(&self, key: &str) -> Option<f64> {
        self.values.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub name: String,
    pub experiment: String,
    pub levels: Vec<LevelReport>,
    /// `log₂(e_l / e_{l+1})` per measured quantity.
    pub orders: Vec<(String, Vec<f64>)>,
    pub checks: Vec<Check>,
    /// Set when a level stopped early; measurements up to the stop are kept.
    pub aborted: Option<String>,
    #[serde(skip)]
    pub tables: Vec<(String, String)>,
}

impl ExperimentReport {
    fn new(spec: &ExperimentSpec, experiment: &str) -> Self {
        ExperimentReport {
            name: spec.name.clone(),
            experiment: experiment.to_string(),
            levels: Vec::new(),
            orders: Vec::new(),
            checks: Vec::new(),
            aborted: None,
            tables: Vec::new(),
        }
    }

    pub fn pass(&self) -> bool {
        self.aborted.is_none() && self.checks.iter().all(|c| c.pass)
    }

    pub fn order(&self, key: &str) -> Option<&[f64]> {
        self.orders.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_slice())
    }

    /// Records `log₂` ratios of `key` across levels (needs ≥ 2 levels).
    fn add_order(&mut self, key: &str) -> Option<f64> {
        if self.levels.len() < 2 {
            return None;
        }
        let v: Vec<f64> = self.levels.iter().map(|l| l.get(key).unwrap_or(f64::NAN)).collect();
        let o: Vec<f64> = v.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
        let min = o.iter().copied().fold(f64::INFINITY, f64::min);
        self.orders.push((key.to_string(), o));
        Some(min)
    }

    fn check_at_least(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound,
            pass: value >= bound,
        });
    }

    fn check_at_most(&mut self, name: &str, value: f64, bound: f64) {
        self.checks.push(Check {
            name: name.to_string(),
            value,
            bound,
            pass: value <= bound,
        });
    }

    /// Writes `summary.json` and every CSV table into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), HarnessError> {
        fs::create_dir_all(dir)?;
        let json = serde_json::to_string_pretty(self).map_err(io::Error::other)?;
        fs::write(dir.join("summary.json"), json + "\n")?;
        for (file, body) in &self.tables {
            fs::write(dir.join(file), body)?;
        }
        Ok(())
    }
}

/// Runs `f` on every level, concurrently unless serial mode is set.
fn map_levels<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    if exec::is_serial() {
        (0..n).map(f).collect()
    } else {
        (0..n).into_par_iter().map(f).collect()
    }
}

/// Relative-error floor so identically zero solutions compare as equal.
const REL_FLOOR: f64 = 1e-300;

fn rel(diff: f64, base: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / (base + REL_FLOOR)
    }
}

pub const EQUIVALENCE_MIN_ORDER: f64 = 1.0;
pub const ENERGY_MIN_ORDER: f64 = 1.0;
pub const MONOTONE_TOL: f64 = 1e-12;
pub const LINEARITY_TOL: f64 = 0.2;
pub const AMPLIFICATION_MAX: f64 = 3.0;
pub const FAMILY_RESIDUAL_MAX: f64 = 1e-8;
pub const RATIO_CHANGE_MAX: f64 = 0.5;

struct LevelRun<T> {
    report: LevelReport,
    extra: T,
    error: Option<String>,
}

/// Raw flow against the DeTurck flow plus gauge ODE, reconstructed.
pub fn run_equivalence(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let runs = map_levels(spec.levels, |level| -> Result<LevelRun<String>, HarnessError> {
        let lat = spec.lattice(level)?;
        let a0 = spec.initial.generate(lat, spec.group)?;
        let cfg = spec.flow_config(level)?;
        let mut raw = FlowState::new(a0.clone(), FlowConfig { variant: Variant::Raw, ..cfg })?;
        let mut det = FlowState::new(a0, FlowConfig { variant: Variant::DeTurck, ..cfg })?;
        let n = raw.steps_to(cfg.t_end);
        let stride = (n / spec.samples).max(1);
        let mut err = 0.0f64;
        let mut csv = String::from("step,t,rel_error\n");
        let mut error = None;
        for k in 1..=n {
            if let Err(e) = raw.step().map(|_| ()).and_then(|_| det.step().map(|_| ())) {
                error = Some(format!("level {level}: {e}"));
                break;
            }
            if k % stride == 0 || k == n {
                let rec = reconstruct_raw(
                    std::slice::from_ref(det.connection()),
                    std::slice::from_ref(det.gauge().expect("DeTurck gauge")),
                )?
                .pop()
                .expect("one sample");
                let e = rel(l2(&rec.sub(raw.connection())), l2(raw.connection()));
                err = err.max(e);
                csv += &format!("{k},{:e},{e:e}\n", raw.time());
            }
        }
        Ok(LevelRun {
            report: LevelReport {
                level,
                extents: lat.extents().to_vec(),
                spacing: lat.spacing(),
                dt: raw.dt(),
                steps: raw.steps(),
                values: vec![("rel_error".into(), err)],
            },
            extra: csv,
            error,
        })
    });
    let mut rep = ExperimentReport::new(spec, "equivalence");
    for r in runs {
        let r = r?;
        rep.tables.push((format!("equivalence_level{}.csv", r.report.level), r.extra));
        if rep.aborted.is_none() {
            rep.aborted = r.error;
        }
        rep.levels.push(r.report);
    }
    if let Some(o) = rep.add_order("rel_error") {
        let all_zero = rep.levels.iter().all(|l| l.get("rel_error") == Some(0.0));
        rep.check_at_least("equivalence_order", if all_zero { f64::INFINITY } else { o }, EQUIVALENCE_MIN_ORDER);
    }
    Ok(rep)
}

/// Samples `(times, connections)` of a raw run at `samples` evenly spaced
/// step counts, including `t = 0`.
fn sampled_run(a0: Connection, cfg: FlowConfig, samples: usize) -> Result<(Vec<f64>, Vec<Connection>), FlowError> {
    let mut st = FlowState::new(a0, cfg)?;
    let n = st.steps_to(cfg.t_end);
    let stride = (n / samples).max(1);
    let mut times = vec![0.0];
    let mut conns = vec![st.connection().clone()];
    for k in 1..=n {
        st.step()?;
        if k % stride == 0 {
            times.push(st.time());
            conns.push(st.connection().clone());
        }
    }
    Ok((times, conns))
}

/// Twin runs from `A₀` and `A₀ + δ b₀`, both Coulomb-fixed along time.
pub fn run_uniqueness(spec: &ExperimentSpec, deltas: &[f64], perturbation_seed: u64) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    if deltas.is_empty() || deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        return Err(HarnessError::Config("delta list must be non-empty, finite and non-negative".into()));
    }
    let lat = spec.lattice(0)?;
    let cfg = spec.flow_config(0)?;
    let a0 = spec.initial.generate(lat, spec.group)?;
    let band = spec.initial.band().unwrap_or(1).max(1);
    let b0 = divergence_free_perturbation(lat, spec.group, perturbation_seed, band)?;
    let (times, base) = sampled_run(a0.clone(), cfg, spec.samples)?;
    let fam1 = coulomb_fix_time_family(&base, &times, &spec.gauge)?;
    let per_delta = map_levels(deltas.len(), |i| -> Result<(LevelReport, String), HarnessError> {
        let delta = deltas[i];
        let start = if delta == 0.0 { a0.clone() } else { a0.axpy(delta, &b0) };
        let (_, pert) = sampled_run(start, cfg, spec.samples)?;
        let fam2 = coulomb_fix_time_family(&pert, &times, &spec.gauge)?;
        let mut sup_b = 0.0f64;
        let mut sup_sigma = 0.0f64;
        let mut bitwise_zero = true;
        let mut csv = String::from("t,b_w12,sigma_l2\n");
        let b_init = crate::field::w12(&fam2.fixes[0].a.sub(&fam1.fixes[0].a));
        for j in 0..times.len() {
            let b = fam2.fixes[j].a.sub(&fam1.fixes[j].a);
            bitwise_zero &= b.values().iter().all(|v| v.is_zero());
            let bn = crate::field::w12(&b);
            let sn = if j < fam1.velocities.len() { l2(&fam2.velocities[j].sub(&fam1.velocities[j])) } else { 0.0 };
            sup_b = sup_b.max(bn);
            sup_sigma = sup_sigma.max(sn);
            csv += &format!("{:e},{bn:e},{sn:e}\n", times[j]);
        }
        let amp = if b_init > 0.0 { sup_b / b_init } else { 0.0 };
        Ok((
            LevelReport {
                level: i,
                extents: lat.extents().to_vec(),
                spacing: lat.spacing(),
                dt: cfg.step_size(&lat)?,
                steps: times.len() - 1,
                values: vec![
                    ("delta".into(), delta),
                    ("sup_b_w12".into(), sup_b),
                    ("sup_sigma_l2".into(), sup_sigma),
                    ("b0_w12".into(), b_init),
                    ("amplification".into(), amp),
                    ("bitwise_zero".into(), if bitwise_zero { 1.0 } else { 0.0 }),
                ],
            },
            csv,
        ))
    });
    let mut rep = ExperimentReport::new(spec, "uniqueness");
    let mut table = String::from("delta,sup_b_w12,sup_b_over_delta,sup_sigma_l2,amplification\n");
    for r in per_delta {
        let (lv, csv) = r?;
        let d = lv.get("delta").unwrap_or(0.0);
        let sb = lv.get("sup_b_w12").unwrap_or(f64::NAN);
        table += &format!(
            "{d:e},{sb:e},{:e},{:e},{:e}\n",
            if d > 0.0 { sb / d } else { 0.0 },
            lv.get("sup_sigma_l2").unwrap_or(f64::NAN),
            lv.get("amplification").unwrap_or(f64::NAN)
        );
        rep.tables.push((format!("uniqueness_delta{}.csv", lv.level), csv));
        rep.levels.push(lv);
    }
    rep.tables.push(("uniqueness_linearity.csv".into(), table));
    for lv in &rep.levels.clone() {
        let d = lv.get("delta").unwrap_or(0.0);
        if d == 0.0 {
            rep.check_at_least("zero_delta_bitwise", lv.get("bitwise_zero").unwrap_or(0.0), 1.0);
        } else {
            rep.check_at_most(&format!("amplification_delta_{d:e}"), lv.get("amplification").unwrap_or(f64::NAN), AMPLIFICATION_MAX);
        }
    }
    let slopes: Vec<f64> = rep
        .levels
        .iter()
        .filter_map(|l| {
            let d = l.get("delta")?;
            (d > 0.0).then(|| l.get("sup_b_w12").unwrap_or(f64::NAN) / d)
        })
        .collect();
    if slopes.len() >= 2 {
        let dev = slopes.windows(2).map(|w| (w[1] / w[0] - 1.0).abs()).fold(0.0, f64::max);
        rep.check_at_most("delta_linearity", dev, LINEARITY_TOL);
    }
    Ok(rep)
}

/// Coulomb-fixed time family along a raw run at every level.
pub fn run_gauge_quality(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let runs = map_levels(spec.levels, |level| -> Result<LevelRun<String>, HarnessError> {
        let lat = spec.lattice(level)?;
        let a0 = spec.initial.generate(lat, spec.group)?;
        let cfg = spec.flow_config(level)?;
        let (times, samples) = sampled_run(a0, cfg, spec.samples)?;
        let fam = coulomb_fix_time_family(&samples, &times, &spec.gauge)?;
        let mut csv = String::from("t,dstar_residual,iterations,uhlenbeck_ratio\n");
        let mut max_uh = 0.0f64;
        for (t, f) in times.iter().zip(&fam.fixes) {
            max_uh = max_uh.max(f.report.uhlenbeck_ratio);
            csv += &format!(
                "{t:e},{:e},{},{:e}\n",
                f.report.final_residual(),
                f.report.iterations,
                f.report.uhlenbeck_ratio
            );
        }
        Ok(LevelRun {
            report: LevelReport {
                level,
                extents: lat.extents().to_vec(),
                spacing: lat.spacing(),
                dt: cfg.step_size(&lat)?,
                steps: times.len() - 1,
                values: vec![
                    ("max_dstar_residual".into(), fam.max_residual),
                    ("max_uhlenbeck_ratio".into(), max_uh),
                    ("velocity_ratio".into(), fam.ratio),
                    ("velocity_numerator".into(), fam.numerator),
                    ("velocity_denominator".into(), fam.denominator),
                ],
            },
            extra: csv,
            error: None,
        })
    });
    let mut rep = ExperimentReport::new(spec, "gauge_quality");
    for r in runs {
        let r = r?;
        rep.tables.push((format!("gauge_quality_level{}.csv", r.report.level), r.extra));
        rep.levels.push(r.report);
    }
    let max_res = rep.levels.iter().filter_map(|l| l.get("max_dstar_residual")).fold(0.0, f64::max);
    rep.check_at_most("max_dstar_residual", max_res, FAMILY_RESIDUAL_MAX);
    let ratios: Vec<f64> = rep.levels.iter().filter_map(|l| l.get("velocity_ratio")).collect();
    rep.check_at_most(
        "velocity_ratio_finite",
        if ratios.iter().all(|r| r.is_finite()) { 0.0 } else { 1.0 },
        0.0,
    );
    if ratios.len() >= 2 {
        let change = ratios
            .windows(2)
            .map(|w| if w[0] == 0.0 && w[1] == 0.0 { 0.0 } else { (w[1] / w[0] - 1.0).abs() })
            .fold(0.0, f64::max);
        rep.check_at_most("velocity_ratio_change", change, RATIO_CHANGE_MAX);
    }
    Ok(rep)
}

/// Full diagnostic record, monotonicity and energy-identity order.
pub fn run_energy_decay(spec: &ExperimentSpec) -> Result<ExperimentReport, HarnessError> {
    spec.validate()?;
    let runs = map_levels(spec.levels, |level| -> Result<LevelRun<String>, HarnessError> {
        let lat = spec.lattice(level)?;
        let a0 = spec.initial.generate(lat, spec.group)?;
        let cfg = spec.flow_config(level)?;
        let mut st = FlowState::new(a0, cfg)?;
        let error = st.run().err().map(|e| format!("level {level}: {e}"));
        let hist = st.history();
        let e0 = hist[0].ym_energy;
        let max_increase = hist
            .windows(2)
            .map(|w| w[1].ym_energy - w[0].ym_energy)
            .fold(0.0, f64::max);
        let mut csv = Vec::new();
        flow::write_csv(&mut csv, hist).expect("writing to a Vec cannot fail");
        Ok(LevelRun {
            report: LevelReport {
                level,
                extents: lat.extents().to_vec(),
                spacing: lat.spacing(),
                dt: st.dt(),
                steps: st.steps(),
                values: vec![
                    ("initial_energy".into(), e0),
                    ("final_energy".into(), st.energy()),
                    ("identity_residual".into(), st.energy_identity_residual()),
                    ("max_energy_increase".into(), max_increase),
                    ("monotone_tol".into(), MONOTONE_TOL * e0.max(1.0)),
                ],
            },
            extra: String::from_utf8(csv).expect("ascii csv"),
            error,
        })
    });
    let mut rep = ExperimentReport::new(spec, "energy_decay");
    for r in runs {
        let r = r?;
        rep.tables.push((format!("diagnostics_level{}.csv", r.report.level), r.extra));
        if rep.aborted.is_none() {
            rep.aborted = r.error;
        }
        rep.levels.push(r.report);
    }
    for lv in rep.levels.clone() {
        let tol = lv.get("monotone_tol").unwrap_or(MONOTONE_TOL);
        rep.check_at_most(&format!("monotone_level{}", lv.level), lv.get("max_energy_increase").unwrap_or(f64::NAN), tol);
    }
    if let Some(o) = rep.add_order("identity_residual") {
        let all_zero = rep.levels.iter().all(|l| l.get("identity_residual") == Some(0.0));
        rep.check_at_least("identity_residual_order", if all_zero { f64::INFINITY } else { o }, ENERGY_MIN_ORDER);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(lat: Lattice, group: Group, init: InitialData) -> ExperimentSpec {
        ExperimentSpec::new("t", lat, group, init)
    }

    #[test]
    fn band_limit_enforced() {
        let lat = Lattice::cubic(2, 8, 0.125).unwrap();
        let bad = InitialData::RandomSmooth { seed: 1, band: 2, amplitude: 0.1 };
        assert!(bad.generate(lat, Group::Su2).is_err());
        let ok = InitialData::RandomSmooth { seed: 1, band: 1, amplitude: 0.1 };
        assert!(ok.generate(lat, Group::Su2).is_ok());
        let mode = InitialData::AbelianMode { k: vec![1, 1], polarization: 0, amplitude: 0.1 };
        assert!(mode.generate(lat, Group::U1).is_err());
    }

    #[test]
    fn random_smooth_resolves_the_same_field() {
        // The coarse lattice's edge midpoints are a subset of the fine one's.
        let init = InitialData::RandomSmooth { seed: 7, band: 1, amplitude: 0.3 };
        let coarse = Lattice::cubic(2, 8, 0.125).unwrap();
        let fine = Lattice::cubic(2, 16, 0.0625).unwrap();
        let a = init.generate(coarse, Group::Su2).unwrap();
        let b = init.generate(fine, Group::Su2).unwrap();
        let x = coarse.site(&[3, 5]);
        let y = fine.site(&[6, 10]);
        // Along axis 1 the coarse midpoint is a fine site offset by +h_f/2.
        let on_fine = |mu: usize| {
            let modes = SmoothModes::new(7, 1, 2, 2, 3);
            let mut p = fine.position(y);
            p[mu] += 0.0625;
            modes.eval(&fine, Group::Su2, mu, &p).scale(0.3)
        };
        for mu in 0..2 {
            assert!((a.get(x, mu) - on_fine(mu)).norm() < 1e-14);
        }
        assert!(crate::field::max_norm(&b) <= 0.3 * 2f64.sqrt() * 3f64.sqrt());
    }

    #[test]
    fn perturbation_is_divergence_free_unit() {
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let b = divergence_free_perturbation(lat, Group::Su2, 3, 2).unwrap();
        assert!((l2(&b) - 1.0).abs() < 1e-12);
        assert!(l2(&d_star_one_form(&b)) < 1e-10);
    }

    #[test]
    fn zero_data_is_trivial_everywhere() {
        let lat = Lattice::cubic(2, 8, 0.125).unwrap();
        let mut s = spec(lat, Group::Su2, InitialData::Zero);
        s.levels = 2;
        s.flow.t_end = 0.005;
        let eq = run_equivalence(&s).unwrap();
        assert!(eq.levels.iter().all(|l| l.get("rel_error") == Some(0.0)));
        assert!(eq.pass());
        let en = run_energy_decay(&s).unwrap();
        assert!(en.levels.iter().all(|l| l.get("final_energy") == Some(0.0)));
        let gq = run_gauge_quality(&s).unwrap();
        assert_eq!(gq.levels[0].get("velocity_ratio"), Some(0.0));
        assert!(gq.pass());
    }

    #[test]
    fn pure_gauge_is_flat() {
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let a = InitialData::PureGauge { seed: 2, band: 1, amplitude: 0.5 }.generate(lat, Group::Su2).unwrap();
        assert!(l2(&a) > 0.1);
        // Flat up to the discretization of the curvature, not exactly.
        assert!(flow::energy(&a) < 1e-2 * l2(&a).powi(2));
    }

    #[test]
    fn abelian_energy_follows_discrete_symbol() {
        let lat = Lattice::cubic(2, 16, 1.0 / 16.0).unwrap();
        let mut s = spec(lat, Group::U1, InitialData::AbelianMode { k: vec![0, 2], polarization: 0, amplitude: 0.4 });
        s.flow.t_end = 0.002;
        let rep = run_energy_decay(&s).unwrap();
        let lv = &rep.levels[0];
        let h = lat.spacing();
        let lambda = 4.0 / (h * h) * (PI * 2.0 / 16.0).sin().powi(2);
        let factor = (1.0 - lv.dt * lambda).powi(2 * lv.steps as i32);
        let expected = lv.get("initial_energy").unwrap() * factor;
        assert!((lv.get("final_energy").unwrap() - expected).abs() <= 1e-10 * expected);
    }

    #[test]
    fn spec_validation() {
        let lat = Lattice::cubic(2, 8, 0.125).unwrap();
        let mut s = spec(lat, Group::U1, InitialData::Zero);
        s.levels = 0;
        assert!(run_energy_decay(&s).is_err());
        s.levels = 1;
        s.flow.dt = TimeStep::Fixed(1.0);
        assert!(matches!(run_energy_decay(&s), Err(HarnessError::Flow(FlowError::Cfl { .. }))));
    }
}
