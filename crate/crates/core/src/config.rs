//! Run configuration from TOML.
//!
//! Every violation is collected before reporting; unknown keys name the
//! nearest valid key. Relative paths resolve against the config file's
//! directory.
//!
//! ```toml
//! group = "su2"              # u1 | su2
//! output = "out"
//! snapshot_every = 0         # steps between connection snapshots (0: off)
//!
//! [lattice]
//! extents = [16, 16]         # or: dim = 2, extent = 16
//! spacing = 0.0625
//!
//! [initial]
//! kind = "random_smooth"     # zero | abelian_mode | random_smooth | pure_gauge | snapshot
//! seed = 1
//! band = 1
//! amplitude = 0.1
//! k = [0, 1]                 # abelian_mode
//! polarization = 0           # abelian_mode
//! path = "a0.ymf"            # snapshot
//!
//! [flow]
//! variant = "raw"            # raw | deturck
//! scheme = "euler"           # euler | rk4
//! dt = "auto"                # or a number
//! cfl_safety = 0.5
//! t_end = 0.01
//! reproject_every = 1
//!
//! [gauge]
//! domain = "torus"           # torus | patch
//! center = [8, 8]            # patch
//! radius = 0.3               # patch
//! bc = "neumann"             # neumann | dirichlet
//! max_iters = 200
//! tol = 1e-10
//! damping = 1.0
//! small_field_guard = 0.1
//! drift_guard = 0.05
//!
//! [experiment]
//! levels = 1
//! refinement = "joint"       # joint | timestep
//! samples = 10
//! deltas = [0.0, 1e-2, 1e-3, 1e-4]
//! perturbation_seed = 99
//!
//! [monitors]
//! select = ["local_energy", "eps_regularity", "singular", "bianchi"]
//! radius = 0.125             # local energy R (needs 2R below half the side)
//! r0 = 0.125                 # eps-regularity radius
//! eps0 = 0.5
//! radii = [0.0625, 0.125]
//! late_frames = 3
//! frame_every = 1
//! local_energy_bound = 10.0  # optional
//! eps_regularity_bound = 10.0 # optional
//! ```

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::field::{BallPatch, Lattice};
use crate::flow::{FlowConfig, FlowError, Scheme, TimeStep, Variant};
use crate::gauge::{Bc, Domain, GaugeFixConfig};
use crate::harness::{InitialData, Refinement};
use crate::lie::Group;

#[derive(Clone, Debug, PartialEq)]
pub enum InitialSource {
    Generated(InitialData),
    Snapshot(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub levels: usize,
    pub refinement: Refinement,
    pub samples: usize,
    pub deltas: Vec<f64>,
    pub perturbation_seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MonitorKind {
    LocalEnergy,
    EpsRegularity,
    Singular,
    Bianchi,
}

impl MonitorKind {
    pub const ALL: [MonitorKind; 4] = [
        MonitorKind::LocalEnergy,
        MonitorKind::EpsRegularity,
        MonitorKind::Singular,
        MonitorKind::Bianchi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MonitorKind::LocalEnergy => "local_energy",
            MonitorKind::EpsRegularity => "eps_regularity",
            MonitorKind::Singular => "singular",
            MonitorKind::Bianchi => "bianchi",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MonitorConfig {
    pub select: Vec<MonitorKind>,
    pub radius: f64,
    pub r0: f64,
    pub eps0: f64,
    pub radii: Vec<f64>,
    pub late_frames: usize,
    pub frame_every: usize,
    pub local_energy_bound: Option<f64>,
    pub eps_regularity_bound: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub lattice: Lattice,
    pub group: Group,
    pub initial: InitialSource,
    pub flow: FlowConfig,
    pub gauge: GaugeFixConfig,
    pub experiment: ExperimentConfig,
    pub monitors: MonitorConfig,
    pub output: PathBuf,
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConfigError {
    Io(String),
    Syntax(String),
    Invalid(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(m) => write!(f, "cannot read config: {m}"),
            ConfigError::Syntax(m) => write!(f, "config is not valid TOML: {m}"),
            ConfigError::Invalid(v) => {
                write!(f, "{} config violation(s):", v.len())?;
                for e in v {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

impl ConfigError {
    pub fn violations(&self) -> &[String] {
        match self {
            ConfigError::Invalid(v) => v,
            _ => &[],
        }
    }
}

const TOP_KEYS: &[&str] = &["group", "output", "snapshot_every", "lattice", "initial", "flow", "gauge", "experiment", "monitors"];
const LATTICE_KEYS: &[&str] = &["extents", "dim", "extent", "spacing"];
const INITIAL_KEYS: &[&str] = &["kind", "seed", "band", "amplitude", "k", "polarization", "path"];
const FLOW_KEYS: &[&str] = &["variant", "scheme", "dt", "cfl_safety", "t_end", "reproject_every"];
const GAUGE_KEYS: &[&str] = &["domain", "center", "radius", "bc", "max_iters", "tol", "damping", "small_field_guard", "drift_guard"];
const EXPERIMENT_KEYS: &[&str] = &["levels", "refinement", "samples", "deltas", "perturbation_seed"];
const MONITOR_KEYS: &[&str] = &[
    "select",
    "radius",
    "r0",
    "eps0",
    "radii",
    "late_frames",
    "frame_every",
    "local_energy_bound",
    "eps_regularity_bound",
];

fn nearest<'a>(key: &str, valid: &[&'a str]) -> &'a str {
    valid
        .iter()
        .copied()
        .min_by_key(|v| strsim::levenshtein(key, v))
        .unwrap_or("")
}

/// Reads typed values out of one table, recording every problem.
struct Reader<'a> {
    section: &'static str,
    table: Option<&'a Table>,
    errs: Vec<String>,
}

impl<'a> Reader<'a> {
    fn new(section: &'static str, table: Option<&'a Table>, known: &[&str]) -> Self {
        let mut errs = Vec::new();
        if let Some(t) = table {
            for k in t.keys() {
                if !known.contains(&k.as_str()) {
                    errs.push(format!(
                        "unknown key `{}`; nearest valid key is `{}`",
                        path(section, k),
                        path(section, nearest(k, known))
                    ));
                }
            }
        }
        Reader { section, table, errs }
    }

    fn raw(&self, key: &str) -> Option<&'a Value> {
        self.table.and_then(|t| t.get(key))
    }

    fn err(&mut self, key: &str, msg: impl fmt::Display) {
        self.errs.push(format!("`{}`: {msg}", path(self.section, key)));
    }

    fn f64(&mut self, key: &str) -> Option<f64> {
        match self.raw(key)? {
            Value::Float(v) => Some(*v),
            Value::Integer(v) => Some(*v as f64),
            other => {
                self.err(key, format!("expected a number, found {}", other.type_str()));
                None
            }
        }
    }

    fn int(&mut self, key: &str) -> Option<i64> {
        match self.raw(key)? {
            Value::Integer(v) => Some(*v),
            other => {
                self.err(key, format!("expected an integer, found {}", other.type_str()));
                None
            }
        }
    }

    fn uint(&mut self, key: &str) -> Option<usize> {
        let v = self.int(key)?;
        if v < 0 {
            self.err(key, format!("must be non-negative, got {v}"));
            return None;
        }
        Some(v as usize)
    }

    fn str(&mut self, key: &str) -> Option<&'a str> {
        match self.raw(key)? {
            Value::String(s) => Some(s.as_str()),
            other => {
                self.err(key, format!("expected a string, found {}", other.type_str()));
                None
            }
        }
    }

    fn choice<T: Copy>(&mut self, key: &str, options: &[(&str, T)]) -> Option<T> {
        let s = self.str(key)?;
        match options.iter().find(|(n, _)| *n == s) {
            Some((_, v)) => Some(*v),
            None => {
                let names: Vec<&str> = options.iter().map(|(n, _)| *n).collect();
                self.err(key, format!("`{s}` is not one of {}; nearest is `{}`", names.join(" | "), nearest(s, &names)));
                None
            }
        }
    }

    fn array(&mut self, key: &str) -> Option<&'a [Value]> {
        match self.raw(key)? {
            Value::Array(a) => Some(a.as_slice()),
            other => {
                self.err(key, format!("expected an array, found {}", other.type_str()));
                None
            }
        }
    }

    fn ints(&mut self, key: &str) -> Option<Vec<i64>> {
        let a = self.array(key)?;
        let v: Option<Vec<i64>> = a.iter().map(|x| x.as_integer()).collect();
        if v.is_none() {
            self.err(key, "expected an array of integers");
        }
        v
    }

    fn floats(&mut self, key: &str) -> Option<Vec<f64>> {
        let a = self.array(key)?;
        let v: Option<Vec<f64>> = a
            .iter()
            .map(|x| x.as_float().or_else(|| x.as_integer().map(|i| i as f64)))
            .collect();
        if v.is_none() {
            self.err(key, "expected an array of numbers");
        }
        v
    }

    fn positive(&mut self, key: &str, default: f64) -> f64 {
        match self.f64(key) {
            None => default,
            Some(v) if v > 0.0 && v.is_finite() => v,
            Some(v) => {
                self.err(key, format!("must be positive and finite, got {v}"));
                default
            }
        }
    }
}

fn path(section: &str, key: &str) -> String {
    if section.is_empty() || key.is_empty() {
        format!("{section}{key}")
    } else {
        format!("{section}.{key}")
    }
}

fn sub_table<'a>(top: &'a Table, name: &str, errs: &mut Vec<String>) -> Option<&'a Table> {
    match top.get(name) {
        None => None,
        Some(Value::Table(t)) => Some(t),
        Some(other) => {
            errs.push(format!("`{name}`: expected a table, found {}", other.type_str()));
            None
        }
    }
}

pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config_str(&text, base)
}

/// Parses config text; relative paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path) -> Result<RunConfig, ConfigError> {
    let top: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut errs = Vec::new();
    let mut root = Reader::new("", Some(&top), TOP_KEYS);
    let group = if root.raw("group").is_none() {
        root.err("group", "missing (expected u1 | su2)");
        None
    } else {
        root.choice("group", &[("u1", Group::U1), ("su2", Group::Su2)])
    };
    let output = base.join(root.str("output").unwrap_or("ymflow-out"));
    let snapshot_every = root.uint("snapshot_every").unwrap_or(0);
    errs.append(&mut root.errs);

    let lattice = parse_lattice(sub_table(&top, "lattice", &mut errs), &mut errs);
    let initial = parse_initial(sub_table(&top, "initial", &mut errs), base, &mut errs);
    let flow = parse_flow(sub_table(&top, "flow", &mut errs), lattice.as_ref(), &mut errs);
    let gauge = parse_gauge(sub_table(&top, "gauge", &mut errs), lattice.as_ref(), &mut errs);
    let experiment = parse_experiment(sub_table(&top, "experiment", &mut errs), &mut errs);
    let monitors = parse_monitors(sub_table(&top, "monitors", &mut errs), lattice.as_ref(), &mut errs);

    if let (Some(lat), Some(InitialSource::Generated(init))) = (lattice.as_ref(), initial.as_ref()) {
        if let Err(e) = init.validate(lat) {
            errs.push(format!("`initial`: {e}"));
        }
    }
    if !errs.is_empty() {
        return Err(ConfigError::Invalid(errs));
    }
    Ok(RunConfig {
        lattice: lattice.expect("no violations"),
        group: group.expect("no violations"),
        initial: initial.expect("no violations"),
        flow: flow.expect("no violations"),
        gauge: gauge.expect("no violations"),
        experiment: experiment.expect("no violations"),
        monitors: monitors.expect("no violations"),
        output,
        snapshot_every,
    })
}

fn parse_lattice(t: Option<&Table>, errs: &mut Vec<String>) -> Option<Lattice> {
    let mut r = Reader::new("lattice", t, LATTICE_KEYS);
    if t.is_none() {
        errs.push("`lattice`: missing table".into());
        return None;
    }
    let extents: Option<Vec<usize>> = if r.raw("extents").is_some() {
        if r.raw("dim").is_some() || r.raw("extent").is_some() {
            r.err("extents", "give either `extents` or `dim` + `extent`, not both");
        }
        r.ints("extents").and_then(|v| {
            let ok = v.iter().all(|&e| e >= 0);
            if !ok {
                r.err("extents", "extents must be non-negative");
            }
            ok.then(|| v.into_iter().map(|e| e as usize).collect())
        })
    } else {
        match (r.uint("dim"), r.uint("extent")) {
            (Some(d), Some(e)) => Some(vec![e; d]),
            _ => {
                r.err("extents", "missing (give `extents` or `dim` + `extent`)");
                None
            }
        }
    };
    let spacing = match r.f64("spacing") {
        Some(h) => Some(h),
        None => {
            if r.raw("spacing").is_none() {
                r.err("spacing", "missing");
            }
            None
        }
    };
    let mut lat = None;
    if let (Some(ext), Some(h)) = (extents, spacing) {
        match Lattice::new(&ext, h) {
            Ok(l) => lat = Some(l),
            Err(e) => r.err("extents", e),
        }
    }
    errs.append(&mut r.errs);
    lat
}

fn parse_initial(t: Option<&Table>, base: &Path, errs: &mut Vec<String>) -> Option<InitialSource> {
    let mut r = Reader::new("initial", t, INITIAL_KEYS);
    let kind = if t.is_none() || r.raw("kind").is_none() {
        Some("zero")
    } else {
        r.choice(
            "kind",
            &[
                ("zero", "zero"),
                ("abelian_mode", "abelian_mode"),
                ("random_smooth", "random_smooth"),
                ("pure_gauge", "pure_gauge"),
                ("snapshot", "snapshot"),
            ],
        )
    };
    let seed = r.int("seed").map(|s| s as u64).unwrap_or(0);
    let band = r.uint("band").unwrap_or(1);
    let amplitude = match r.f64("amplitude") {
        Some(a) if a >= 0.0 && a.is_finite() => a,
        Some(a) => {
            r.err("amplitude", format!("must be finite and non-negative, got {a}"));
            0.0
        }
        None => 0.1,
    };
    let out = match kind? {
        "zero" => Some(InitialSource::Generated(InitialData::Zero)),
        "abelian_mode" => {
            let k = r.ints("k");
            if k.is_none() && r.raw("k").is_none() {
                r.err("k", "required for abelian_mode");
            }
            let polarization = r.uint("polarization").unwrap_or(0);
            k.map(|k| InitialSource::Generated(InitialData::AbelianMode { k, polarization, amplitude }))
        }
        "random_smooth" => Some(InitialSource::Generated(InitialData::RandomSmooth { seed, band, amplitude })),
        "pure_gauge" => Some(InitialSource::Generated(InitialData::PureGauge { seed, band, amplitude })),
        _ => match r.str("path") {
            None => {
                if r.raw("path").is_none() {
                    r.err("path", "required for kind = \"snapshot\"");
                }
                None
            }
            Some(p) => {
                let full = base.join(p);
                if full.is_file() {
                    Some(InitialSource::Snapshot(full))
                } else {
                    r.err("path", format!("snapshot {} does not exist", full.display()));
                    None
                }
            }
        },
    };
    errs.append(&mut r.errs);
    out
}

fn parse_flow(t: Option<&Table>, lat: Option<&Lattice>, errs: &mut Vec<String>) -> Option<FlowConfig> {
    let mut r = Reader::new("flow", t, FLOW_KEYS);
    let mut cfg = FlowConfig::default();
    let mut ok = true;
    if r.raw("variant").is_some() {
        match r.choice("variant", &[("raw", Variant::Raw), ("deturck", Variant::DeTurck)]) {
            Some(v) => cfg.variant = v,
            None => ok = false,
        }
    }
    if r.raw("scheme").is_some() {
        match r.choice("scheme", &[("euler", Scheme::Euler), ("rk4", Scheme::Rk4)]) {
            Some(v) => cfg.scheme = v,
            None => ok = false,
        }
    }
    match r.raw("dt") {
        None => {}
        Some(Value::String(s)) if s == "auto" => cfg.dt = TimeStep::Auto,
        Some(_) => match r.f64("dt") {
            Some(dt) => cfg.dt = TimeStep::Fixed(dt),
            None => {
                r.err("dt", "expected \"auto\" or a number");
                ok = false;
            }
        },
    }
    if let Some(v) = r.f64("cfl_safety") {
        cfg.cfl_safety = v;
    }
    if let Some(v) = r.f64("t_end") {
        cfg.t_end = v;
    }
    if let Some(v) = r.uint("reproject_every") {
        cfg.reproject_every = v;
    }
    if let Some(lat) = lat {
        match cfg.step_size(lat) {
            Ok(_) => {}
            Err(FlowError::Cfl { dt, bound, cfl, scheme }) => {
                r.err(
                    "dt",
                    format!("{dt} exceeds the {scheme} stability bound {bound:e}; the explicit scheme needs dt ≤ h²/(2n) = {cfl:e} (times 1.39 for rk4)"),
                );
                ok = false;
            }
            Err(e) => {
                r.err("t_end", e);
                ok = false;
            }
        }
    }
    let ok = ok && r.errs.is_empty();
    errs.append(&mut r.errs);
    ok.then_some(cfg)
}

fn parse_gauge(t: Option<&Table>, lat: Option<&Lattice>, errs: &mut Vec<String>) -> Option<GaugeFixConfig> {
    let mut r = Reader::new("gauge", t, GAUGE_KEYS);
    let mut cfg = GaugeFixConfig::default();
    if r.raw("bc").is_some() {
        if let Some(bc) = r.choice("bc", &[("neumann", Bc::NeumannMeanZero), ("dirichlet", Bc::DirichletZero)]) {
            cfg.bc = bc;
        }
    }
    if let Some(v) = r.uint("max_iters") {
        cfg.max_iters = v;
    }
    for (key, slot) in [
        ("tol", &mut cfg.tol),
        ("damping", &mut cfg.damping),
        ("small_field_guard", &mut cfg.small_field_guard),
        ("drift_guard", &mut cfg.drift_guard),
    ] {
        if let Some(v) = r.f64(key) {
            *slot = v;
        }
    }
    let domain = if r.raw("domain").is_some() { r.choice("domain", &[("torus", false), ("patch", true)]) } else { Some(false) };
    if domain == Some(true) {
        let center = r.ints("center");
        let radius = r.f64("radius");
        if center.is_none() && r.raw("center").is_none() {
            r.err("center", "required for domain = \"patch\"");
        }
        if radius.is_none() && r.raw("radius").is_none() {
            r.err("radius", "required for domain = \"patch\"");
        }
        if let (Some(lat), Some(c), Some(rad)) = (lat, center, radius) {
            let in_range = c.len() == lat.dim() && c.iter().enumerate().all(|(mu, &v)| v >= 0 && (v as usize) < lat.extent(mu));
            if !in_range {
                r.err("center", format!("needs {} in-range site coordinates", lat.dim()));
            } else {
                let cu: Vec<usize> = c.iter().map(|&v| v as usize).collect();
                match BallPatch::new(*lat, lat.site(&cu), rad) {
                    Ok(p) if p.interior().is_empty() => r.err("radius", "patch has no interior sites"),
                    Ok(p) => cfg.domain = Domain::Patch(p),
                    Err(e) => r.err("radius", format!("{e}; patch radii must stay below half the shortest side")),
                }
            }
        }
    }
    if let Err(e) = cfg.validate() {
        r.err("", e);
    }
    let ok = r.errs.is_empty();
    errs.append(&mut r.errs);
    ok.then_some(cfg)
}

fn parse_experiment(t: Option<&Table>, errs: &mut Vec<String>) -> Option<ExperimentConfig> {
    let mut r = Reader::new("experiment", t, EXPERIMENT_KEYS);
    let levels = r.uint("levels").unwrap_or(1);
    if levels == 0 {
        r.err("levels", "refinement levels must be at least 1");
    }
    let refinement = if r.raw("refinement").is_some() {
        r.choice("refinement", &[("joint", Refinement::Joint), ("timestep", Refinement::TimeStep)])
            .unwrap_or(Refinement::Joint)
    } else {
        Refinement::Joint
    };
    let samples = r.uint("samples").unwrap_or(10);
    if samples == 0 {
        r.err("samples", "must be at least 1");
    }
    let deltas = r.floats("deltas").unwrap_or_else(|| vec![0.0, 1e-2, 1e-3, 1e-4]);
    if deltas.is_empty() || deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
        r.err("deltas", "must be a non-empty list of finite, non-negative numbers");
    }
    let perturbation_seed = r.int("perturbation_seed").map(|s| s as u64).unwrap_or(99);
    let ok = r.errs.is_empty();
    errs.append(&mut r.errs);
    ok.then_some(ExperimentConfig {
        levels,
        refinement,
        samples,
        deltas,
        perturbation_seed,
    })
}

fn parse_monitors(t: Option<&Table>, lat: Option<&Lattice>, errs: &mut Vec<String>) -> Option<MonitorConfig> {
    let mut r = Reader::new("monitors", t, MONITOR_KEYS);
    let default_r = lat.map_or(0.1, |l| BallPatch::radius_bound(l) / 4.0);
    let mut select = Vec::new();
    match r.array("select") {
        None => select = MonitorKind::ALL.to_vec(),
        Some(items) => {
            let names: Vec<&str> = MonitorKind::ALL.iter().map(|m| m.name()).collect();
            for it in items {
                match it.as_str().and_then(|s| MonitorKind::ALL.iter().find(|m| m.name() == s)) {
                    Some(m) => select.push(*m),
                    None => r.err(
                        "select",
                        format!("`{it}` is not a monitor; valid: {}; nearest is `{}`", names.join(" | "), nearest(&it.to_string(), &names)),
                    ),
                }
            }
        }
    }
    let radius = r.positive("radius", default_r);
    let r0 = r.positive("r0", default_r);
    let eps0 = r.positive("eps0", 0.5);
    let radii = r
        .floats("radii")
        .unwrap_or_else(|| lat.map_or(vec![0.1], |l| vec![l.spacing(), 2.0 * l.spacing()]));
    let late_frames = r.uint("late_frames").unwrap_or(3).max(1);
    let frame_every = r.uint("frame_every").unwrap_or(1);
    if frame_every == 0 {
        r.err("frame_every", "must be at least 1");
    }
    let local_energy_bound = r.f64("local_energy_bound");
    let eps_regularity_bound = r.f64("eps_regularity_bound");
    if let Some(lat) = lat {
        let bound = BallPatch::radius_bound(lat);
        if 2.0 * radius >= bound {
            r.err("radius", format!("local energy needs 2R = {} below half the shortest side {bound}", 2.0 * radius));
        }
        let all = [("radius", radius), ("r0", r0)].into_iter().chain(radii.iter().map(|&v| ("radii", v)));
        for (k, v) in all {
            if !(v > 0.0 && v < bound) {
                r.err(k, format!("radius {v} must lie in (0, {bound}), half the shortest side"));
            } else if BallPatch::new(*lat, 0, v).map_or(true, |p| p.interior().is_empty()) {
                r.err(k, format!("a ball of radius {v} has no interior sites; use at least h = {}", lat.spacing()));
            }
        }
    }
    let ok = r.errs.is_empty();
    errs.append(&mut r.errs);
    ok.then_some(MonitorConfig {
        select,
        radius,
        r0,
        eps0,
        radii,
        late_frames,
        frame_every,
        local_energy_bound,
        eps_regularity_bound,
    })
}
