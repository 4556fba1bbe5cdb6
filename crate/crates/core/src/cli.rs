//! Command surface of the `ymflow` binary.
//!
//! Output layout under the output directory:
//!
//! ```text
//! summary.json              command, pass flag, checks, error (always, once the directory is known)
//! diagnostics.csv           flow-run: one row per step
//! snapshots/a_<step>.ymf    flow-run: every `snapshot_every` steps
//! final.ymf                 flow-run: final connection
//! gauge_fixed.ymf           gauge-fix: fixed connection
//! gauge_fix.csv             gauge-fix: iter, residual, u_w12, contraction_ratio
//! <experiment>_*.csv        verify-*: per-level tables
//! monitor_<name>.csv        monitors: time, patch, value, running_constant
//! ```
//!
//! Exit codes: 0 every check passed, 1 a check failed, 2 invalid
//! configuration or usage, 3 a run stopped with an error.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::analysis::{self, RunHistory};
use crate::config::{parse_config, InitialSource, MonitorKind, RunConfig};
use crate::exec;
use crate::field::snapshot::Snapshot;
use crate::field::{AlgebraField, Connection};
use crate::flow::{self, FlowState, Variant};
use crate::gauge::coulomb_fix;
use crate::harness::{self, Check, ExperimentSpec};

#[derive(Parser, Debug)]
#[command(name = "ymflow", version, about = "Yang-Mills flow laboratory on periodic lattices")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config's `output`.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    /// Force single-threaded, bit-deterministic execution.
    #[arg(long, global = true)]
    pub serial: bool,
    /// Override the number of refinement levels.
    #[arg(long, global = true)]
    pub levels: Option<usize>,
}

#[derive(Subcommand, Debug, Clone, PartialEq)]
pub enum Command {
    /// Integrate the flow, writing diagnostics and snapshots.
    FlowRun,
    /// Coulomb-fix a connection snapshot (or the configured initial data).
    GaugeFix {
        /// Connection snapshot; overrides the configured initial data.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Raw flow against the reconstructed DeTurck flow.
    VerifyEquivalence,
    /// Twin runs under perturbations of size delta.
    VerifyUniqueness {
        /// Comma-separated deltas; overrides `experiment.deltas`.
        #[arg(long, value_delimiter = ',')]
        deltas: Option<Vec<f64>>,
    },
    /// Energy monotonicity and energy-identity order.
    VerifyEnergy,
    /// Local energy, epsilon-regularity, singular-set and Bianchi monitors.
    Monitors,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::FlowRun => "flow-run",
            Command::GaugeFix { .. } => "gauge-fix",
            Command::VerifyEquivalence => "verify-equivalence",
            Command::VerifyUniqueness { .. } => "verify-uniqueness",
            Command::VerifyEnergy => "verify-energy",
            Command::Monitors => "monitors",
        }
    }
}

#[derive(Serialize, Debug, Default)]
pub struct Summary {
    pub command: String,
    pub pass: bool,
    pub checks: Vec<Check>,
    pub values: Vec<(String, f64)>,
    pub error: Option<String>,
    #[serde(skip)]
    pub exit_code: u8,
}

/// A failure rendered with the module whose contract was violated.
#[derive(Debug)]
pub struct CliError {
    pub module: &'static str,
    pub message: String,
    pub code: u8,
}

impl CliError {
    fn config(message: impl ToString) -> Self {
        CliError {
            module: "config",
            message: message.to_string(),
            code: 2,
        }
    }

    fn run(module: &'static str, message: impl ToString) -> Self {
        CliError {
            module,
            message: message.to_string(),
            code: 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error [{}]: {}", self.module, self.message)
    }
}

fn io_err(e: io::Error) -> CliError {
    CliError::run("io", e)
}

/// Entry point used by `main`.
pub fn run(cli: Cli) -> ExitCode {
    let mut out = io::stdout().lock();
    let (summary, dir) = execute(&cli, &mut out);
    if let Some(dir) = dir {
        let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
        if let Err(e) = fs::create_dir_all(&dir).and_then(|_| fs::write(dir.join("summary.json"), json + "\n")) {
            eprintln!("error [io]: cannot write summary: {e}");
        }
    }
    let line = serde_json::to_string(&summary).expect("summary serializes");
    let _ = writeln!(out, "{line}");
    if let Some(e) = &summary.error {
        eprintln!("{e}");
    }
    ExitCode::from(summary.exit_code)
}

/// Runs the command, returning the summary and the output directory (the
/// `--output` flag alone when the configuration is unreadable).
pub fn execute(cli: &Cli, out: &mut dyn Write) -> (Summary, Option<PathBuf>) {
    if cli.serial {
        exec::set_serial(true);
    }
    let mut summary = Summary {
        command: cli.command.name().to_string(),
        ..Default::default()
    };
    let cfg = match load(cli) {
        Ok(c) => c,
        Err(e) => {
            summary.error = Some(e.to_string());
            summary.exit_code = e.code;
            return (summary, cli.output.clone());
        }
    };
    let dir = cfg.output.clone();
    let result = fs::create_dir_all(&dir).map_err(io_err).and_then(|_| match &cli.command {
        Command::FlowRun => flow_run(&cfg, &dir, &mut summary),
        Command::GaugeFix { input } => gauge_fix(&cfg, input.as_deref(), &dir, out, &mut summary),
        Command::VerifyEquivalence => experiment(&cfg, &dir, &mut summary, harness::run_equivalence),
        Command::VerifyUniqueness { deltas } => {
            let d = deltas.clone().unwrap_or_else(|| cfg.experiment.deltas.clone());
            let seed = cfg.experiment.perturbation_seed;
            let r = experiment(&cfg, &dir, &mut summary, |s| harness::run_uniqueness(s, &d, seed));
            if r.is_ok() {
                if let Ok(t) = fs::read_to_string(dir.join("uniqueness_linearity.csv")) {
                    let _ = write!(out, "{t}");
                }
            }
            r
        }
        Command::VerifyEnergy => experiment(&cfg, &dir, &mut summary, harness::run_energy_decay),
        Command::Monitors => monitors(&cfg, &dir, &mut summary),
    });
    match result {
        Err(e) => {
            summary.pass = false;
            summary.error = Some(e.to_string());
            summary.exit_code = e.code;
        }
        Ok(()) => summary.exit_code = if summary.pass { 0 } else { 1 },
    }
    (summary, Some(dir))
}

fn load(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli.config.as_ref().ok_or_else(|| CliError::config("--config <path> is required"))?;
    let mut cfg = parse_config(path).map_err(CliError::config)?;
    if let Some(o) = &cli.output {
        cfg.output = o.clone();
    }
    if let Some(l) = cli.levels {
        if l == 0 {
            return Err(CliError::config("--levels must be at least 1"));
        }
        cfg.experiment.levels = l;
    }
    Ok(cfg)
}

fn initial_connection(cfg: &RunConfig) -> Result<Connection, CliError> {
    match &cfg.initial {
        InitialSource::Generated(g) => g.generate(cfg.lattice, cfg.group).map_err(|e| CliError::run("harness", e)),
        InitialSource::Snapshot(p) => read_connection(p, cfg),
    }
}

fn read_connection(p: &Path, cfg: &RunConfig) -> Result<Connection, CliError> {
    let a = Snapshot::load(p)
        .and_then(Snapshot::into_connection)
        .map_err(|e| CliError::run("snapshot", format!("{}: {e}", p.display())))?;
    if *a.lattice() != cfg.lattice || a.group() != cfg.group {
        return Err(CliError::config(format!(
            "snapshot {} does not match the configured lattice and group",
            p.display()
        )));
    }
    Ok(a)
}


fn save(dir: &Path, name: &str, s: &Snapshot) -> Result<(), CliError> {
    s.save(&dir.join(name)).map_err(|e| CliError::run("snapshot", e))
}

fn flow_run(cfg: &RunConfig, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let a0 = initial_connection(cfg)?;
    let mut st = FlowState::new(a0, cfg.flow).map_err(|e| CliError::run("flow", e))?;
    if cfg.snapshot_every > 0 {
        fs::create_dir_all(dir.join("snapshots")).map_err(io_err)?;
    }
    let n = st.steps_to(cfg.flow.t_end);
    let mut stop = None;
    for _ in 0..n {
        if let Err(e) = st.step() {
            stop = Some(e);
            break;
        }
        if cfg.snapshot_every > 0 && st.steps() % cfg.snapshot_every == 0 {
            save(dir, &format!("snapshots/a_{:06}.ymf", st.steps()), &Snapshot::Connection(st.connection().clone()))?;
        }
    }
    let mut csv = Vec::new();
    flow::write_csv(&mut csv, st.history()).map_err(io_err)?;
    fs::write(dir.join("diagnostics.csv"), csv).map_err(io_err)?;
    save(dir, "final.ymf", &Snapshot::Connection(st.raw_connection().map_err(|e| CliError::run("flow", e))?))?;
    let hist = st.history();
    let e0 = hist[0].ym_energy;
    let max_increase = hist.windows(2).map(|w| w[1].ym_energy - w[0].ym_energy).fold(0.0, f64::max);
    summary.values = vec![
        ("steps".into(), st.steps() as f64),
        ("t".into(), st.time()),
        ("initial_energy".into(), e0),
        ("final_energy".into(), st.energy()),
        ("energy_identity_residual".into(), st.energy_identity_residual()),
    ];
    if cfg.flow.variant == Variant::Raw {
        let tol = harness::MONOTONE_TOL * e0.max(1.0);
        summary.checks.push(Check {
            name: "energy_monotone".into(),
            value: max_increase,
            bound: tol,
            pass: max_increase <= tol,
        });
    }
    if let Some(e) = stop {
        return Err(CliError::run("flow", e));
    }
    summary.pass = summary.checks.iter().all(|c| c.pass);
    Ok(())
}

fn gauge_fix(cfg: &RunConfig, input: Option<&Path>, dir: &Path, out: &mut dyn Write, summary: &mut Summary) -> Result<(), CliError> {
    let a = match input {
        Some(p) => read_connection(p, cfg)?,
        None => initial_connection(cfg)?,
    };
    let fix = coulomb_fix(&a, &cfg.gauge).map_err(|e| CliError::run("gauge", e))?;
    save(dir, "gauge_fixed.ymf", &Snapshot::Connection(fix.a.clone()))?;
    let mut csv = Vec::new();
    fix.report.write_csv(&mut csv).map_err(io_err)?;
    fs::write(dir.join("gauge_fix.csv"), csv).map_err(io_err)?;
    let r = &fix.report;
    writeln!(
        out,
        "uhlenbeck_ratio={:e} iterations={} converged={}",
        r.uhlenbeck_ratio, r.iterations, r.converged
    )
    .map_err(io_err)?;
    summary.values = vec![
        ("uhlenbeck_ratio".into(), r.uhlenbeck_ratio),
        ("iterations".into(), r.iterations as f64),
        ("final_residual".into(), r.final_residual()),
    ];
    summary.checks.push(Check {
        name: "converged".into(),
        value: r.final_residual(),
        bound: cfg.gauge.tol,
        pass: r.converged,
    });
    summary.pass = r.converged;
    Ok(())
}

fn spec_from(cfg: &RunConfig, name: &str) -> Result<ExperimentSpec, CliError> {
    let initial = match &cfg.initial {
        InitialSource::Generated(g) => g.clone(),
        InitialSource::Snapshot(_) => {
            return Err(CliError::config("experiments need generated initial data (refinement regenerates it per level)"))
        }
    };
    let mut s = ExperimentSpec::new(name, cfg.lattice, cfg.group, initial);
    s.flow = cfg.flow;
    s.levels = cfg.experiment.levels;
    s.refinement = cfg.experiment.refinement;
    s.samples = cfg.experiment.samples;
    s.gauge = cfg.gauge.clone();
    Ok(s)
}

fn experiment(
    cfg: &RunConfig,
    dir: &Path,
    summary: &mut Summary,
    run: impl FnOnce(&ExperimentSpec) -> Result<harness::ExperimentReport, harness::HarnessError>,
) -> Result<(), CliError> {
    let spec = spec_from(cfg, summary.command.as_str())?;
    let rep = run(&spec).map_err(|e| match e {
        harness::HarnessError::Config(m) => CliError::config(m),
        other => CliError::run("harness", other),
    })?;
    rep.write(dir).map_err(|e| CliError::run("harness", e))?;
    // The report's own summary.json is replaced by the command summary;
    // keep it under its experiment name.
    let json = serde_json::to_string_pretty(&rep).expect("report serializes");
    fs::write(dir.join(format!("{}_report.json", rep.experiment)), json + "\n").map_err(io_err)?;
    summary.checks = rep.checks.clone();
    for (k, o) in &rep.orders {
        for (i, v) in o.iter().enumerate() {
            summary.values.push((format!("order_{k}_{i}"), *v));
        }
    }
    summary.pass = rep.pass();
    if let Some(a) = rep.aborted {
        return Err(CliError::run("flow", a));
    }
    Ok(())
}

fn monitors(cfg: &RunConfig, dir: &Path, summary: &mut Summary) -> Result<(), CliError> {
    let m = &cfg.monitors;
    let a0 = initial_connection(cfg)?;
    let mut st = FlowState::new(a0, cfg.flow).map_err(|e| CliError::run("flow", e))?;
    let mut hist = RunHistory::default();
    hist.push_connection(0.0, &st.raw_connection().map_err(|e| CliError::run("flow", e))?, true);
    let n = st.steps_to(cfg.flow.t_end);
    for k in 1..=n {
        st.step().map_err(|e| CliError::run("flow", e))?;
        if k % m.frame_every == 0 || k == n {
            hist.push_connection(st.time(), &st.raw_connection().map_err(|e| CliError::run("flow", e))?, true);
        }
    }
    let centers = analysis::all_sites(&cfg.lattice);
    let amod = |e| CliError::run("analysis", e);
    for kind in &m.select {
        match kind {
            MonitorKind::LocalEnergy | MonitorKind::EpsRegularity => {
                let (mut rep, bound) = if *kind == MonitorKind::LocalEnergy {
                    (analysis::local_energy_monitor(&hist, &centers, m.radius).map_err(amod)?, m.local_energy_bound)
                } else {
                    (analysis::eps_regularity_monitor(&hist, &centers, m.r0).map_err(amod)?, m.eps_regularity_bound)
                };
                if let Some(b) = bound {
                    rep.bound = Some(b);
                    rep.pass = rep.constant.is_finite() && rep.constant <= b;
                }
                let mut csv = Vec::new();
                rep.write_csv(&mut csv).map_err(io_err)?;
                fs::write(dir.join(format!("monitor_{}.csv", kind.name())), csv).map_err(io_err)?;
                summary.values.push((format!("{}_constant", kind.name()), rep.constant));
                if let Some(h) = rep.hypothesis {
                    summary.values.push((format!("{}_hypothesis", kind.name()), h));
                }
                summary.checks.push(Check {
                    name: kind.name().into(),
                    value: rep.constant,
                    bound: rep.bound.unwrap_or(f64::INFINITY),
                    pass: rep.pass,
                });
            }
            MonitorKind::Singular => {
                let sites = analysis::singular_detector(&hist, m.eps0, &m.radii, m.late_frames).map_err(amod)?;
                let mut csv = String::from("site\n");
                for s in &sites {
                    csv += &format!("{s}\n");
                }
                fs::write(dir.join("monitor_singular.csv"), csv).map_err(io_err)?;
                summary.checks.push(Check {
                    name: "singular_sites".into(),
                    value: sites.len() as f64,
                    bound: 0.0,
                    pass: sites.is_empty(),
                });
            }
            MonitorKind::Bianchi => {
                let worst = hist
                    .frames
                    .iter()
                    .filter_map(|f| f.connection.as_ref())
                    .map(analysis::bianchi_residual)
                    .fold(0.0, f64::max);
                summary.values.push(("bianchi_residual".into(), worst));
            }
        }
    }
    summary.pass = summary.checks.iter().all(|c| c.pass);
    Ok(())
}
