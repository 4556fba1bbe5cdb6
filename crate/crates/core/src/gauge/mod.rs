//! Coulomb gauge fixing on the torus and on ball patches, the time-family
//! driver, and the patch-cover utilities.

mod coulomb;
mod cover;
mod poisson;

pub use coulomb::*;
pub use cover::*;
pub use poisson::{laplacian_symbol, poisson_solve};

use thiserror::Error;

use crate::field::{BallPatch, FieldError};
use crate::flow::FlowError;
use crate::lie::LieError;

#[derive(Clone, Debug, PartialEq)]
pub enum Domain {
    Torus,
    Patch(BallPatch),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bc {
    DirichletZero,
    NeumannMeanZero,
}

impl Bc {
    pub fn name(self) -> &'static str {
        match self {
            Bc::DirichletZero => "dirichlet_zero",
            Bc::NeumannMeanZero => "neumann_mean_zero",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaugeFixConfig {
    pub domain: Domain,
    pub bc: Bc,
    pub max_iters: usize,
    /// Target for `‖d*a‖_{l2}` over the domain.
    pub tol: f64,
    pub damping: f64,
    /// `ε₁`: largest admissible `‖A‖_{L^n}` over the domain.
    pub small_field_guard: f64,
    /// `ε₂`: largest admissible `W^{1,2}` drift between consecutive samples.
    pub drift_guard: f64,
}

impl Default for GaugeFixConfig {
    fn default() -> Self {
        GaugeFixConfig {
            domain: Domain::Torus,
            bc: Bc::NeumannMeanZero,
            max_iters: 200,
            tol: 1e-10,
            damping: 1.0,
            small_field_guard: 0.1,
            drift_guard: 0.05,
        }
    }
}

impl GaugeFixConfig {
    pub fn validate(&self) -> Result<(), GaugeError> {
        let mut bad = Vec::new();
        if !(self.tol > 0.0) {
            bad.push(format!("tol {} must be positive", self.tol));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            bad.push(format!("damping {} must lie in (0, 1]", self.damping));
        }
        if self.max_iters == 0 {
            bad.push("max_iters must be at least 1".to_string());
        }
        if !(self.small_field_guard > 0.0) || !(self.drift_guard > 0.0) {
            bad.push("guards must be positive".to_string());
        }
        if self.domain == Domain::Torus && self.bc == Bc::DirichletZero {
            bad.push("dirichlet_zero needs a patch domain".to_string());
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(GaugeError::Config(bad.join("; ")))
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GaugeError {
    #[error("invalid gauge config: {0}")]
    Config(String),
    #[error("right-hand side has mean {mean:e}; the torus/neumann problem needs mean zero")]
    Solvability { mean: f64 },
    #[error("patch solver stalled at relative residual {residual:e}")]
    SolverStall { residual: f64 },
    #[error("small-field guard: ||A||_L^n = {norm} exceeds eps1 = {guard}")]
    SmallField { norm: f64, guard: f64 },
    #[error("no convergence in {} iterations (residual {:e})", .0.iterations, .0.final_residual())]
    NotConverged(Box<GaugeFixReport>),
    #[error("samples {index} and {} drift by {drift} in W^1,2 (> eps2 = {guard}); sample more finely", index + 1)]
    Drift { index: usize, drift: f64, guard: f64 },
    #[error("log of S_j^-1 S_j+1 undefined at site {site}: {source}")]
    Lie { site: usize, source: LieError },
    #[error("patches do not overlap")]
    EmptyOverlap,
    #[error("cover: {0}")]
    Cover(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Field(#[from] FieldError),
}
