//! Mathematical-program backend contract.
//!
//! Models are built as [`ModelSpec`] values and solved by [`solve`]. Two
//! continuous engines are available: the clarabel interior-point adapter
//! (LP and convex QP, the default) and a dense Bland-rule simplex used as a
//! test oracle. Integer and binary variables are handled by branch and bound
//! on top of either engine.

mod bnb;
mod ipm;
mod lpfile;
mod model;
mod outcome;
mod simplex;

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};

pub use bnb::{branch_and_bound, MipOptions, Relaxation};
pub use ipm::Clarabel;
pub use lpfile::{to_lp_string, write_lp};
pub use model::{Constraint, ModelSpec, RowId, Sense, VarId, VarKind, Variable};
pub use outcome::{FarkasRay, SolveOutcome, Status};
pub use simplex::DenseSimplex;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    #[default]
    Clarabel,
    DenseSimplex,
}

impl std::str::FromStr for Backend {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "clarabel" => Ok(Backend::Clarabel),
            "simplex" | "dense_simplex" => Ok(Backend::DenseSimplex),
            other => Err(format!("unknown backend '{other}'")),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub backend: Backend,
    pub mip: MipOptions,
    /// Feasibility tolerance used to accept a primal point.
    pub feas_tol: f64,
    /// When set, every solved model is written there as an LP file.
    pub dump_dir: Option<PathBuf>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { backend: Backend::Clarabel, mip: MipOptions::default(), feas_tol: 1e-6, dump_dir: None }
    }
}

impl SolverConfig {
    pub fn with_backend(backend: Backend) -> Self {
        Self { backend, ..Self::default() }
    }
}

impl Relaxation for Clarabel {
    fn solve_relaxation(&self, model: &ModelSpec, bounds: &[(f64, f64)]) -> SolveOutcome {
        self.solve_with_bounds(model, bounds)
    }
}

impl Relaxation for DenseSimplex {
    fn solve_relaxation(&self, model: &ModelSpec, bounds: &[(f64, f64)]) -> SolveOutcome {
        self.solve_with_bounds(model, bounds)
    }
}

static DUMP_COUNTER: AtomicUsize = AtomicUsize::new(0);

/// Solve `model` to optimality (minimization).
pub fn solve(model: &ModelSpec, cfg: &SolverConfig) -> SolveOutcome {
    if let Err(e) = model.validate() {
        return SolveOutcome::error(e.to_string());
    }
    if let Some(dir) = &cfg.dump_dir {
        let k = DUMP_COUNTER.fetch_add(1, Ordering::Relaxed);
        let _ = std::fs::create_dir_all(dir);
        let _ = write_lp(model, dir.join(format!("model_{k:06}.lp")));
    }
    let relax: &dyn Relaxation = match cfg.backend {
        Backend::Clarabel => &Clarabel::default(),
        Backend::DenseSimplex => &DenseSimplex::default(),
    };
    let mut out = if model.has_integers() {
        branch_and_bound(relax, model, &cfg.mip)
    } else {
        let bounds: Vec<(f64, f64)> = model.variables.iter().map(|v| (v.lower, v.upper)).collect();
        relax.solve_relaxation(model, &bounds)
    };
    if out.is_optimal() {
        let scale = 1.0 + out.primal.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let viol = model.max_violation(&out.primal);
        if viol > cfg.feas_tol * scale {
            out = SolveOutcome::error(format!("returned point violates the model by {viol:.3e}"));
        }
    }
    out
}
