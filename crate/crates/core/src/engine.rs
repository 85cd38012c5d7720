//! The learning loop: master solve, scenario draw, second-stage solve, then
//! a slope update with isotone projection or a feasibility cut.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmodel::{solve_second_stage, DgParams, Network, Objective};
use crate::master::{
    add_feasibility_cut, build_master, random_feasible_plan, solve_master, Encoding, FeasibilityCut, MasterSolution,
    PlanningParams,
};
use crate::mpif::{Backend, SolverConfig};
use crate::oracle::true_expected_value;
use crate::parallel::Execution;
use crate::pwl::{project_isotone, slope_update, CoordinateFunctionSet};
use crate::rng::{rng_for, stream};
use crate::scenarios::ScenarioSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `20 / (20 + k)`
    #[default]
    Rule1,
    /// `1 / k`
    Rule2,
    /// `min(1, 20 / k)`
    Rule3,
}

impl std::str::FromStr for StepRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "rule1" | "1" => Ok(StepRule::Rule1),
            "rule2" | "2" => Ok(StepRule::Rule2),
            "rule3" | "3" => Ok(StepRule::Rule3),
            other => Err(format!("unknown step rule '{other}'")),
        }
    }
}

pub fn step_size(rule: StepRule, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::Domain("step index starts at 1".into()));
    }
    let k = k as f64;
    Ok(match rule {
        StepRule::Rule1 => 20.0 / (20.0 + k),
        StepRule::Rule2 => 1.0 / k,
        StepRule::Rule3 => (20.0 / k).min(1.0),
    })
}

/// True once two consecutive trailing means of length `window` exist and
/// differ by at most `epsilon`.
pub fn check_termination(history: &[f64], epsilon: f64, window: usize) -> bool {
    let n = history.len();
    if window == 0 || n <= window {
        return false;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let now = mean(&history[n - window..]);
    let prev = mean(&history[n - window - 1..n - 1]);
    (now - prev).abs() <= epsilon
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub k_max: usize,
    pub epsilon: f64,
    pub window: usize,
    /// Iterations before the termination test is consulted.
    pub min_iters: usize,
    pub step_rule: StepRule,
    pub encoding: Encoding,
    pub explore_iters: usize,
    pub objective: Objective,
    pub seed: u64,
    pub dg: DgParams,
    /// Backend for the second-stage solves.
    pub solver: SolverConfig,
    /// Backend for the master. Vertex solutions keep branch and bound short.
    pub master_solver: SolverConfig,
    pub execution: Execution,
    /// Reference optimum for quality tracking; quality is computed every
    /// `quality_every` iterations when both are set.
    pub f_star: Option<f64>,
    pub quality_every: usize,
    pub checkpoint_every: usize,
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            k_max: 100,
            epsilon: 1e-4,
            window: 5,
            min_iters: 0,
            step_rule: StepRule::Rule1,
            encoding: Encoding::Epigraph,
            explore_iters: 0,
            objective: Objective::VoltageDeviation,
            seed: 0,
            dg: DgParams::default(),
            solver: SolverConfig::default(),
            master_solver: SolverConfig::with_backend(Backend::DenseSimplex),
            execution: Execution::default(),
            f_star: None,
            quality_every: 0,
            checkpoint_every: 0,
            checkpoint_dir: None,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Parameter(m.to_string()));
        if self.k_max < 1 {
            return bad("k_max must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.window < 1 {
            return bad("window must be at least 1");
        }
        if self.explore_iters >= self.k_max {
            return bad("explore_iters must be below k_max");
        }
        if !(self.dg.unit_kw > 0.0) || !(self.dg.power_factor > 0.0 && self.dg.power_factor <= 1.0) {
            return bad("DG unit size must be positive and power factor in (0, 1]");
        }
        if let Some(f) = self.f_star {
            if !(f > 0.0) {
                return bad("f_star must be positive");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub k: usize,
    pub master_obj: f64,
    pub scenario: usize,
    /// Recourse value, `None` when the second stage was infeasible.
    pub recourse: Option<f64>,
    /// Step size used, `None` on a cut iteration.
    pub alpha: Option<f64>,
    pub cuts: usize,
    pub quality: Option<f64>,
    pub explored: bool,
    pub plan: Vec<i64>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_trace_csv<W: std::io::Write>(rows: &[TraceRow], mut w: W) -> Result<()> {
    writeln!(w, "k,master_obj,scenario,Q,alpha,cuts,quality,explored,plan")?;
    for r in rows {
        let plan: Vec<String> = r.plan.iter().map(|x| x.to_string()).collect();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{}",
            r.k,
            r.master_obj,
            r.scenario,
            opt(r.recourse),
            opt(r.alpha),
            r.cuts,
            opt(r.quality),
            u8::from(r.explored),
            plan.join(";")
        )?;
    }
    Ok(())
}

/// Engine state sufficient to continue a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub iteration: usize,
    pub step_index: usize,
    pub vfa: CoordinateFunctionSet,
    pub cuts: Vec<FeasibilityCut>,
    pub objective_history: Vec<f64>,
    pub trace: Vec<TraceRow>,
}

impl Checkpoint {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub solution: MasterSolution,
    pub vfa: CoordinateFunctionSet,
    pub cuts: Vec<FeasibilityCut>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
    pub quality_history: Vec<(usize, f64)>,
}

pub fn run_spar(cfg: &EngineConfig, net: &Network, scen: &ScenarioSet, params: &PlanningParams) -> Result<RunResult> {
    run_spar_from(cfg, net, scen, params, None)
}

/// Runs the loop, optionally continuing from a checkpoint. Every iteration
/// draws from its own seeded stream, so a resumed run reproduces the trace
/// of an uninterrupted one.
pub fn run_spar_from(
    cfg: &EngineConfig,
    net: &Network,
    scen: &ScenarioSet,
    params: &PlanningParams,
    resume: Option<Checkpoint>,
) -> Result<RunResult> {
    cfg.validate()?;
    let n = net.bus_count();
    params.validate(n)?;
    if scen.bus_count() != n {
        return Err(Error::Parameter(format!("scenarios cover {} buses, network has {n}", scen.bus_count())));
    }
    let lmax = params.max_units();
    let mut state = match resume {
        Some(c) => {
            if c.vfa.len() != n || c.vfa.functions.iter().any(|f| f.lower_break != 0 || f.upper_break != lmax) {
                return Err(Error::Parameter("checkpoint does not match this network and plan size".into()));
            }
            c
        }
        None => Checkpoint {
            iteration: 0,
            step_index: 0,
            vfa: CoordinateFunctionSet::zeros(net.bus_ids(), 0, lmax)?,
            cuts: Vec::new(),
            objective_history: Vec::new(),
            trace: Vec::new(),
        },
    };
    let mut converged = false;

    while state.iteration < cfg.k_max {
        let k = state.iteration + 1;
        let explored = k <= cfg.explore_iters;
        let plan = if explored {
            let mut rng = rng_for(cfg.seed, stream::EXPLORATION, k as u64);
            match random_feasible_plan(params, n, &state.cuts, &mut rng, 10_000) {
                Some(units) => {
                    let value = state.vfa.value_at(&units)? + params.first_stage_value(&units);
                    MasterSolution::from_units(units, value)
                }
                None => master_plan(cfg, &state, params)?,
            }
        } else {
            master_plan(cfg, &state, params)?
        };

        let s = scen.draw(&mut rng_for(cfg.seed, stream::ENGINE, k as u64));
        let out = solve_second_stage(net, &scen.scenarios[s], &plan.capacity(), cfg.objective, &cfg.dg, &cfg.solver)?;
        let mut row = TraceRow {
            k,
            master_obj: plan.master_objective,
            scenario: s,
            recourse: None,
            alpha: None,
            cuts: state.cuts.len(),
            quality: None,
            explored,
            plan: plan.units.clone(),
        };
        if out.feasible {
            state.step_index += 1;
            let alpha = step_size(cfg.step_rule, state.step_index)?;
            for (i, f) in state.vfa.functions.iter_mut().enumerate() {
                let seg = f.segment_for(plan.units[i]);
                let raw = slope_update(f, f.lower_break + seg as i64, out.linking_duals[i], alpha)?;
                f.slopes = project_isotone(&raw, seg);
            }
            row.recourse = Some(out.recourse_value);
            row.alpha = Some(alpha);
        } else {
            add_feasibility_cut(&mut state.cuts, &out.farkas_ray, out.farkas_constant)?;
            let cut = state.cuts.last().expect("just added");
            if cut.slack(&plan.units) >= -1e-9 {
                return Err(Error::Solver(format!(
                    "feasibility cut from scenario {s} does not separate plan {:?}",
                    plan.units
                )));
            }
            row.cuts = state.cuts.len();
        }
        if let (Some(f_star), true) = (cfg.f_star, cfg.quality_every > 0) {
            if k % cfg.quality_every == 0 {
                row.quality = approximation_quality(&plan, net, scen, params, f_star, cfg).ok();
            }
        }
        state.objective_history.push(plan.master_objective);
        state.trace.push(row);
        state.iteration = k;

        if cfg.checkpoint_every > 0 && k % cfg.checkpoint_every == 0 {
            if let Some(dir) = &cfg.checkpoint_dir {
                std::fs::create_dir_all(dir)?;
                state.save(dir.join(format!("checkpoint_{k:05}.json")))?;
            }
        }
        if k >= cfg.min_iters && check_termination(&state.objective_history, cfg.epsilon, cfg.window) {
            converged = true;
            break;
        }
    }

    let solution = master_plan(cfg, &state, params)?;
    let quality_history = state.trace.iter().filter_map(|r| r.quality.map(|q| (r.k, q))).collect();
    Ok(RunResult {
        solution,
        vfa: state.vfa,
        cuts: state.cuts,
        iterations: state.iteration,
        converged,
        trace: state.trace,
        quality_history,
    })
}

fn master_plan(cfg: &EngineConfig, state: &Checkpoint, params: &PlanningParams) -> Result<MasterSolution> {
    let model = build_master(cfg.encoding, &state.vfa, params, &state.cuts)?;
    solve_master(&model, params, &cfg.master_solver).map_err(|e| match e {
        Error::Infeasible(m) => Error::Infeasible(format!("{m} at iteration {}", state.iteration + 1)),
        other => other,
    })
}

/// `f_star / F(x)`, with `F` the expected cost of the plan over every
/// scenario (first-stage cost included).
pub fn approximation_quality(
    x: &MasterSolution,
    net: &Network,
    scen: &ScenarioSet,
    params: &PlanningParams,
    f_star: f64,
    cfg: &EngineConfig,
) -> Result<f64> {
    if !(f_star > 0.0) {
        return Err(Error::Parameter("f_star must be positive".into()));
    }
    let f = params.first_stage_value(&x.units)
        + true_expected_value(&x.units, net, scen, cfg.objective, &cfg.dg, &cfg.solver, cfg.execution)?;
    if !(f > 0.0) {
        return Err(Error::Domain(format!("expected cost {f} is not positive; quality undefined")));
    }
    Ok(f_star / f)
}
