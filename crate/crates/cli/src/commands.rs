use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use spar_opf::bounds::{run_bounds, BoundsOutcome};
use spar_opf::engine::{run_spar, write_trace_csv, RunResult};
use spar_opf::gridmodel::Network;
use spar_opf::oracle::{solve_extensive_form, true_expected_value};
use spar_opf::scenarios::{generate_scenarios, load_history, ScenarioSet};
use spar_opf::Error;

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const SOLUTION_FILE: &str = "solution.json";
pub const VFA_FILE: &str = "vfa.json";
pub const TRACE_FILE: &str = "trace.csv";
pub const BOUNDS_FILE: &str = "bounds.json";
pub const COMPARE_FILE: &str = "compare.csv";
pub const SCENARIOS_FILE: &str = "scenarios.csv";

fn write(path: PathBuf, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
    std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    Ok(path)
}

pub fn load_network(cfg: &RunConfig) -> Result<Network> {
    Ok(Network::load(cfg.network_path()?)?)
}

fn generated_scenarios(cfg: &RunConfig, history: &Path, buses: usize) -> Result<ScenarioSet> {
    let hist = load_history(history)?;
    let all = generate_scenarios(&hist, cfg.hours_per_stratum, cfg.noise_std, buses, cfg.seed)?;
    Ok(match cfg.scenario_count {
        Some(k) if k < all.len() => all.subsample(k, cfg.seed)?,
        _ => all,
    })
}

pub fn load_scenarios(cfg: &RunConfig, buses: usize) -> Result<ScenarioSet> {
    let scen = match (&cfg.scenario_file, &cfg.history) {
        (Some(p), _) => ScenarioSet::load(p)?,
        (None, Some(h)) => generated_scenarios(cfg, h, buses)?,
        (None, None) => return Err(CliError::Config("either scenario_file or history must be set".into())),
    };
    if scen.bus_count() != buses {
        return Err(CliError::Config(format!("scenarios cover {} buses, network has {buses}", scen.bus_count())));
    }
    Ok(scen)
}

pub struct SolveReport {
    pub run: RunResult,
    pub expected_cost: f64,
    pub files: Vec<PathBuf>,
}

fn solution_json(cfg: &RunConfig, net: &Network, run: &RunResult, expected_cost: f64) -> Result<String> {
    let mut v = run.solution.to_json(&net.bus_ids(), cfg.unit_kw);
    v["objective"] = cfg.objective.clone().into();
    v["encoding"] = cfg.encoding.clone().into();
    v["seed"] = cfg.seed.into();
    v["iterations"] = run.iterations.into();
    v["converged"] = run.converged.into();
    v["cuts"] = run.cuts.len().into();
    v["expected_cost"] = expected_cost.into();
    serde_json::to_string_pretty(&v).map_err(|e| CliError::Core(e.into()))
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<SolveReport> {
    cfg.validate(true)?;
    let net = load_network(cfg)?;
    let scen = load_scenarios(cfg, net.bus_count())?;
    let engine = cfg.engine()?;
    let params = cfg.planning();
    let run = run_spar(&engine, &net, &scen, &params)?;
    let expected_cost = params.first_stage_value(&run.solution.units)
        + true_expected_value(&run.solution.units, &net, &scen, engine.objective, &engine.dg, &engine.solver, engine.execution)?;

    let out = &cfg.output_dir;
    let mut trace = Vec::new();
    write_trace_csv(&run.trace, &mut trace)?;
    let files = vec![
        write(out.join(SOLUTION_FILE), solution_json(cfg, &net, &run, expected_cost)?)?,
        write(out.join(VFA_FILE), run.vfa.to_json()?)?,
        write(out.join(TRACE_FILE), trace)?,
    ];
    Ok(SolveReport { run, expected_cost, files })
}

pub fn cmd_bounds(cfg: &RunConfig) -> Result<BoundsOutcome> {
    cfg.validate(true)?;
    let net = load_network(cfg)?;
    let scen = load_scenarios(cfg, net.bus_count())?;
    let outcome = run_bounds(&cfg.engine()?, &net, &scen, &cfg.planning(), &cfg.bounds()?)?;
    let json = serde_json::to_string_pretty(&outcome).map_err(|e| CliError::Core(e.into()))?;
    write(cfg.output_dir.join(BOUNDS_FILE), json)?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub method: &'static str,
    /// `None` when the method did not produce a plan.
    pub objective: Option<f64>,
    pub gap_percent: Option<f64>,
    pub seconds: f64,
    pub status: String,
    pub plan: Vec<i64>,
}

pub fn compare_csv(rows: &[CompareRow]) -> String {
    let num = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = String::from("method,objective,gap_percent,wall_seconds,status,plan\n");
    for r in rows {
        let plan: Vec<String> = r.plan.iter().map(|x| x.to_string()).collect();
        let _ = writeln!(
            s,
            "{},{},{},{:.3},{},{}",
            r.method,
            num(r.objective),
            num(r.gap_percent),
            r.seconds,
            r.status,
            plan.join(";")
        );
    }
    s
}

pub fn compare_table(rows: &[CompareRow]) -> String {
    let mut s = format!("{:<6} {:>14} {:>9} {:>9}  {}\n", "method", "objective", "gap (%)", "time (s)", "status");
    for r in rows {
        let obj = r.objective.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into());
        let gap = r.gap_percent.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(s, "{:<6} {:>14} {:>9} {:>9.3}  {}", r.method, obj, gap, r.seconds, r.status);
    }
    s
}

/// SPAR results are kept even when the extensive form is refused.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<CompareRow>> {
    cfg.validate(true)?;
    let net = load_network(cfg)?;
    let scen = load_scenarios(cfg, net.bus_count())?;
    let engine = cfg.engine()?;
    let params = cfg.planning();

    let t = Instant::now();
    let run = run_spar(&engine, &net, &scen, &params)?;
    let spar_value = params.first_stage_value(&run.solution.units)
        + true_expected_value(&run.solution.units, &net, &scen, engine.objective, &engine.dg, &engine.solver, engine.execution)?;
    let spar_secs = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let ef = solve_extensive_form(&net, &scen, &params, engine.objective, &engine.dg, &engine.solver, cfg.ef_variable_limit);
    let ef_secs = t.elapsed().as_secs_f64();
    let ef_row = match ef {
        Ok(sol) => CompareRow {
            method: "ef",
            objective: Some(sol.value),
            gap_percent: Some(0.0),
            seconds: ef_secs,
            status: "optimal".into(),
            plan: sol.units,
        },
        Err(Error::Refused(_)) => CompareRow {
            method: "ef",
            objective: None,
            gap_percent: None,
            seconds: ef_secs,
            status: "refused (size guard)".into(),
            plan: Vec::new(),
        },
        Err(e) => return Err(e.into()),
    };
    let gap = ef_row.objective.map(|f| 100.0 * (spar_value - f) / f.abs().max(f64::MIN_POSITIVE));
    let rows = vec![
        CompareRow {
            method: "spar",
            objective: Some(spar_value),
            gap_percent: gap,
            seconds: spar_secs,
            status: if run.converged { "converged".into() } else { "iteration limit".into() },
            plan: run.solution.units,
        },
        ef_row,
    ];
    write(cfg.output_dir.join(COMPARE_FILE), compare_csv(&rows))?;
    Ok(rows)
}

pub fn cmd_scenarios(cfg: &RunConfig) -> Result<(ScenarioSet, PathBuf)> {
    cfg.validate(false)?;
    let history = cfg.history.as_deref().ok_or_else(|| CliError::Config("history path is not set".into()))?;
    if !history.is_file() {
        return Err(CliError::io(history, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let net = load_network(cfg)?;
    let scen = generated_scenarios(cfg, history, net.bus_count())?;
    let path = cfg.output_dir.join(SCENARIOS_FILE);
    scen.save(&path)?;
    Ok((scen, path))
}
