//! Ground truth at desk scale: the extensive form, exhaustive enumeration
//! of the planning grid and full simulation of a fixed plan.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gridmodel::{add_second_stage, solve_second_stage, DgParams, Linking, Network, Objective};
use crate::master::{planning_rows, PlanningParams};
use crate::mpif::{self, ModelSpec, SolverConfig, Status};
use crate::parallel::{self, Execution};
use crate::scenarios::ScenarioSet;

/// Default variable limit for the extensive form.
pub const EF_VARIABLE_LIMIT: usize = 50_000;
/// Default limit on planning-feasible grid points.
pub const GRID_LIMIT: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub units: Vec<i64>,
    pub value: f64,
    /// Variables and rows of the solved model (EF) or grid points visited.
    pub size: usize,
}

/// Second-stage value of `units` in every scenario.
pub fn scenario_values(
    units: &[i64],
    net: &Network,
    scen: &ScenarioSet,
    objective: Objective,
    dg: &DgParams,
    solver: &SolverConfig,
    exec: Execution,
) -> Result<Vec<Option<f64>>> {
    let capacity: Vec<f64> = units.iter().map(|&x| x as f64).collect();
    parallel::try_map(exec, &scen.scenarios, |sc| {
        let out = solve_second_stage(net, sc, &capacity, objective, dg, solver)?;
        Ok(out.feasible.then_some(out.recourse_value))
    })
}

/// `sum_s p_s Q(x, xi_s)`; an infeasible scenario is an error naming it.
pub fn true_expected_value(
    units: &[i64],
    net: &Network,
    scen: &ScenarioSet,
    objective: Objective,
    dg: &DgParams,
    solver: &SolverConfig,
    exec: Execution,
) -> Result<f64> {
    let values = scenario_values(units, net, scen, objective, dg, solver, exec)?;
    let mut total = 0.0;
    for (s, (v, p)) in values.iter().zip(&scen.probabilities).enumerate() {
        match v {
            Some(q) => total += p * q,
            None => return Err(Error::Infeasible(format!("plan {units:?} is infeasible in scenario {s}"))),
        }
    }
    Ok(total)
}

/// Deterministic equivalent: first-stage rows plus one second-stage copy per
/// scenario, weighted by probability. Refuses models above `variable_limit`.
pub fn solve_extensive_form(
    net: &Network,
    scen: &ScenarioSet,
    params: &PlanningParams,
    objective: Objective,
    dg: &DgParams,
    solver: &SolverConfig,
    variable_limit: usize,
) -> Result<OracleSolution> {
    let n = net.bus_count();
    params.validate(n)?;
    // Size estimate from a single copy.
    let mut probe = ModelSpec::new();
    add_second_stage(&mut probe, net, &scen.scenarios[0], Linking::Fixed(&vec![0.0; n]), objective, dg, 1.0, "")?;
    let estimate = 2 * n + scen.len() * probe.num_vars();
    if estimate > variable_limit {
        return Err(Error::Refused(format!(
            "extensive form needs about {estimate} variables and {} rows (limit {variable_limit} variables)",
            3 * n + scen.len() * probe.num_rows()
        )));
    }

    let mut model = ModelSpec::new();
    let lmax = params.max_units() as f64;
    let x: Vec<_> = net.buses.iter().map(|b| model.integer(format!("x[{}]", b.id), 0.0, lmax)).collect();
    planning_rows(&mut model, params, &net.bus_ids(), &x, &[])?;
    for (s, (sc, p)) in scen.scenarios.iter().zip(&scen.probabilities).enumerate() {
        add_second_stage(&mut model, net, sc, Linking::Variables(&x), objective, dg, *p, &format!("s{s}:"))?;
    }
    let out = mpif::solve(&model, solver);
    match out.status {
        Status::Optimal => Ok(OracleSolution {
            units: x.iter().map(|v| out.primal[v.0].round() as i64).collect(),
            value: out.objective_value,
            size: model.num_vars() + model.num_rows(),
        }),
        Status::Infeasible => Err(Error::Infeasible("no plan is feasible in every scenario".into())),
        Status::Unbounded => Err(Error::Solver("extensive form reported unbounded".into())),
        Status::Error => Err(Error::Solver(out.message.unwrap_or_default())),
    }
}

/// Every planning-feasible integer plan, in lexicographic order.
pub fn feasible_grid(params: &PlanningParams, buses: usize, limit: usize) -> Result<Vec<Vec<i64>>> {
    let lmax = params.max_units();
    let lmin = params.min_units().max(1);
    let per_unit = params.unit_kw * params.unit_cost;
    let mut out = Vec::new();
    let mut cur = vec![0i64; buses];

    fn walk(
        i: usize,
        sited: usize,
        spend: f64,
        cur: &mut Vec<i64>,
        out: &mut Vec<Vec<i64>>,
        ctx: (&PlanningParams, i64, i64, f64, usize),
    ) -> bool {
        let (params, lmin, lmax, per_unit, limit) = ctx;
        if i == cur.len() {
            if params.admits(cur) {
                if out.len() == limit {
                    return false;
                }
                out.push(cur.clone());
            }
            return true;
        }
        cur[i] = 0;
        if !walk(i + 1, sited, spend, cur, out, ctx) {
            return false;
        }
        if sited < params.n_max {
            for v in lmin..=lmax {
                let s = spend + v as f64 * per_unit;
                if s > params.budget * (1.0 + 1e-12) {
                    break;
                }
                cur[i] = v;
                if !walk(i + 1, sited + 1, s, cur, out, ctx) {
                    return false;
                }
            }
            cur[i] = 0;
        }
        true
    }

    if !walk(0, 0, 0.0, &mut cur, &mut out, (params, lmin, lmax, per_unit, limit)) {
        return Err(Error::Refused(format!("planning grid has more than {limit} feasible points")));
    }
    Ok(out)
}

/// Brute force over the planning grid; infeasible plans score `+inf`.
#[allow(clippy::too_many_arguments)]
pub fn enumerate_grid(
    net: &Network,
    scen: &ScenarioSet,
    params: &PlanningParams,
    objective: Objective,
    dg: &DgParams,
    solver: &SolverConfig,
    exec: Execution,
    limit: usize,
) -> Result<OracleSolution> {
    params.validate(net.bus_count())?;
    let grid = feasible_grid(params, net.bus_count(), limit)?;
    let values = parallel::try_map(exec, &grid, |x| -> Result<f64> {
        let v = scenario_values(x, net, scen, objective, dg, solver, Execution::Sequential)?;
        Ok(v.iter()
            .zip(&scen.probabilities)
            .map(|(q, p)| q.map_or(f64::INFINITY, |q| p * q))
            .sum::<f64>()
            + params.first_stage_value(x))
    })?;
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] - 1e-12 {
            best = k;
        }
    }
    if !values[best].is_finite() {
        return Err(Error::Infeasible("no grid point is feasible in every scenario".into()));
    }
    Ok(OracleSolution { units: grid[best].clone(), value: values[best], size: grid.len() })
}
