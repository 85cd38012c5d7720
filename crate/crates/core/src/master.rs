//! First-stage DG siting and sizing models.
//!
//! Two encodings of the learned separable value function are provided:
//! the lambda form (one binary selector per breakpoint) and the epigraph
//! form (one continuous variable bounded below by every affine piece).
//! Both carry the same planning rows and feasibility cuts.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpif::{self, ModelSpec, Sense, SolverConfig, Status, VarId, VarKind};
use crate::pwl::{breakpoint_values, CoordinateFunctionSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanningParams {
    /// Investment budget, in the same currency unit as `unit_cost * kW`.
    pub budget: f64,
    /// Size of one DG unit, kW.
    pub unit_kw: f64,
    /// Cost per kW of installed DG.
    pub unit_cost: f64,
    /// Minimum installed size at a chosen site, kW.
    pub p_min_kw: f64,
    /// Maximum installed size at any site, kW.
    pub p_max_kw: f64,
    pub n_min: usize,
    pub n_max: usize,
    /// Optional first-stage cost per installed unit, one entry per bus.
    #[serde(default)]
    pub first_stage_cost: Vec<f64>,
}

impl Default for PlanningParams {
    fn default() -> Self {
        Self {
            budget: 1500.0,
            unit_kw: 2.0,
            unit_cost: 1.01,
            p_min_kw: 33.0,
            p_max_kw: 333.0,
            n_min: 0,
            n_max: 10,
            first_stage_cost: Vec::new(),
        }
    }
}

impl PlanningParams {
    /// Largest number of units at one bus.
    pub fn max_units(&self) -> i64 {
        (self.p_max_kw / self.unit_kw + 1e-9).floor() as i64
    }

    /// Most units the budget pays for across all sites.
    pub fn budget_units(&self) -> i64 {
        (self.budget / (self.unit_cost * self.unit_kw) + 1e-9).floor() as i64
    }

    /// Fewest units at a chosen site.
    pub fn min_units(&self) -> i64 {
        (self.p_min_kw / self.unit_kw - 1e-9).ceil().max(0.0) as i64
    }

    pub fn validate(&self, buses: usize) -> Result<()> {
        let bad = |m: String| Err(Error::Parameter(m));
        if !(self.budget > 0.0) {
            return bad(format!("budget must be positive, got {}", self.budget));
        }
        if !(self.unit_kw > 0.0) || !(self.unit_cost >= 0.0) {
            return bad("unit size must be positive and unit cost nonnegative".into());
        }
        if !(0.0 <= self.p_min_kw && self.p_min_kw <= self.p_max_kw) {
            return bad(format!("size bounds [{}, {}] are inconsistent", self.p_min_kw, self.p_max_kw));
        }
        if self.max_units() < 1 {
            return bad("p_max_kw must allow at least one unit".into());
        }
        if self.min_units() > self.max_units() {
            return bad("no unit count fits between p_min_kw and p_max_kw".into());
        }
        if self.n_min > self.n_max || self.n_max > buses {
            return bad(format!("siting bounds [{}, {}] inconsistent with {buses} buses", self.n_min, self.n_max));
        }
        if !self.first_stage_cost.is_empty() && self.first_stage_cost.len() != buses {
            return bad("first_stage_cost needs one entry per bus".into());
        }
        Ok(())
    }

    fn unit_cost_of(&self, bus: usize) -> f64 {
        self.first_stage_cost.get(bus).copied().unwrap_or(0.0)
    }

    /// First-stage cost of a plan.
    pub fn first_stage_value(&self, units: &[i64]) -> f64 {
        units.iter().enumerate().map(|(i, &x)| self.unit_cost_of(i) * x as f64).sum()
    }

    /// Whether some siting vector makes `units` satisfy the planning rows.
    pub fn admits(&self, units: &[i64]) -> bool {
        let lmax = self.max_units();
        let lmin = self.min_units();
        if units.iter().any(|&x| x < 0 || x > lmax || (x > 0 && x < lmin)) {
            return false;
        }
        let spend: f64 = units.iter().map(|&x| x as f64 * self.unit_kw * self.unit_cost).sum();
        if spend > self.budget * (1.0 + 1e-12) {
            return false;
        }
        let sited = units.iter().filter(|&&x| x > 0).count();
        let optional = if lmin == 0 { units.len() - sited } else { 0 };
        sited <= self.n_max && sited + optional >= self.n_min
    }
}

/// `sum_i coefficients[i] * x_i + constant >= 0` in units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCut {
    pub coefficients: Vec<f64>,
    pub constant: f64,
}

impl FeasibilityCut {
    pub fn slack(&self, units: &[i64]) -> f64 {
        self.coefficients.iter().zip(units).map(|(c, &x)| c * x as f64).sum::<f64>() + self.constant
    }
}

/// Append a cut built from a Farkas certificate mapped onto the linking
/// coordinates. The cut is scaled so its largest coefficient has unit size.
pub fn add_feasibility_cut(cuts: &mut Vec<FeasibilityCut>, coefficients: &[f64], constant: f64) -> Result<()> {
    let scale = coefficients.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if !(scale > 0.0) || !scale.is_finite() || !constant.is_finite() {
        return Err(Error::Domain("feasibility cut needs a finite nonzero ray".into()));
    }
    cuts.push(FeasibilityCut {
        coefficients: coefficients.iter().map(|c| c / scale).collect(),
        constant: constant / scale,
    });
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoding {
    Lambda,
    #[default]
    Epigraph,
}

impl std::str::FromStr for Encoding {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "lambda" => Ok(Encoding::Lambda),
            "epigraph" => Ok(Encoding::Epigraph),
            other => Err(format!("unknown encoding '{other}' (expected lambda or epigraph)")),
        }
    }
}

/// A master model together with the handles needed to read a plan back.
#[derive(Debug, Clone)]
pub struct MasterModel {
    pub model: ModelSpec,
    pub encoding: Encoding,
    pub units: Vec<VarId>,
    pub siting: Vec<VarId>,
}

pub(crate) fn planning_rows(model: &mut ModelSpec, params: &PlanningParams, labels: &[String], x: &[VarId], cuts: &[FeasibilityCut]) -> Result<Vec<VarId>> {
    let n = labels.len();
    params.validate(n)?;
    let mut delta = Vec::with_capacity(n);
    for (i, label) in labels.iter().enumerate() {
        let d = model.binary(format!("delta[{label}]"));
        delta.push(d);
        let u = params.unit_kw;
        model.add_constraint(format!("size_lo[{label}]"), vec![(x[i], u), (d, -params.p_min_kw)], Sense::Ge, 0.0);
        model.add_constraint(format!("size_hi[{label}]"), vec![(x[i], u), (d, -params.p_max_kw)], Sense::Le, 0.0);
        let h = params.unit_cost_of(i);
        if h != 0.0 {
            model.add_objective(x[i], h);
        }
    }
    // Every unit costs the same, so for integer counts the budget is a cap on
    // the total; the rounded-down form is exact and has a tighter relaxation.
    let spend = x.iter().map(|&v| (v, 1.0)).collect();
    model.add_constraint("budget", spend, Sense::Le, params.budget_units() as f64);
    let count: Vec<(VarId, f64)> = delta.iter().map(|&d| (d, 1.0)).collect();
    model.add_constraint("sites_lo", count.clone(), Sense::Ge, params.n_min as f64);
    model.add_constraint("sites_hi", count, Sense::Le, params.n_max as f64);
    for (k, cut) in cuts.iter().enumerate() {
        if cut.coefficients.len() != n {
            return Err(Error::Construction(format!("cut {k} has {} coefficients for {n} buses", cut.coefficients.len())));
        }
        let coeffs = x.iter().zip(&cut.coefficients).filter(|(_, c)| **c != 0.0).map(|(&v, &c)| (v, c)).collect();
        model.add_constraint(format!("cut[{k}]"), coeffs, Sense::Ge, -cut.constant);
    }
    Ok(delta)
}

fn check_span(vfa: &CoordinateFunctionSet, params: &PlanningParams) -> Result<i64> {
    let lmax = params.max_units();
    for (label, f) in vfa.labels.iter().zip(&vfa.functions) {
        if f.lower_break != 0 || f.upper_break != lmax {
            return Err(Error::Construction(format!(
                "coordinate {label} spans {}..{} but the plan needs 0..{lmax}",
                f.lower_break, f.upper_break
            )));
        }
    }
    Ok(lmax)
}

pub fn build_lambda_master(vfa: &CoordinateFunctionSet, params: &PlanningParams, cuts: &[FeasibilityCut]) -> Result<MasterModel> {
    let lmax = check_span(vfa, params)?;
    let lmin = params.min_units();
    let mut model = ModelSpec::new();
    let mut units = Vec::with_capacity(vfa.len());
    let mut pending = Vec::new();
    for (label, f) in vfa.labels.iter().zip(&vfa.functions) {
        let x = model.continuous(format!("x[{label}]"), 0.0, lmax as f64);
        units.push(x);
        let g = breakpoint_values(f);
        let mut lambdas = Vec::with_capacity(g.len());
        let mut pick = vec![(x, -1.0)];
        for (l, gl) in g.iter().enumerate() {
            // Counts below the minimum site size are unreachable.
            let upper = if l > 0 && (l as i64) < lmin { 0.0 } else { 1.0 };
            let lam = model.add_var(format!("lambda[{label}.{l}]"), VarKind::Binary, 0.0, upper);
            model.add_objective(lam, *gl);
            lambdas.push(lam);
            if l > 0 {
                pick.push((lam, l as f64));
            }
        }
        pending.push((label.clone(), lambdas, pick));
    }
    let siting = planning_rows(&mut model, params, &vfa.labels, &units, cuts)?;
    for ((label, lambdas, pick), d) in pending.into_iter().zip(&siting) {
        model.add_constraint(format!("convex[{label}]"), lambdas.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
        model.add_constraint(format!("select[{label}]"), pick, Sense::Eq, 0.0);
        // Any nonzero selection implies a site.
        model.add_constraint(format!("sited[{label}]"), vec![(*d, 1.0), (lambdas[0], 1.0)], Sense::Ge, 1.0);
    }
    Ok(MasterModel { model, encoding: Encoding::Lambda, units, siting })
}

/// Epigraph rows are written in perspective form,
/// `t_i >= m^l x_i + (g^l - m^l l) delta_i`, which coincides with
/// `t_i >= g^l + m^l (x_i - l)` whenever `delta_i = 1` and reduces to
/// `t_i >= 0 = g_i(0)` when the bus is not sited. The relaxation is the
/// convex hull of the on/off choice, which keeps branch and bound small.
pub fn build_epigraph_master(vfa: &CoordinateFunctionSet, params: &PlanningParams, cuts: &[FeasibilityCut]) -> Result<MasterModel> {
    let lmax = check_span(vfa, params)?;
    let mut model = ModelSpec::new();
    let mut units = Vec::with_capacity(vfa.len());
    let mut epi = Vec::with_capacity(vfa.len());
    for (label, f) in vfa.labels.iter().zip(&vfa.functions) {
        if !f.is_isotone() {
            return Err(Error::Domain(format!("coordinate {label} is not convex; the epigraph form needs isotone slopes")));
        }
        units.push(model.integer(format!("x[{label}]"), 0.0, lmax as f64));
        let t = model.free(format!("t[{label}]"));
        model.add_objective(t, 1.0);
        epi.push(t);
    }
    let siting = planning_rows(&mut model, params, &vfa.labels, &units, cuts)?;
    for (i, (label, f)) in vfa.labels.iter().zip(&vfa.functions).enumerate() {
        let g = breakpoint_values(f);
        // The piece through the last breakpoint coincides with the one
        // before it, so one row per slope suffices.
        for (l, m) in f.slopes.iter().enumerate() {
            let intercept = g[l] - m * l as f64;
            model.add_constraint(
                format!("epi[{label}.{l}]"),
                vec![(epi[i], 1.0), (units[i], -m), (siting[i], -intercept)],
                Sense::Ge,
                0.0,
            );
        }
    }
    Ok(MasterModel { model, encoding: Encoding::Epigraph, units, siting })
}

pub fn build_master(encoding: Encoding, vfa: &CoordinateFunctionSet, params: &PlanningParams, cuts: &[FeasibilityCut]) -> Result<MasterModel> {
    match encoding {
        Encoding::Lambda => build_lambda_master(vfa, params, cuts),
        Encoding::Epigraph => build_epigraph_master(vfa, params, cuts),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MasterSolution {
    pub units: Vec<i64>,
    pub siting: Vec<bool>,
    pub master_objective: f64,
}

impl MasterSolution {
    /// Plan with units only; siting follows the unit counts.
    pub fn from_units(units: Vec<i64>, master_objective: f64) -> Self {
        let siting = units.iter().map(|&x| x > 0).collect();
        Self { units, siting, master_objective }
    }

    pub fn capacity(&self) -> Vec<f64> {
        self.units.iter().map(|&x| x as f64).collect()
    }

    pub fn total_units(&self) -> i64 {
        self.units.iter().sum()
    }

    /// JSON report: one entry per bus with units, siting and kW.
    pub fn to_json(&self, labels: &[String], unit_kw: f64) -> serde_json::Value {
        let buses: Vec<serde_json::Value> = labels
            .iter()
            .zip(self.units.iter().zip(&self.siting))
            .map(|(label, (&u, &s))| {
                serde_json::json!({ "bus": label, "units": u, "sited": s, "kw": u as f64 * unit_kw })
            })
            .collect();
        serde_json::json!({
            "master_objective": self.master_objective,
            "total_units": self.total_units(),
            "total_kw": self.total_units() as f64 * unit_kw,
            "buses": buses,
        })
    }
}

pub fn solve_master(master: &MasterModel, params: &PlanningParams, solver: &SolverConfig) -> Result<MasterSolution> {
    let out = mpif::solve(&master.model, solver);
    match out.status {
        Status::Optimal => {}
        Status::Infeasible => {
            return Err(Error::Infeasible(format!(
                "master problem has no feasible plan ({} rows, {} cut rows)",
                master.model.num_rows(),
                master.model.constraints.iter().filter(|c| c.tag.starts_with("cut[")).count()
            )))
        }
        Status::Unbounded => return Err(Error::Solver("master problem reported unbounded".into())),
        Status::Error => return Err(Error::Solver(out.message.unwrap_or_default())),
    }
    let units: Vec<i64> = master.units.iter().map(|v| out.primal[v.0].round() as i64).collect();
    let siting: Vec<bool> = master.siting.iter().map(|v| out.primal[v.0] > 0.5).collect();
    let sol = MasterSolution { units, siting, master_objective: out.objective_value };
    if !params.admits(&sol.units) {
        return Err(Error::Solver(format!("master returned a plan outside the planning rows: {:?}", sol.units)));
    }
    Ok(sol)
}

/// Uniformly drawn planning-feasible plan that also satisfies every cut,
/// by rejection. `None` after `attempts` misses.
pub fn random_feasible_plan<R: Rng + ?Sized>(
    params: &PlanningParams,
    buses: usize,
    cuts: &[FeasibilityCut],
    rng: &mut R,
    attempts: usize,
) -> Option<Vec<i64>> {
    let lmin = params.min_units().max(1);
    let lmax = params.max_units();
    let idx: Vec<usize> = (0..buses).collect();
    for _ in 0..attempts {
        let k = rng.gen_range(params.n_min..=params.n_max);
        let mut units = vec![0i64; buses];
        for &i in idx.choose_multiple(rng, k) {
            units[i] = rng.gen_range(lmin..=lmax);
        }
        if params.admits(&units) && cuts.iter().all(|c| c.slack(&units) >= -1e-9) {
            return Some(units);
        }
    }
    None
}
