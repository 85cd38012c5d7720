#![allow(dead_code)]

use std::path::PathBuf;

use spar_opf::gridmodel::{Bus, DgParams, Line, Network};
use spar_opf::master::PlanningParams;
use spar_opf::scenarios::{Scenario, ScenarioSet};

pub fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

pub fn ieee13() -> Network {
    Network::load(data("ieee13.json")).unwrap()
}

pub fn ieee13_scenarios() -> ScenarioSet {
    ScenarioSet::load(data("ieee13_scenarios.csv")).unwrap()
}

/// Planning rows used for every 13-bus experiment.
pub fn ieee13_params() -> PlanningParams {
    PlanningParams {
        budget: 600.0,
        unit_kw: 25.0,
        unit_cost: 1.01,
        p_min_kw: 50.0,
        p_max_kw: 200.0,
        n_min: 0,
        n_max: 4,
        first_stage_cost: vec![],
    }
}

pub fn ieee13_dg() -> DgParams {
    DgParams { unit_kw: 25.0, power_factor: 1.0 }
}

fn phase_a_line(from: usize, to: usize, r: f64, x: f64, rating: f64) -> Line {
    let mut rm = [[0.0; 3]; 3];
    let mut xm = [[0.0; 3]; 3];
    rm[0][0] = r;
    xm[0][0] = x;
    Line { from, to, phases: [true, false, false], r: rm, x: xm, rating: [rating, 0.0, 0.0] }
}

/// Single-phase chain: substation then `loads.len()` loaded buses in series.
/// Loads are in p.u. on a 1000 kVA base.
pub fn chain(loads: &[f64], rating: f64) -> Network {
    let mut buses = vec![Bus { id: "s".into(), phases: [true, false, false], load_p: [0.0; 3], load_q: [0.0; 3], v_ref: [1.0; 3] }];
    let mut lines = Vec::new();
    for (k, &p) in loads.iter().enumerate() {
        buses.push(Bus {
            id: format!("b{}", k + 1),
            phases: [true, false, false],
            load_p: [p, 0.0, 0.0],
            load_q: [0.3 * p, 0.0, 0.0],
            v_ref: [1.0; 3],
        });
        lines.push(phase_a_line(k, k + 1, 0.02, 0.04, rating));
    }
    Network::new("chain".into(), 1000.0, 4.16, buses, lines, 0, [1.0; 3], 0.81, 1.21).unwrap()
}

pub fn uniform_set(buses: usize, cells: &[(f64, f64)]) -> ScenarioSet {
    ScenarioSet::uniform(cells.iter().map(|&(l, p)| Scenario::uniform(buses, l, p)).collect()).unwrap()
}

/// Small planning rows in units of `unit_kw` kW.
pub fn small_params(lmax: i64, n_max: usize, budget_units: i64, unit_kw: f64) -> PlanningParams {
    PlanningParams {
        budget: budget_units as f64 * unit_kw,
        unit_kw,
        unit_cost: 1.0,
        p_min_kw: 0.0,
        p_max_kw: lmax as f64 * unit_kw,
        n_min: 0,
        n_max,
        first_stage_cost: vec![],
    }
}
