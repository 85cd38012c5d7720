//! Three-phase unbalanced radial feeder model and the second-stage OPF.
//!
//! The power-flow physics is the linearized branch-flow model: per-phase
//! active/reactive balance at every non-substation bus, a Hadamard-coupled
//! voltage-drop row per line phase, a hexagonal inner approximation of each
//! line-phase thermal limit and a box on squared voltage magnitudes. DG
//! dispatch at each bus is capped by the first-stage capacity through one
//! linking row per bus; the duals of those rows are the subgradients the
//! learning loop consumes.

use std::collections::{HashMap, VecDeque};
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpif::{self, ModelSpec, RowId, Sense, SolveOutcome, SolverConfig, Status, VarId};
use crate::scenarios::Scenario;

pub type Mat3 = [[f64; 3]; 3];

pub const PHASES: [char; 3] = ['a', 'b', 'c'];

/// Ratio between the hexagon's inscribed-area-matched half width and the
/// circular rating: `sqrt((2*pi/6) / sin(2*pi/6))`.
pub fn polygon_scale() -> f64 {
    ((2.0 * PI / 6.0) / (2.0 * PI / 6.0).sin()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// Sum of absolute squared-voltage deviations from the reference.
    #[default]
    VoltageDeviation,
    /// Quadratic line losses with voltage frozen at nominal, in kW.
    PowerLoss,
}

impl std::str::FromStr for Objective {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "vdev" | "voltage_deviation" => Ok(Objective::VoltageDeviation),
            "ploss" | "power_loss" => Ok(Objective::PowerLoss),
            other => Err(format!("unknown objective '{other}' (expected vdev or ploss)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DgParams {
    /// Rating of one DG unit in kW.
    pub unit_kw: f64,
    /// DG power factor; reactive output is `tan(acos(pf))` times active.
    pub power_factor: f64,
}

impl Default for DgParams {
    fn default() -> Self {
        Self { unit_kw: 2.0, power_factor: 1.0 }
    }
}

impl DgParams {
    pub fn tan_theta(&self) -> f64 {
        self.power_factor.clamp(1e-6, 1.0).acos().tan()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: String,
    pub phases: [bool; 3],
    /// Base active load per phase, p.u.
    pub load_p: [f64; 3],
    /// Base reactive load per phase, p.u.
    pub load_q: [f64; 3],
    /// Reference squared voltage per phase, p.u.
    pub v_ref: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Line {
    /// Parent bus index (toward the substation).
    pub from: usize,
    pub to: usize,
    pub phases: [bool; 3],
    pub r: Mat3,
    pub x: Mat3,
    /// Thermal rating per phase, p.u.
    pub rating: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    pub buses: Vec<Bus>,
    pub lines: Vec<Line>,
    pub substation: usize,
    pub substation_voltage: [f64; 3],
    pub v_min: f64,
    pub v_max: f64,
    /// Index of the line feeding each bus (`None` at the substation).
    pub parent_line: Vec<Option<usize>>,
    pub child_lines: Vec<Vec<usize>>,
}

// ---------------------------------------------------------------------------
// File schema

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NetworkFile {
    #[serde(default)]
    pub name: String,
    pub s_base_kva: f64,
    pub v_base_kv: f64,
    /// "ohm" or "pu"
    #[serde(default = "default_unit")]
    pub impedance_unit: String,
    pub substation: String,
    #[serde(default)]
    pub substation_voltage: Option<[f64; 3]>,
    /// Bounds on squared voltage magnitude, p.u.
    pub v_min: f64,
    pub v_max: f64,
    pub buses: Vec<BusFile>,
    pub lines: Vec<LineFile>,
}

fn default_unit() -> String {
    "ohm".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BusFile {
    pub id: String,
    pub phases: String,
    #[serde(default)]
    pub load_kw: [f64; 3],
    #[serde(default)]
    pub load_kvar: [f64; 3],
    #[serde(default)]
    pub v_ref: Option<[f64; 3]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LineFile {
    pub from: String,
    pub to: String,
    pub phases: String,
    pub r: Mat3,
    pub x: Mat3,
    pub rating_kva: [f64; 3],
}

fn parse_phases(s: &str) -> Result<[bool; 3]> {
    let mut out = [false; 3];
    for c in s.chars() {
        match PHASES.iter().position(|&p| p == c.to_ascii_lowercase()) {
            Some(k) => out[k] = true,
            None => return Err(Error::Ingestion(format!("unknown phase '{c}' in \"{s}\""))),
        }
    }
    if !out.iter().any(|&p| p) {
        return Err(Error::Ingestion("empty phase set".into()));
    }
    Ok(out)
}

fn phase_string(p: &[bool; 3]) -> String {
    PHASES.iter().zip(p).filter(|(_, &on)| on).map(|(c, _)| *c).collect()
}

impl Network {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: NetworkFile = serde_json::from_str(text)?;
        Self::from_file_schema(&file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn from_file_schema(f: &NetworkFile) -> Result<Self> {
        if f.s_base_kva <= 0.0 || f.v_base_kv <= 0.0 {
            return Err(Error::Construction("bases must be positive".into()));
        }
        if !(0.0 < f.v_min && f.v_min < f.v_max) {
            return Err(Error::Construction(format!("bad voltage bounds [{}, {}]", f.v_min, f.v_max)));
        }
        let z_base = match f.impedance_unit.as_str() {
            "ohm" => f.v_base_kv * f.v_base_kv * 1000.0 / f.s_base_kva,
            "pu" => 1.0,
            other => return Err(Error::Construction(format!("unknown impedance unit '{other}'"))),
        };
        let mut index = HashMap::new();
        let mut buses = Vec::with_capacity(f.buses.len());
        for b in &f.buses {
            if index.insert(b.id.clone(), buses.len()).is_some() {
                return Err(Error::Construction(format!("duplicate bus id {}", b.id)));
            }
            let phases = parse_phases(&b.phases)?;
            let mut load_p = [0.0; 3];
            let mut load_q = [0.0; 3];
            for k in 0..3 {
                if !phases[k] && (b.load_kw[k] != 0.0 || b.load_kvar[k] != 0.0) {
                    return Err(Error::Construction(format!(
                        "bus {} has load on absent phase {}",
                        b.id, PHASES[k]
                    )));
                }
                load_p[k] = b.load_kw[k] / f.s_base_kva;
                load_q[k] = b.load_kvar[k] / f.s_base_kva;
            }
            buses.push(Bus { id: b.id.clone(), phases, load_p, load_q, v_ref: b.v_ref.unwrap_or([1.0; 3]) });
        }
        let substation = *index
            .get(&f.substation)
            .ok_or_else(|| Error::Construction(format!("substation {} is not a bus", f.substation)))?;
        let mut lines = Vec::with_capacity(f.lines.len());
        for l in &f.lines {
            let from = *index
                .get(&l.from)
                .ok_or_else(|| Error::Construction(format!("line endpoint {} is not a bus", l.from)))?;
            let to = *index
                .get(&l.to)
                .ok_or_else(|| Error::Construction(format!("line endpoint {} is not a bus", l.to)))?;
            let phases = parse_phases(&l.phases)?;
            let mut r = [[0.0; 3]; 3];
            let mut x = [[0.0; 3]; 3];
            let mut rating = [0.0; 3];
            for a in 0..3 {
                for b in 0..3 {
                    if (l.r[a][b] - l.r[b][a]).abs() > 1e-9 || (l.x[a][b] - l.x[b][a]).abs() > 1e-9 {
                        return Err(Error::Construction(format!(
                            "impedance of line {}-{} is not symmetric",
                            l.from, l.to
                        )));
                    }
                    if phases[a] && phases[b] {
                        r[a][b] = l.r[a][b] / z_base;
                        x[a][b] = l.x[a][b] / z_base;
                    }
                }
                if phases[a] {
                    if l.rating_kva[a] <= 0.0 {
                        return Err(Error::Construction(format!(
                            "line {}-{} phase {} needs a positive rating",
                            l.from, l.to, PHASES[a]
                        )));
                    }
                    rating[a] = l.rating_kva[a] / f.s_base_kva;
                }
            }
            lines.push(Line { from, to, phases, r, x, rating });
        }
        let name = if f.name.is_empty() { "network".to_string() } else { f.name.clone() };
        Network::new(
            name,
            f.s_base_kva,
            f.v_base_kv,
            buses,
            lines,
            substation,
            f.substation_voltage.unwrap_or([1.0; 3]),
            f.v_min,
            f.v_max,
        )
    }

    /// Validates the tree and orients every line away from the substation.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: String,
        s_base_kva: f64,
        v_base_kv: f64,
        buses: Vec<Bus>,
        mut lines: Vec<Line>,
        substation: usize,
        substation_voltage: [f64; 3],
        v_min: f64,
        v_max: f64,
    ) -> Result<Self> {
        let n = buses.len();
        if substation >= n {
            return Err(Error::Construction("substation index out of range".into()));
        }
        if lines.len() + 1 != n {
            return Err(Error::Construction(format!(
                "a radial feeder with {n} buses needs {} lines, found {}",
                n.saturating_sub(1),
                lines.len()
            )));
        }
        let mut adj = vec![Vec::new(); n];
        for (k, l) in lines.iter().enumerate() {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(Error::Construction(format!("line {k} has bad endpoints")));
            }
            adj[l.from].push(k);
            adj[l.to].push(k);
        }
        let mut parent_line = vec![None; n];
        let mut seen = vec![false; n];
        seen[substation] = true;
        let mut queue = VecDeque::from([substation]);
        while let Some(b) = queue.pop_front() {
            for &k in &adj[b] {
                let other = if lines[k].from == b { lines[k].to } else { lines[k].from };
                if seen[other] {
                    continue;
                }
                seen[other] = true;
                if lines[k].from != b {
                    let l = &mut lines[k];
                    std::mem::swap(&mut l.from, &mut l.to);
                }
                parent_line[other] = Some(k);
                queue.push_back(other);
            }
        }
        if let Some(orphan) = seen.iter().position(|s| !s) {
            return Err(Error::Construction(format!(
                "bus {} is not connected to the substation",
                buses[orphan].id
            )));
        }
        let mut child_lines = vec![Vec::new(); n];
        for (k, l) in lines.iter().enumerate() {
            child_lines[l.from].push(k);
            for p in 0..3 {
                if l.phases[p] && !(buses[l.from].phases[p] && buses[l.to].phases[p]) {
                    return Err(Error::Construction(format!(
                        "line {}-{} carries phase {} missing at an endpoint",
                        buses[l.from].id, buses[l.to].id, PHASES[p]
                    )));
                }
            }
        }
        Ok(Self {
            name,
            s_base_kva,
            v_base_kv,
            buses,
            lines,
            substation,
            substation_voltage,
            v_min,
            v_max,
            parent_line,
            child_lines,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.buses.len()
    }

    pub fn bus_index(&self, id: &str) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn bus_ids(&self) -> Vec<String> {
        self.buses.iter().map(|b| b.id.clone()).collect()
    }

    pub fn total_load_kw(&self) -> f64 {
        self.buses.iter().map(|b| b.load_p.iter().sum::<f64>()).sum::<f64>() * self.s_base_kva
    }

    /// Back to the file schema (impedances in p.u.).
    pub fn to_file_schema(&self) -> NetworkFile {
        NetworkFile {
            name: self.name.clone(),
            s_base_kva: self.s_base_kva,
            v_base_kv: self.v_base_kv,
            impedance_unit: "pu".into(),
            substation: self.buses[self.substation].id.clone(),
            substation_voltage: Some(self.substation_voltage),
            v_min: self.v_min,
            v_max: self.v_max,
            buses: self
                .buses
                .iter()
                .map(|b| BusFile {
                    id: b.id.clone(),
                    phases: phase_string(&b.phases),
                    load_kw: b.load_p.map(|p| p * self.s_base_kva),
                    load_kvar: b.load_q.map(|q| q * self.s_base_kva),
                    v_ref: Some(b.v_ref),
                })
                .collect(),
            lines: self
                .lines
                .iter()
                .map(|l| LineFile {
                    from: self.buses[l.from].id.clone(),
                    to: self.buses[l.to].id.clone(),
                    phases: phase_string(&l.phases),
                    r: l.r,
                    x: l.x,
                    rating_kva: l.rating.map(|s| s * self.s_base_kva),
                })
                .collect(),
        }
    }
}

/// Phase-coupled resistance and reactance used in the voltage-drop rows.
///
/// With `A = alpha alpha^H`, `alpha = [1, e^{-j2pi/3}, e^{j2pi/3}]`, returns
/// `r~ = Re(A) o r + Im(A) o x` and `x~ = Re(A) o x - Im(A) o r`, where `o`
/// is the elementwise product.
pub fn sequence_line_matrices(r: &Mat3, x: &Mat3) -> (Mat3, Mat3) {
    let ang = [0.0, -2.0 * PI / 3.0, 2.0 * PI / 3.0];
    let mut rt = [[0.0; 3]; 3];
    let mut xt = [[0.0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let theta = ang[a] - ang[b];
            let (re, im) = if a == b { (1.0, 0.0) } else { (theta.cos(), theta.sin()) };
            rt[a][b] = re * r[a][b] + im * x[a][b];
            xt[a][b] = re * x[a][b] - im * r[a][b];
        }
    }
    (rt, xt)
}

// ---------------------------------------------------------------------------
// Second stage

/// How the linking rows see the first-stage capacity.
#[derive(Debug, Clone, Copy)]
pub enum Linking<'a> {
    /// Capacity fixed as data (units per bus).
    Fixed(&'a [f64]),
    /// Capacity given by first-stage model variables (units per bus).
    Variables(&'a [VarId]),
}

/// Handles into a second-stage block inside some [`ModelSpec`].
#[derive(Debug, Clone)]
pub struct SecondStageBlock {
    pub link_rows: Vec<RowId>,
    pub dispatch: Vec<[Option<VarId>; 3]>,
    pub voltage: Vec<[Option<VarId>; 3]>,
    pub flow_p: Vec<[Option<VarId>; 3]>,
    pub flow_q: Vec<[Option<VarId>; 3]>,
    pub balance_p: Vec<[Option<RowId>; 3]>,
    /// Per-unit size of one DG unit.
    pub unit_pu: f64,
}

fn check_scenario(net: &Network, scenario: &Scenario) -> Result<()> {
    let n = net.bus_count();
    if scenario.load.len() != n || scenario.pv.len() != n {
        return Err(Error::Construction(format!(
            "scenario covers {} load / {} pv entries for {n} buses",
            scenario.load.len(),
            scenario.pv.len()
        )));
    }
    if scenario.load.iter().chain(&scenario.pv).any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::Construction("scenario multipliers must be finite and nonnegative".into()));
    }
    Ok(())
}

/// Append one scenario's second-stage rows and variables to `model`, with
/// objective terms scaled by `weight`. Names are prefixed by `prefix`.
#[allow(clippy::too_many_arguments)]
pub fn add_second_stage(
    model: &mut ModelSpec,
    net: &Network,
    scenario: &Scenario,
    linking: Linking<'_>,
    objective: Objective,
    dg: &DgParams,
    weight: f64,
    prefix: &str,
) -> Result<SecondStageBlock> {
    check_scenario(net, scenario)?;
    let n = net.bus_count();
    match linking {
        Linking::Fixed(c) if c.len() != n => {
            return Err(Error::Construction(format!("capacity has {} entries for {n} buses", c.len())))
        }
        Linking::Variables(v) if v.len() != n => {
            return Err(Error::Construction(format!("linking has {} variables for {n} buses", v.len())))
        }
        _ => {}
    }
    let unit_pu = dg.unit_kw / net.s_base_kva;
    let tan = dg.tan_theta();
    let sq3 = 3f64.sqrt();

    let mut dispatch = vec![[None; 3]; n];
    let mut voltage = vec![[None; 3]; n];
    for (i, bus) in net.buses.iter().enumerate() {
        for p in 0..3 {
            if !bus.phases[p] {
                continue;
            }
            dispatch[i][p] = Some(model.continuous(format!("{prefix}U[{}.{}]", bus.id, PHASES[p]), 0.0, f64::INFINITY));
            let (lo, hi) = if i == net.substation {
                (net.substation_voltage[p], net.substation_voltage[p])
            } else {
                (net.v_min, net.v_max)
            };
            voltage[i][p] = Some(model.continuous(format!("{prefix}v[{}.{}]", bus.id, PHASES[p]), lo, hi));
        }
    }
    let nl = net.lines.len();
    let mut flow_p = vec![[None; 3]; nl];
    let mut flow_q = vec![[None; 3]; nl];
    for (k, line) in net.lines.iter().enumerate() {
        let tag = format!("{}-{}", net.buses[line.from].id, net.buses[line.to].id);
        for p in 0..3 {
            if line.phases[p] {
                flow_p[k][p] = Some(model.free(format!("{prefix}P[{tag}.{}]", PHASES[p])));
                flow_q[k][p] = Some(model.free(format!("{prefix}Q[{tag}.{}]", PHASES[p])));
            }
        }
    }

    // Linking rows.
    let mut link_rows = Vec::with_capacity(n);
    for (i, bus) in net.buses.iter().enumerate() {
        let mut coeffs: Vec<(VarId, f64)> = dispatch[i].iter().flatten().map(|&v| (v, 1.0)).collect();
        let rhs = match linking {
            Linking::Fixed(cap) => cap[i] * unit_pu,
            Linking::Variables(xs) => {
                coeffs.push((xs[i], -unit_pu));
                0.0
            }
        };
        link_rows.push(model.add_constraint(format!("{prefix}link[{}]", bus.id), coeffs, Sense::Le, rhs));
    }

    // Power balance at every non-substation bus.
    let mut balance_p = vec![[None; 3]; n];
    for (i, bus) in net.buses.iter().enumerate() {
        if i == net.substation {
            continue;
        }
        for p in 0..3 {
            if !bus.phases[p] {
                continue;
            }
            let u = dispatch[i][p].expect("phase present");
            let mut cp = vec![(u, scenario.pv[i])];
            let mut cq = vec![(u, scenario.pv[i] * tan)];
            for &k in &net.child_lines[i] {
                if let (Some(fp), Some(fq)) = (flow_p[k][p], flow_q[k][p]) {
                    cp.push((fp, -1.0));
                    cq.push((fq, -1.0));
                }
            }
            if let Some(k) = net.parent_line[i] {
                if let (Some(fp), Some(fq)) = (flow_p[k][p], flow_q[k][p]) {
                    cp.push((fp, 1.0));
                    cq.push((fq, 1.0));
                }
            }
            let tag = format!("{}.{}", bus.id, PHASES[p]);
            balance_p[i][p] = Some(model.add_constraint(
                format!("{prefix}balP[{tag}]"),
                cp,
                Sense::Eq,
                bus.load_p[p] * scenario.load[i],
            ));
            model.add_constraint(format!("{prefix}balQ[{tag}]"), cq, Sense::Eq, bus.load_q[p] * scenario.load[i]);
        }
    }

    // Voltage drop and thermal polygon per line phase.
    for (k, line) in net.lines.iter().enumerate() {
        let (rt, xt) = sequence_line_matrices(&line.r, &line.x);
        let tag = format!("{}-{}", net.buses[line.from].id, net.buses[line.to].id);
        for p in 0..3 {
            if !line.phases[p] {
                continue;
            }
            let vi = voltage[line.from][p].expect("phase present at parent");
            let vj = voltage[line.to][p].expect("phase present at child");
            let mut coeffs = vec![(vi, 1.0), (vj, -1.0)];
            for q in 0..3 {
                if line.phases[q] {
                    coeffs.push((flow_p[k][q].unwrap(), -2.0 * rt[p][q]));
                    coeffs.push((flow_q[k][q].unwrap(), -2.0 * xt[p][q]));
                }
            }
            model.add_constraint(format!("{prefix}vdrop[{tag}.{}]", PHASES[p]), coeffs, Sense::Eq, 0.0);

            let fp = flow_p[k][p].unwrap();
            let fq = flow_q[k][p].unwrap();
            let s = line.rating[p] * polygon_scale();
            let t = format!("{prefix}therm[{tag}.{}]", PHASES[p]);
            model.add_constraint(format!("{t}.1l"), vec![(fq, 1.0), (fp, sq3)], Sense::Ge, -sq3 * s);
            model.add_constraint(format!("{t}.1u"), vec![(fq, 1.0), (fp, sq3)], Sense::Le, sq3 * s);
            model.add_constraint(format!("{t}.2l"), vec![(fq, 1.0)], Sense::Ge, -sq3 / 2.0 * s);
            model.add_constraint(format!("{t}.2u"), vec![(fq, 1.0)], Sense::Le, sq3 / 2.0 * s);
            model.add_constraint(format!("{t}.3l"), vec![(fq, 1.0), (fp, -sq3)], Sense::Ge, -sq3 * s);
            model.add_constraint(format!("{t}.3u"), vec![(fq, 1.0), (fp, -sq3)], Sense::Le, sq3 * s);
        }
    }

    match objective {
        Objective::VoltageDeviation => {
            for (i, bus) in net.buses.iter().enumerate() {
                for p in 0..3 {
                    let Some(v) = voltage[i][p] else { continue };
                    let tag = format!("{}.{}", bus.id, PHASES[p]);
                    let z = model.continuous(format!("{prefix}z[{tag}]"), 0.0, f64::INFINITY);
                    model.add_constraint(format!("{prefix}devU[{tag}]"), vec![(z, 1.0), (v, -1.0)], Sense::Ge, -bus.v_ref[p]);
                    model.add_constraint(format!("{prefix}devL[{tag}]"), vec![(z, 1.0), (v, 1.0)], Sense::Ge, bus.v_ref[p]);
                    model.add_objective(z, weight);
                }
            }
        }
        Objective::PowerLoss => {
            // r (P^2 + Q^2) / v_nom with v_nom = 1 p.u., reported in kW.
            for (k, line) in net.lines.iter().enumerate() {
                for p in 0..3 {
                    if !line.phases[p] {
                        continue;
                    }
                    let c = weight * line.r[p][p] * net.s_base_kva;
                    model.add_quadratic(flow_p[k][p].unwrap(), flow_p[k][p].unwrap(), c);
                    model.add_quadratic(flow_q[k][p].unwrap(), flow_q[k][p].unwrap(), c);
                }
            }
        }
    }

    Ok(SecondStageBlock { link_rows, dispatch, voltage, flow_p, flow_q, balance_p, unit_pu })
}

/// Standalone second-stage model for a fixed capacity plan (units per bus).
pub fn build_second_stage(
    net: &Network,
    scenario: &Scenario,
    capacity: &[f64],
    objective: Objective,
    dg: &DgParams,
) -> Result<(ModelSpec, SecondStageBlock)> {
    let mut model = ModelSpec::new();
    let block = add_second_stage(&mut model, net, scenario, Linking::Fixed(capacity), objective, dg, 1.0, "")?;
    Ok((model, block))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecondStageOutcome {
    pub feasible: bool,
    pub recourse_value: f64,
    /// Subgradient of the recourse value with respect to units at each bus.
    pub linking_duals: Vec<f64>,
    /// Farkas weights mapped onto the units at each bus (infeasible only).
    pub farkas_ray: Vec<f64>,
    /// Constant part of the certificate: the plan `x` is cut off when
    /// `farkas_ray . x + farkas_constant < 0`.
    pub farkas_constant: f64,
}

pub fn solve_second_stage(
    net: &Network,
    scenario: &Scenario,
    capacity: &[f64],
    objective: Objective,
    dg: &DgParams,
    solver: &SolverConfig,
) -> Result<SecondStageOutcome> {
    let probed: Vec<f64> = capacity.iter().map(|c| c + LINK_PROBE).collect();
    let (model, block) = build_second_stage(net, scenario, &probed, objective, dg)?;
    let out = mpif::solve(&model, solver);
    interpret(&model, &block, capacity, out)
}

/// Capacity offset (in units) used when reading linking duals.
///
/// At zero capacity the linking row and the dispatch lower bounds are both
/// tight, so the row's multiplier is not unique and an interior-point
/// solver returns an arbitrary member of an unbounded set. Solving at
/// `x + LINK_PROBE` makes the multiplier the right derivative of `Q` at `x`;
/// the reported value is shifted back by the same first-order term, which is
/// exact while no kink lies inside the probe interval.
pub const LINK_PROBE: f64 = 1e-3;

fn interpret(
    model: &ModelSpec,
    block: &SecondStageBlock,
    capacity: &[f64],
    out: SolveOutcome,
) -> Result<SecondStageOutcome> {
    match out.status {
        Status::Optimal => {
            let linking_duals: Vec<f64> =
                block.link_rows.iter().map(|r| -out.duals[r.0] * block.unit_pu).collect();
            let shift: f64 = linking_duals.iter().map(|g| g * LINK_PROBE).sum();
            Ok(SecondStageOutcome {
                feasible: true,
                recourse_value: out.objective_value - shift,
                linking_duals,
                farkas_ray: Vec::new(),
                farkas_constant: 0.0,
            })
        }
        Status::Infeasible => {
            let ray = out
                .farkas
                .ok_or_else(|| Error::Solver("infeasible second stage without a certificate".into()))?;
            let coeffs: Vec<f64> = block.link_rows.iter().map(|r| ray.rows[r.0] * block.unit_pu).collect();
            let at_plan: f64 = coeffs.iter().zip(capacity).map(|(c, x)| c * x).sum();
            let constant = ray.value(model) - at_plan;
            Ok(SecondStageOutcome {
                feasible: false,
                recourse_value: f64::INFINITY,
                linking_duals: Vec::new(),
                farkas_ray: coeffs,
                farkas_constant: constant,
            })
        }
        Status::Unbounded => Err(Error::Solver("second stage reported unbounded".into())),
        Status::Error => Err(Error::Solver(out.message.unwrap_or_else(|| "unknown failure".into()))),
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::mpif::Backend;

    fn ident() -> Mat3 {
        [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    }

    pub(crate) fn single_phase_line(r: f64, x: f64, rating: f64) -> Line {
        let mut rm = [[0.0; 3]; 3];
        let mut xm = [[0.0; 3]; 3];
        rm[0][0] = r;
        xm[0][0] = x;
        Line { from: 0, to: 1, phases: [true, false, false], r: rm, x: xm, rating: [rating, 0.0, 0.0] }
    }

    /// Two buses, phase a only, load `p + jq` p.u. at bus 1.
    pub(crate) fn two_bus(p: f64, q: f64, rating: f64) -> Network {
        let sub = Bus { id: "s".into(), phases: [true, false, false], load_p: [0.0; 3], load_q: [0.0; 3], v_ref: [1.0; 3] };
        let load = Bus { id: "l".into(), phases: [true, false, false], load_p: [p, 0.0, 0.0], load_q: [q, 0.0, 0.0], v_ref: [1.0; 3] };
        Network::new("two".into(), 1000.0, 4.16, vec![sub, load], vec![single_phase_line(0.01, 0.02, rating)], 0, [1.0; 3], 0.81, 1.21)
            .unwrap()
    }

    fn uniform(n: usize, load: f64, pv: f64) -> Scenario {
        Scenario { load: vec![load; n], pv: vec![pv; n] }
    }

    #[test]
    fn polygon_factor() {
        assert!((polygon_scale() - 1.09962).abs() < 5e-5);
        assert!((polygon_scale() - (1.047198f64 / 0.866025).sqrt()).abs() < 1e-6);
    }

    #[test]
    fn sequence_matrices_examples() {
        let zero = [[0.0; 3]; 3];
        let (rt, xt) = sequence_line_matrices(&ident(), &zero);
        for a in 0..3 {
            for b in 0..3 {
                assert!((rt[a][b] - ident()[a][b]).abs() < 1e-15);
                assert!(xt[a][b].abs() < 1e-15);
            }
        }
        let (rt, xt) = sequence_line_matrices(&zero, &zero);
        assert!(rt.iter().chain(&xt).flatten().all(|v| *v == 0.0));
        let d = |v: f64| [[v, 0.0, 0.0], [0.0, v, 0.0], [0.0, 0.0, v]];
        let (rt, xt) = sequence_line_matrices(&d(0.3), &d(0.7));
        assert_eq!(rt, d(0.3));
        assert_eq!(xt, d(0.7));
    }

    #[test]
    fn sequence_matrices_coupling_pattern() {
        // Off-diagonal Re(A) = -1/2, Im(A) = +-sqrt(3)/2 (antisymmetric).
        let ones = [[1.0; 3]; 3];
        let zero = [[0.0; 3]; 3];
        let (rt, xt) = sequence_line_matrices(&ones, &zero);
        let h = 3f64.sqrt() / 2.0;
        assert!((rt[0][1] + 0.5).abs() < 1e-12);
        assert!((xt[0][1] + h).abs() < 1e-12 && (xt[1][0] - h).abs() < 1e-12);
        assert!((xt[1][2] + h).abs() < 1e-12 && (xt[2][0] + h).abs() < 1e-12);
    }

    #[test]
    fn unloaded_network_sits_at_substation_voltage() {
        let net = two_bus(0.0, 0.0, 1.0);
        let sc = uniform(2, 0.0, 0.0);
        let dg = DgParams::default();
        let out = solve_second_stage(&net, &sc, &[0.0, 0.0], Objective::VoltageDeviation, &dg, &SolverConfig::default()).unwrap();
        assert!(out.feasible);
        assert!(out.recourse_value.abs() < 1e-7);
        let mut net2 = two_bus(0.0, 0.0, 1.0);
        net2.substation_voltage = [1.02, 1.0, 1.0];
        let out = solve_second_stage(&net2, &sc, &[0.0, 0.0], Objective::VoltageDeviation, &dg, &SolverConfig::default()).unwrap();
        // both buses sit at 1.02 against a reference of 1.0
        assert!((out.recourse_value - 0.04).abs() < 1e-7);
    }

    #[test]
    fn two_bus_hand_substitution() {
        let (p, q, eps) = (0.2, 0.1, 1.3);
        let net = two_bus(p, q, 5.0);
        let sc = Scenario { load: vec![eps, eps], pv: vec![0.0, 0.0] };
        for backend in [Backend::Clarabel, Backend::DenseSimplex] {
            let (model, _) = build_second_stage(&net, &sc, &[0.0, 0.0], Objective::VoltageDeviation, &DgParams::default()).unwrap();
            let out = mpif::solve(&model, &SolverConfig::with_backend(backend));
            assert!(out.is_optimal());
            let flow = out.value(&model, "P[s-l.a]").unwrap();
            let v2 = out.value(&model, "v[l.a]").unwrap();
            assert!((flow - p * eps).abs() < 1e-7);
            let expect = 1.0 - 2.0 * (0.01 * p * eps + 0.02 * q * eps);
            assert!((v2 - expect).abs() < 1e-7, "{v2} vs {expect}");
        }
    }

    #[test]
    fn slack_capacity_has_zero_dual_and_binding_has_negative() {
        let net = two_bus(0.2, 0.0, 5.0);
        let sc = uniform(2, 1.0, 1.0);
        let dg = DgParams { unit_kw: 20.0, power_factor: 1.0 };
        let cfg = SolverConfig::default();
        // 20 units of 20 kW cover the 200 kW load with room to spare.
        let big = solve_second_stage(&net, &sc, &[0.0, 20.0], Objective::VoltageDeviation, &dg, &cfg).unwrap();
        assert!(big.recourse_value.abs() < 1e-6);
        assert!(big.linking_duals.iter().all(|g| g.abs() < 1e-6), "{:?} {}", big.linking_duals, big.recourse_value);
        let small = solve_second_stage(&net, &sc, &[0.0, 3.0], Objective::VoltageDeviation, &dg, &cfg).unwrap();
        let next = solve_second_stage(&net, &sc, &[0.0, 4.0], Objective::VoltageDeviation, &dg, &cfg).unwrap();
        assert!(small.linking_duals[1] < -1e-6);
        assert!(next.recourse_value - small.recourse_value >= small.linking_duals[1] - 1e-7);
    }

    #[test]
    fn thermal_overload_is_infeasible_with_certificate() {
        // 0.3 p.u. load behind a 0.1 p.u. line; DG must carry the rest.
        let net = two_bus(0.3, 0.0, 0.1);
        let sc = uniform(2, 1.0, 1.0);
        let dg = DgParams { unit_kw: 50.0, power_factor: 1.0 };
        for backend in [Backend::Clarabel, Backend::DenseSimplex] {
            let cfg = SolverConfig::with_backend(backend);
            let out = solve_second_stage(&net, &sc, &[0.0, 0.0], Objective::VoltageDeviation, &dg, &cfg).unwrap();
            assert!(!out.feasible);
            assert!(out.farkas_ray[1] > 0.0, "{:?}", out.farkas_ray);
            let at_zero = out.farkas_constant;
            assert!(at_zero < 0.0);
            // enough DG restores feasibility and satisfies the cut
            let ok = solve_second_stage(&net, &sc, &[0.0, 6.0], Objective::VoltageDeviation, &dg, &cfg).unwrap();
            assert!(ok.feasible);
            assert!(out.farkas_ray[1] * 6.0 + out.farkas_constant >= -1e-9);
        }
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let net = two_bus(0.1, 0.0, 1.0);
        let short = Scenario { load: vec![1.0], pv: vec![1.0] };
        assert!(matches!(
            build_second_stage(&net, &short, &[0.0, 0.0], Objective::VoltageDeviation, &DgParams::default()),
            Err(Error::Construction(_))
        ));
        let mut lines = vec![single_phase_line(0.01, 0.01, 1.0)];
        lines[0].to = 0;
        lines[0].from = 0;
        let b = net.buses.clone();
        assert!(Network::new("x".into(), 1000.0, 4.16, b.clone(), lines, 0, [1.0; 3], 0.9, 1.1).is_err());
        // three buses, two lines, one bus unreachable
        let mut b3 = b.clone();
        b3.push(Bus { id: "z".into(), ..b[1].clone() });
        let l = vec![single_phase_line(0.01, 0.01, 1.0), single_phase_line(0.01, 0.01, 1.0)];
        assert!(Network::new("x".into(), 1000.0, 4.16, b3, l, 0, [1.0; 3], 0.9, 1.1).is_err());
    }
}
