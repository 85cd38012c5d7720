//! Branch and bound over any continuous relaxation solver.
//!
//! Nodes are explored best-bound first, with a depth-first plunge after each
//! branching so incumbents appear early. A round-and-fix heuristic (round
//! the integer variables, fix them, re-solve the relaxation) runs at the
//! root and periodically afterwards, followed by a dive while no incumbent
//! is known.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::model::ModelSpec;
use super::outcome::{SolveOutcome, Status};

pub trait Relaxation {
    fn solve_relaxation(&self, model: &ModelSpec, bounds: &[(f64, f64)]) -> SolveOutcome;
}

#[derive(Debug, Clone, Copy)]
pub struct MipOptions {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub int_tol: f64,
    pub feas_tol: f64,
    pub node_limit: usize,
    /// Run the round-and-fix heuristic every this many nodes (0 = root only).
    pub heuristic_every: usize,
}

impl Default for MipOptions {
    fn default() -> Self {
        Self { rel_gap: 1e-6, abs_gap: 1e-9, int_tol: 1e-6, feas_tol: 1e-6, node_limit: 200_000, heuristic_every: 25 }
    }
}

struct Node {
    bound: f64,
    depth: usize,
    bounds: Vec<(f64, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    // Max-heap: the smallest bound (then the deepest node) comes out first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.bound.total_cmp(&self.bound).then(self.depth.cmp(&other.depth))
    }
}

struct Search<'a, R: Relaxation + ?Sized> {
    relax: &'a R,
    model: &'a ModelSpec,
    opts: &'a MipOptions,
    incumbent: Option<(f64, Vec<f64>)>,
    nodes: usize,
    tried: std::collections::HashSet<Vec<i64>>,
}

impl<R: Relaxation + ?Sized> Search<'_, R> {
    fn cutoff(&self) -> f64 {
        match &self.incumbent {
            Some((best, _)) => best - self.opts.abs_gap.max(self.opts.rel_gap * best.abs()),
            None => f64::INFINITY,
        }
    }

    fn offer(&mut self, x: Vec<f64>) {
        let obj = self.model.objective_at(&x);
        if self.incumbent.as_ref().map_or(true, |(b, _)| obj < *b) {
            self.incumbent = Some((obj, x));
        }
    }

    fn most_fractional(&self, x: &[f64]) -> Option<(usize, f64)> {
        let mut branch: Option<(usize, f64, f64)> = None;
        for (j, v) in self.model.variables.iter().enumerate() {
            if !v.kind.is_integral() {
                continue;
            }
            let frac = x[j] - x[j].floor();
            let dist = frac.min(1.0 - frac);
            if dist > self.opts.int_tol && branch.map_or(true, |(_, d, _)| dist > d + 1e-12) {
                branch = Some((j, dist, x[j]));
            }
        }
        branch.map(|(j, _, v)| (j, v))
    }

    /// Depth-first dive: fix one integer variable at a time, re-solve,
    /// recurse, backtracking within a budget of relaxation solves. Finds an incumbent on flat
    /// objectives where interior points never round to a feasible point.
    fn dive(&mut self, x: &[f64], bounds: &[(f64, f64)]) {
        let ints = self.model.variables.iter().filter(|v| v.kind.is_integral()).count();
        let mut budget = 4 * ints + 8;
        self.dive_from(x, bounds.to_vec(), &mut budget);
    }

    /// Fixes one variable per step, binaries first, trying the value toward
    /// the lower bound before the other side.
    fn dive_from(&mut self, x: &[f64], mut b: Vec<(f64, f64)>, budget: &mut usize) -> bool {
        let mut pick: Option<(usize, (bool, f64))> = None;
        for (j, v) in self.model.variables.iter().enumerate() {
            if !v.kind.is_integral() || b[j].0 == b[j].1 {
                continue;
            }
            let dist = (x[j] - x[j].round()).abs();
            if dist <= self.opts.int_tol {
                b[j] = (x[j].round(), x[j].round());
                continue;
            }
            let key = (b[j].1 - b[j].0 > 1.0, dist);
            if pick.map_or(true, |(_, k)| key < k) {
                pick = Some((j, key));
            }
        }
        let Some((j, _)) = pick else {
            let mut p = x.to_vec();
            for (k, v) in self.model.variables.iter().enumerate() {
                if v.kind.is_integral() {
                    p[k] = b[k].0;
                }
            }
            if self.model.max_violation(&p) > self.opts.feas_tol * 10.0 {
                return false;
            }
            self.offer(p);
            return true;
        };
        for v in [x[j].floor(), x[j].ceil()] {
            if v < b[j].0 || v > b[j].1 || *budget == 0 {
                continue;
            }
            *budget -= 1;
            let mut trial = b.clone();
            trial[j] = (v, v);
            let out = self.relax.solve_relaxation(self.model, &trial);
            if out.is_optimal() && out.objective_value < self.cutoff() && self.dive_from(&out.primal, trial, budget) {
                return true;
            }
        }
        false
    }

    fn round_and_fix(&mut self, x: &[f64], bounds: &[(f64, f64)]) {
        let mut fixed = bounds.to_vec();
        let mut key = Vec::new();
        for (j, v) in self.model.variables.iter().enumerate() {
            if v.kind.is_integral() {
                let r = x[j].round().clamp(bounds[j].0, bounds[j].1);
                fixed[j] = (r, r);
                key.push(r as i64);
            }
        }
        if !self.tried.insert(key) {
            return;
        }
        let out = self.relax.solve_relaxation(self.model, &fixed);
        if out.is_optimal() && out.objective_value < self.cutoff() {
            let mut p = out.primal;
            for (j, b) in fixed.iter().enumerate() {
                if self.model.variables[j].kind.is_integral() {
                    p[j] = b.0;
                }
            }
            if self.model.max_violation(&p) <= self.opts.feas_tol * 10.0 {
                self.offer(p);
            }
        }
    }
}

pub fn branch_and_bound<R: Relaxation + ?Sized>(relax: &R, model: &ModelSpec, opts: &MipOptions) -> SolveOutcome {
    let root: Vec<(f64, f64)> = model
        .variables
        .iter()
        .map(|v| {
            if v.kind.is_integral() {
                ((v.lower - opts.int_tol).ceil(), (v.upper + opts.int_tol).floor())
            } else {
                (v.lower, v.upper)
            }
        })
        .collect();

    let mut s = Search { relax, model, opts, incumbent: None, nodes: 0, tried: Default::default() };
    let mut heap = BinaryHeap::new();
    heap.push(Node { bound: f64::NEG_INFINITY, depth: 0, bounds: root });

    while let Some(node) = heap.pop() {
        // Plunge from this node until it is pruned or resolved.
        let mut current = Some(node);
        while let Some(node) = current.take() {
            if node.bound >= s.cutoff() {
                break;
            }
            s.nodes += 1;
            if s.nodes > opts.node_limit {
                let mut out = SolveOutcome::error(format!("node limit {} reached", opts.node_limit));
                out.nodes = s.nodes;
                return out;
            }
            let out = relax.solve_relaxation(model, &node.bounds);
            match out.status {
                Status::Optimal => {}
                Status::Infeasible => break,
                Status::Unbounded => {
                    if s.incumbent.is_none() && s.nodes == 1 {
                        let mut u = SolveOutcome::unbounded();
                        u.nodes = s.nodes;
                        return u;
                    }
                    break;
                }
                Status::Error => {
                    let mut e = out;
                    e.nodes = s.nodes;
                    return e;
                }
            }
            let bound = out.objective_value.max(node.bound);
            if bound >= s.cutoff() {
                break;
            }
            let x = out.primal;
            match s.most_fractional(&x) {
                None => {
                    // Re-solve with the integers pinned so the continuous
                    // part matches the rounded values exactly.
                    let mut fixed = node.bounds.clone();
                    for (j, v) in model.variables.iter().enumerate() {
                        if v.kind.is_integral() {
                            let r = x[j].round().clamp(node.bounds[j].0, node.bounds[j].1);
                            fixed[j] = (r, r);
                        }
                    }
                    let polished = relax.solve_relaxation(model, &fixed);
                    let mut p = if polished.is_optimal() { polished.primal } else { x };
                    for (j, b) in fixed.iter().enumerate() {
                        if model.variables[j].kind.is_integral() {
                            p[j] = b.0;
                        }
                    }
                    if model.max_violation(&p) <= opts.feas_tol * 10.0 {
                        s.offer(p);
                    }
                }
                Some((j, v)) => {
                    if s.nodes == 1 || (opts.heuristic_every > 0 && s.nodes % opts.heuristic_every == 0) {
                        s.round_and_fix(&x, &node.bounds);
                        if s.incumbent.is_none() {
                            s.dive(&x, &node.bounds);
                        }
                    }
                    let mut down = node.bounds.clone();
                    down[j].1 = v.floor();
                    let mut up = node.bounds;
                    up[j].0 = v.ceil();
                    let depth = node.depth + 1;
                    let (near, far) = if v - v.floor() < 0.5 { (down, up) } else { (up, down) };
                    heap.push(Node { bound, depth, bounds: far });
                    current = Some(Node { bound, depth, bounds: near });
                }
            }
        }
    }

    let nodes = s.nodes;
    let mut out = match s.incumbent {
        Some((obj, x)) => SolveOutcome::optimal(x, obj, Vec::new()),
        None => SolveOutcome::infeasible(None),
    };
    out.nodes = nodes;
    out
}
