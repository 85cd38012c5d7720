//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Intended for small LPs (a few dozen rows and columns): property tests use
//! it as an independent check on the interior-point backend. Every row gets
//! an artificial column so that `B^-1` can be read straight off the tableau,
//! which gives the row duals and, when phase one stalls above zero, the
//! Farkas certificate.

use super::model::{ModelSpec, Sense};
use super::outcome::{FarkasRay, SolveOutcome};

#[derive(Debug, Clone, Copy)]
pub struct DenseSimplex {
    pub pivot_tol: f64,
    pub feas_tol: f64,
    pub max_pivots: usize,
}

impl Default for DenseSimplex {
    fn default() -> Self {
        Self { pivot_tol: 1e-7, feas_tol: 1e-9, max_pivots: 50_000 }
    }
}

#[derive(Debug, Clone, Copy)]
enum ColMap {
    /// x = lower + x'
    Shift { col: usize, lower: f64 },
    /// x = upper - x'
    Mirror { col: usize, upper: f64 },
    /// x = x+ - x-
    Split { pos: usize, neg: usize },
}

#[derive(Debug, Clone, Copy)]
enum Origin {
    Row(usize),
    Upper(usize),
}

struct StdRow {
    coeffs: Vec<f64>,
    sense: Sense,
    rhs: f64,
    origin: Origin,
}

struct Tableau {
    t: Vec<Vec<f64>>,
    obj: Vec<f64>,
    basis: Vec<usize>,
    width: usize,
}

impl Tableau {
    fn rhs(&self, i: usize) -> f64 {
        self.t[i][self.width]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let p = self.t[row][col];
        for v in self.t[row].iter_mut() {
            *v /= p;
        }
        let prow = self.t[row].clone();
        for (i, r) in self.t.iter_mut().enumerate() {
            if i == row {
                continue;
            }
            let f = r[col];
            if f != 0.0 {
                for (a, b) in r.iter_mut().zip(&prow) {
                    *a -= f * b;
                    if a.abs() < 1e-14 {
                        *a = 0.0;
                    }
                }
                r[col] = 0.0;
            }
        }
        let f = self.obj[col];
        if f != 0.0 {
            for (a, b) in self.obj.iter_mut().zip(&prow) {
                *a -= f * b;
            }
            self.obj[col] = 0.0;
        }
        self.basis[row] = col;
    }
}

enum PhaseEnd {
    Optimal,
    Unbounded,
    PivotLimit,
}

impl DenseSimplex {
    /// Solve the continuous relaxation of `model` with the given variable
    /// bounds (integrality is ignored).
    pub fn solve_with_bounds(&self, model: &ModelSpec, bounds: &[(f64, f64)]) -> SolveOutcome {
        if model.has_quadratic() {
            return SolveOutcome::error("dense simplex accepts linear objectives only");
        }
        let n = model.num_vars();

        // Column mapping to nonnegative standard-form variables.
        let mut maps = Vec::with_capacity(n);
        let mut ncols = 0usize;
        let mut upper_rows = Vec::new();
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if lo > hi {
                return SolveOutcome::infeasible(None);
            }
            if lo.is_finite() {
                maps.push(ColMap::Shift { col: ncols, lower: lo });
                if hi.is_finite() {
                    upper_rows.push((j, ncols, hi - lo));
                }
                ncols += 1;
            } else if hi.is_finite() {
                maps.push(ColMap::Mirror { col: ncols, upper: hi });
                ncols += 1;
            } else {
                maps.push(ColMap::Split { pos: ncols, neg: ncols + 1 });
                ncols += 2;
            }
        }

        let mut rows = Vec::with_capacity(model.num_rows() + upper_rows.len());
        for (r, c) in model.constraints.iter().enumerate() {
            let mut coeffs = vec![0.0; ncols];
            let mut rhs = c.rhs;
            for &(v, a) in &c.coeffs {
                match maps[v.0] {
                    ColMap::Shift { col, lower } => {
                        coeffs[col] += a;
                        rhs -= a * lower;
                    }
                    ColMap::Mirror { col, upper } => {
                        coeffs[col] -= a;
                        rhs -= a * upper;
                    }
                    ColMap::Split { pos, neg } => {
                        coeffs[pos] += a;
                        coeffs[neg] -= a;
                    }
                }
            }
            rows.push(StdRow { coeffs, sense: c.sense, rhs, origin: Origin::Row(r) });
        }
        for &(j, col, width) in &upper_rows {
            let mut coeffs = vec![0.0; ncols];
            coeffs[col] = 1.0;
            rows.push(StdRow { coeffs, sense: Sense::Le, rhs: width, origin: Origin::Upper(j) });
        }

        let m = rows.len();
        let nslack = rows.iter().filter(|r| r.sense != Sense::Eq).count();
        let art0 = ncols + nslack;
        let width = art0 + m;

        let mut t = vec![vec![0.0; width + 1]; m];
        let mut sigma = vec![1.0; m];
        let mut kappa = vec![0.0; m];
        let mut s = ncols;
        for (i, row) in rows.iter().enumerate() {
            t[i][..ncols].copy_from_slice(&row.coeffs);
            match row.sense {
                Sense::Le => {
                    t[i][s] = 1.0;
                    kappa[i] = 1.0;
                    s += 1;
                }
                Sense::Ge => {
                    t[i][s] = -1.0;
                    kappa[i] = -1.0;
                    s += 1;
                }
                Sense::Eq => {}
            }
            t[i][width] = row.rhs;
            if row.rhs < 0.0 {
                sigma[i] = -1.0;
                for v in t[i].iter_mut() {
                    *v = -*v;
                }
            }
            t[i][art0 + i] = 1.0;
        }

        // Phase one: minimize the sum of artificials.
        let mut obj = vec![0.0; width + 1];
        for row in &t {
            for (o, v) in obj.iter_mut().zip(row) {
                *o -= v;
            }
        }
        for o in obj[art0..width].iter_mut() {
            *o = 0.0;
        }
        let mut tab = Tableau { t, obj, basis: (art0..art0 + m).collect(), width };

        match self.run_phase(&mut tab, art0, false) {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => return SolveOutcome::error("phase one reported unbounded"),
            PhaseEnd::PivotLimit => return SolveOutcome::error("simplex pivot limit reached"),
        }
        let scale = 1.0 + rows.iter().map(|r| r.rhs.abs()).fold(0.0, f64::max);
        let infeas = -tab.obj[width];
        if infeas > self.feas_tol * scale {
            let y1 = basis_duals(&tab, art0, |c| if c >= art0 { 1.0 } else { 0.0 });
            let w_std: Vec<f64> = y1.iter().map(|y| -y).collect();
            let ray = self.map_farkas(model, bounds, &rows, &sigma, &kappa, &w_std);
            return SolveOutcome::infeasible(Some(ray.normalized()));
        }

        // Drive remaining artificials out of the basis.
        for i in 0..m {
            if tab.basis[i] >= art0 {
                let j = (0..art0).max_by(|&a, &b| tab.t[i][a].abs().total_cmp(&tab.t[i][b].abs()));
                if let Some(j) = j.filter(|&j| tab.t[i][j].abs() > self.pivot_tol) {
                    tab.pivot(i, j);
                }
            }
        }

        // Phase two.
        let mut cost = vec![0.0; width];
        for &(v, c) in &model.objective {
            match maps[v.0] {
                ColMap::Shift { col, .. } => cost[col] += c,
                ColMap::Mirror { col, .. } => cost[col] -= c,
                ColMap::Split { pos, neg } => {
                    cost[pos] += c;
                    cost[neg] -= c;
                }
            }
        }
        let mut obj = vec![0.0; width + 1];
        obj[..width].copy_from_slice(&cost);
        for (i, &b) in tab.basis.iter().enumerate() {
            let cb = cost[b];
            if cb != 0.0 {
                for (o, v) in obj.iter_mut().zip(&tab.t[i]) {
                    *o -= cb * v;
                }
            }
        }
        tab.obj = obj;
        match self.run_phase(&mut tab, art0, true) {
            PhaseEnd::Optimal => {}
            PhaseEnd::Unbounded => return SolveOutcome::unbounded(),
            PhaseEnd::PivotLimit => return SolveOutcome::error("simplex pivot limit reached"),
        }

        let mut xs = vec![0.0; width];
        for (i, &b) in tab.basis.iter().enumerate() {
            xs[b] = tab.rhs(i);
        }
        let x: Vec<f64> = maps
            .iter()
            .map(|m| match *m {
                ColMap::Shift { col, lower } => lower + xs[col],
                ColMap::Mirror { col, upper } => upper - xs[col],
                ColMap::Split { pos, neg } => xs[pos] - xs[neg],
            })
            .collect();

        let y_std = basis_duals(&tab, art0, |c| if c < width { cost[c] } else { 0.0 });
        let mut duals = vec![0.0; model.num_rows()];
        for (i, row) in rows.iter().enumerate() {
            if let Origin::Row(r) = row.origin {
                duals[r] = -sigma[i] * y_std[i];
            }
        }
        let objective = model.objective_at(&x);
        SolveOutcome::optimal(x, objective, duals)
    }

    fn run_phase(&self, tab: &mut Tableau, art0: usize, phase_two: bool) -> PhaseEnd {
        let m = tab.t.len();
        for _ in 0..self.max_pivots {
            let entering = (0..art0).find(|&j| tab.obj[j] < -self.pivot_tol);
            let Some(col) = entering else {
                return PhaseEnd::Optimal;
            };
            // Harris two-pass ratio test: find the largest step that keeps
            // every basic value above -feas_tol, then take the largest pivot
            // among the rows that block within it.
            let stuck = |i: usize, a: f64| phase_two && tab.basis[i] >= art0 && a.abs() > self.pivot_tol;
            let mut limit = f64::INFINITY;
            for i in 0..m {
                let a = tab.t[i][col];
                if stuck(i, a) {
                    limit = 0.0;
                } else if a > self.pivot_tol {
                    limit = limit.min((tab.rhs(i).max(0.0) + self.feas_tol) / a);
                }
            }
            if limit.is_infinite() {
                return PhaseEnd::Unbounded;
            }
            let mut best: Option<(usize, f64)> = None;
            for i in 0..m {
                let a = tab.t[i][col];
                let eligible = if stuck(i, a) {
                    true
                } else {
                    a > self.pivot_tol && tab.rhs(i).max(0.0) / a <= limit
                };
                if eligible && best.map_or(true, |(_, b)| a.abs() > b) {
                    best = Some((i, a.abs()));
                }
            }
            let (row, _) = best.expect("a blocking row exists");
            tab.pivot(row, col);
            // Harris steps may leave values a hair below zero.
            for r in tab.t.iter_mut() {
                let w = r.len() - 1;
                if r[w] < 0.0 && r[w] > -self.feas_tol * 10.0 {
                    r[w] = 0.0;
                }
            }
        }
        PhaseEnd::PivotLimit
    }

    fn map_farkas(
        &self,
        model: &ModelSpec,
        bounds: &[(f64, f64)],
        rows: &[StdRow],
        sigma: &[f64],
        kappa: &[f64],
        w_std: &[f64],
    ) -> FarkasRay {
        let n = model.num_vars();
        let mut ray = FarkasRay {
            rows: vec![0.0; model.num_rows()],
            lower: vec![0.0; n],
            upper: vec![0.0; n],
        };
        for (i, row) in rows.iter().enumerate() {
            let w = match row.sense {
                Sense::Eq => sigma[i] * w_std[i],
                _ => (sigma[i] * kappa[i] * w_std[i]).max(0.0),
            };
            match row.origin {
                Origin::Row(r) => ray.rows[r] = w,
                Origin::Upper(j) => ray.upper[j] += w,
            }
        }
        // Whatever the rows leave over is carried by the variable bounds.
        let mut g = vec![0.0; n];
        for (r, c) in model.constraints.iter().enumerate() {
            let w = match c.sense {
                Sense::Ge => -ray.rows[r],
                _ => ray.rows[r],
            };
            for &(v, a) in &c.coeffs {
                g[v.0] += w * a;
            }
        }
        for j in 0..n {
            let gj = g[j] + ray.upper[j];
            if gj > 0.0 && bounds[j].0.is_finite() {
                ray.lower[j] = gj;
            } else if gj < 0.0 && bounds[j].1.is_finite() {
                ray.upper[j] -= gj;
            }
        }
        ray
    }
}

/// `c_B^T B^-1`, reading `B^-1` from the artificial columns.
fn basis_duals(tab: &Tableau, art0: usize, cost: impl Fn(usize) -> f64) -> Vec<f64> {
    let m = tab.t.len();
    let cb: Vec<f64> = tab.basis.iter().map(|&b| cost(b)).collect();
    (0..m)
        .map(|i| (0..m).map(|k| cb[k] * tab.t[k][art0 + i]).sum())
        .collect()
}
