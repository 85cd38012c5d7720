//! Adapter to the clarabel interior-point solver (LP and convex QP).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::model::{ModelSpec, Sense};
use super::outcome::{FarkasRay, SolveOutcome};

#[derive(Debug, Clone, Copy)]
pub struct Clarabel {
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for Clarabel {
    fn default() -> Self {
        Self { tol: 1e-9, max_iter: 200 }
    }
}

#[derive(Debug, Clone, Copy)]
enum RowRef {
    Row(usize, f64),
    Lower(usize),
    Upper(usize),
    Fixed(usize),
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

fn csc(m: usize, n: usize, t: &Triplets) -> CscMatrix<f64> {
    let mut order: Vec<usize> = (0..t.vals.len()).collect();
    order.sort_by_key(|&k| (t.cols[k], t.rows[k]));
    let mut colptr = vec![0usize; n + 1];
    let mut rowval = Vec::with_capacity(order.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(order.len());
    let mut last: Option<(usize, usize)> = None;
    for k in order {
        let key = (t.cols[k], t.rows[k]);
        if last == Some(key) {
            *nzval.last_mut().unwrap() += t.vals[k];
            continue;
        }
        last = Some(key);
        colptr[key.0 + 1] += 1;
        rowval.push(key.1);
        nzval.push(t.vals[k]);
    }
    for j in 0..n {
        colptr[j + 1] += colptr[j];
    }
    CscMatrix::new(m, n, colptr, rowval, nzval)
}

impl Clarabel {
    pub fn solve_with_bounds(&self, model: &ModelSpec, bounds: &[(f64, f64)]) -> SolveOutcome {
        let n = model.num_vars();
        if bounds.iter().any(|&(lo, hi)| lo > hi) {
            return SolveOutcome::infeasible(None);
        }

        // Zero-cone rows first, then nonnegative-cone rows.
        let mut eq_rows: Vec<RowRef> = Vec::new();
        let mut ineq_rows: Vec<RowRef> = Vec::new();
        for (r, c) in model.constraints.iter().enumerate() {
            match c.sense {
                Sense::Eq => eq_rows.push(RowRef::Row(r, 1.0)),
                Sense::Le => ineq_rows.push(RowRef::Row(r, 1.0)),
                Sense::Ge => ineq_rows.push(RowRef::Row(r, -1.0)),
            }
        }
        for (j, &(lo, hi)) in bounds.iter().enumerate() {
            if lo == hi {
                eq_rows.push(RowRef::Fixed(j));
                continue;
            }
            if lo.is_finite() {
                ineq_rows.push(RowRef::Lower(j));
            }
            if hi.is_finite() {
                ineq_rows.push(RowRef::Upper(j));
            }
        }
        let refs: Vec<RowRef> = eq_rows.iter().chain(&ineq_rows).copied().collect();
        let m = refs.len();

        let mut a = Triplets { rows: Vec::new(), cols: Vec::new(), vals: Vec::new() };
        let mut b = vec![0.0; m];
        for (i, rr) in refs.iter().enumerate() {
            match *rr {
                RowRef::Row(r, s) => {
                    let c = &model.constraints[r];
                    for &(v, coef) in &c.coeffs {
                        a.rows.push(i);
                        a.cols.push(v.0);
                        a.vals.push(s * coef);
                    }
                    b[i] = s * c.rhs;
                }
                RowRef::Lower(j) => {
                    a.rows.push(i);
                    a.cols.push(j);
                    a.vals.push(-1.0);
                    b[i] = -bounds[j].0;
                }
                RowRef::Upper(j) | RowRef::Fixed(j) => {
                    a.rows.push(i);
                    a.cols.push(j);
                    a.vals.push(1.0);
                    b[i] = bounds[j].1;
                }
            }
        }
        let amat = csc(m, n, &a);

        let mut q = vec![0.0; n];
        for &(v, c) in &model.objective {
            q[v.0] += c;
        }
        let mut p = Triplets { rows: Vec::new(), cols: Vec::new(), vals: Vec::new() };
        for &(u, v, c) in &model.quadratic {
            if c == 0.0 {
                continue;
            }
            let (i, j) = if u.0 <= v.0 { (u.0, v.0) } else { (v.0, u.0) };
            p.rows.push(i);
            p.cols.push(j);
            p.vals.push(if i == j { 2.0 * c } else { c });
        }
        let pmat = csc(n, n, &p);

        let mut cones = Vec::new();
        if !eq_rows.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(eq_rows.len()));
        }
        if !ineq_rows.is_empty() {
            cones.push(SupportedConeT::NonnegativeConeT(ineq_rows.len()));
        }

        let settings = match DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_gap_abs(self.tol)
            .tol_gap_rel(self.tol)
            .tol_feas(self.tol)
            .build()
        {
            Ok(s) => s,
            Err(e) => return SolveOutcome::error(format!("clarabel settings: {e:?}")),
        };
        let mut solver = match DefaultSolver::new(&pmat, &q, &amat, &b, &cones, settings) {
            Ok(s) => s,
            Err(e) => return SolveOutcome::error(format!("clarabel setup: {e}")),
        };
        solver.solve();
        let sol = &solver.solution;

        match sol.status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => {
                let x = sol.x.clone();
                let mut duals = vec![0.0; model.num_rows()];
                for (i, rr) in refs.iter().enumerate() {
                    if let RowRef::Row(r, s) = *rr {
                        duals[r] = s * sol.z[i];
                    }
                }
                let obj = model.objective_at(&x);
                SolveOutcome::optimal(x, obj, duals)
            }
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
                let mut ray = FarkasRay {
                    rows: vec![0.0; model.num_rows()],
                    lower: vec![0.0; n],
                    upper: vec![0.0; n],
                };
                for (i, rr) in refs.iter().enumerate() {
                    let z = sol.z[i];
                    match *rr {
                        RowRef::Row(r, _) => ray.rows[r] = z,
                        RowRef::Lower(j) => ray.lower[j] += z,
                        RowRef::Upper(j) => ray.upper[j] += z,
                        RowRef::Fixed(j) => {
                            if z >= 0.0 {
                                ray.upper[j] += z;
                            } else {
                                ray.lower[j] -= z;
                            }
                        }
                    }
                }
                SolveOutcome::infeasible(Some(ray.normalized()))
            }
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveOutcome::unbounded(),
            other => SolveOutcome::error(format!("clarabel terminated with {other:?}")),
        }
    }
}
