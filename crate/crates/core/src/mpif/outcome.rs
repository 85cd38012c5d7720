use std::collections::BTreeMap;

use super::model::{ModelSpec, Sense};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Optimal,
    Infeasible,
    Unbounded,
    Error,
}

/// Infeasibility certificate.
///
/// Every row is read in `<=` orientation (`>=` rows negated, `=` rows as
/// written), so the weights on inequality rows are nonnegative. Bound
/// multipliers cover `x_j >= l_j` (`lower`) and `x_j <= u_j` (`upper`).
/// A valid ray has `sum_r w_r a_r + upper - lower = 0` and a negative
/// [`FarkasRay::value`].
#[derive(Debug, Clone, PartialEq)]
pub struct FarkasRay {
    pub rows: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl FarkasRay {
    /// Row weight on the `<=`-oriented copy of row `r`.
    pub fn oriented_rhs(model: &ModelSpec, r: usize) -> f64 {
        let c = &model.constraints[r];
        match c.sense {
            Sense::Ge => -c.rhs,
            _ => c.rhs,
        }
    }

    /// `w^T b` including bound terms; negative for a valid certificate.
    pub fn value(&self, model: &ModelSpec) -> f64 {
        let rows: f64 = self
            .rows
            .iter()
            .enumerate()
            .map(|(r, w)| w * Self::oriented_rhs(model, r))
            .sum();
        let bounds: f64 = model
            .variables
            .iter()
            .enumerate()
            .map(|(j, v)| {
                let mut t = 0.0;
                if self.upper[j] != 0.0 && v.upper.is_finite() {
                    t += self.upper[j] * v.upper;
                }
                if self.lower[j] != 0.0 && v.lower.is_finite() {
                    t -= self.lower[j] * v.lower;
                }
                t
            })
            .sum();
        rows + bounds
    }

    /// Largest entry of `|sum_r w_r a_r + upper - lower|`.
    pub fn residual(&self, model: &ModelSpec) -> f64 {
        let mut g = vec![0.0; model.num_vars()];
        for (r, c) in model.constraints.iter().enumerate() {
            let w = match c.sense {
                Sense::Ge => -self.rows[r],
                _ => self.rows[r],
            };
            for &(v, a) in &c.coeffs {
                g[v.0] += w * a;
            }
        }
        g.iter()
            .enumerate()
            .map(|(j, gj)| (gj + self.upper[j] - self.lower[j]).abs())
            .fold(0.0, f64::max)
    }

    /// Scale so the largest row or bound weight has magnitude one.
    pub fn normalized(mut self) -> Self {
        let m = self
            .rows
            .iter()
            .chain(&self.lower)
            .chain(&self.upper)
            .fold(0.0f64, |m, w| m.max(w.abs()));
        if m > 0.0 {
            for w in self.rows.iter_mut().chain(&mut self.lower).chain(&mut self.upper) {
                *w /= m;
            }
        }
        self
    }
}

/// Result of one solve. Only the fields implied by `status` are populated.
///
/// Duals follow `L = f + sum_r y_r (a_r x - b_r)`: `<=` rows carry `y >= 0`,
/// `>=` rows `y <= 0`, so `y_r = -d(opt)/d(b_r)`.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: Status,
    pub message: Option<String>,
    pub primal: Vec<f64>,
    pub objective_value: f64,
    pub duals: Vec<f64>,
    pub farkas: Option<FarkasRay>,
    pub nodes: usize,
}

impl SolveOutcome {
    pub fn optimal(primal: Vec<f64>, objective_value: f64, duals: Vec<f64>) -> Self {
        Self {
            status: Status::Optimal,
            message: None,
            primal,
            objective_value,
            duals,
            farkas: None,
            nodes: 0,
        }
    }

    pub fn infeasible(farkas: Option<FarkasRay>) -> Self {
        Self {
            status: Status::Infeasible,
            message: None,
            primal: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            farkas,
            nodes: 0,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            status: Status::Unbounded,
            message: None,
            primal: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            farkas: None,
            nodes: 0,
        }
    }

    pub fn error(message: impl Into<String>) -> Self {
        Self {
            status: Status::Error,
            message: Some(message.into()),
            primal: Vec::new(),
            objective_value: f64::NAN,
            duals: Vec::new(),
            farkas: None,
            nodes: 0,
        }
    }

    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub fn value(&self, model: &ModelSpec, name: &str) -> Option<f64> {
        model.var(name).and_then(|v| self.primal.get(v.0).copied())
    }

    pub fn dual(&self, model: &ModelSpec, tag: &str) -> Option<f64> {
        model.row(tag).and_then(|r| self.duals.get(r.0).copied())
    }

    pub fn farkas_weight(&self, model: &ModelSpec, tag: &str) -> Option<f64> {
        let r = model.row(tag)?;
        self.farkas.as_ref().map(|f| f.rows[r.0])
    }

    pub fn primal_map(&self, model: &ModelSpec) -> BTreeMap<String, f64> {
        model
            .variables
            .iter()
            .zip(&self.primal)
            .map(|(v, x)| (v.name.clone(), *x))
            .collect()
    }

    pub fn dual_map(&self, model: &ModelSpec) -> BTreeMap<String, f64> {
        model
            .constraints
            .iter()
            .zip(&self.duals)
            .map(|(c, y)| (c.tag.clone(), *y))
            .collect()
    }
}
