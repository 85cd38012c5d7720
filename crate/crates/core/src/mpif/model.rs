use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Index of a variable inside one [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

/// Index of a linear row inside one [`ModelSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RowId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    Continuous,
    Binary,
    Integer,
}

impl VarKind {
    pub fn is_integral(self) -> bool {
        !matches!(self, VarKind::Continuous)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Eq,
    Ge,
}

impl fmt::Display for Sense {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub kind: VarKind,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone)]
pub struct Constraint {
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
    pub tag: String,
}

impl Constraint {
    pub fn activity(&self, x: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * x[v.0]).sum()
    }

    /// Amount by which `x` violates the row (0 when satisfied).
    pub fn violation(&self, x: &[f64]) -> f64 {
        let lhs = self.activity(x);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimization model with linear rows, box bounds, a linear objective and
/// an optional convex quadratic term `sum c * x_i * x_j`.
#[derive(Debug, Clone, Default)]
pub struct ModelSpec {
    pub variables: Vec<Variable>,
    pub constraints: Vec<Constraint>,
    pub objective: Vec<(VarId, f64)>,
    pub quadratic: Vec<(VarId, VarId, f64)>,
    pub objective_constant: f64,
    names: HashMap<String, VarId>,
    tags: HashMap<String, RowId>,
}

impl ModelSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, kind: VarKind, lower: f64, upper: f64) -> VarId {
        let name = name.into();
        let (lower, upper) = match kind {
            VarKind::Binary => (lower.max(0.0), upper.min(1.0)),
            _ => (lower, upper),
        };
        let id = VarId(self.variables.len());
        self.names.insert(name.clone(), id);
        self.variables.push(Variable { name, kind, lower, upper });
        id
    }

    pub fn continuous(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Continuous, lower, upper)
    }

    pub fn free(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn binary(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, VarKind::Binary, 0.0, 1.0)
    }

    pub fn integer(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.add_var(name, VarKind::Integer, lower, upper)
    }

    pub fn add_constraint(
        &mut self,
        tag: impl Into<String>,
        coeffs: Vec<(VarId, f64)>,
        sense: Sense,
        rhs: f64,
    ) -> RowId {
        let tag = tag.into();
        let id = RowId(self.constraints.len());
        self.tags.entry(tag.clone()).or_insert(id);
        self.constraints.push(Constraint { coeffs, sense, rhs, tag });
        id
    }

    pub fn add_objective(&mut self, var: VarId, coeff: f64) {
        self.objective.push((var, coeff));
    }

    pub fn add_quadratic(&mut self, a: VarId, b: VarId, coeff: f64) {
        self.quadratic.push((a, b, coeff));
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn num_rows(&self) -> usize {
        self.constraints.len()
    }

    pub fn var(&self, name: &str) -> Option<VarId> {
        self.names.get(name).copied()
    }

    pub fn row(&self, tag: &str) -> Option<RowId> {
        self.tags.get(tag).copied()
    }

    pub fn has_integers(&self) -> bool {
        self.variables.iter().any(|v| v.kind.is_integral())
    }

    pub fn has_quadratic(&self) -> bool {
        self.quadratic.iter().any(|&(_, _, c)| c != 0.0)
    }

    pub fn objective_at(&self, x: &[f64]) -> f64 {
        let lin: f64 = self.objective.iter().map(|&(v, c)| c * x[v.0]).sum();
        let quad: f64 = self.quadratic.iter().map(|&(a, b, c)| c * x[a.0] * x[b.0]).sum();
        self.objective_constant + lin + quad
    }

    /// Largest row or bound violation of `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let rows = self.constraints.iter().map(|c| c.violation(x)).fold(0.0, f64::max);
        let bounds = self
            .variables
            .iter()
            .zip(x)
            .map(|(v, &xi)| (v.lower - xi).max(xi - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for v in &self.variables {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(Error::Construction(format!(
                    "variable {} has empty bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(Error::Construction(format!("row {} has non-finite rhs", c.tag)));
            }
            if let Some(&(v, _)) = c.coeffs.iter().find(|(v, _)| v.0 >= n) {
                return Err(Error::Construction(format!(
                    "row {} references undeclared variable #{}",
                    c.tag, v.0
                )));
            }
        }
        let refs = self
            .objective
            .iter()
            .map(|(v, _)| *v)
            .chain(self.quadratic.iter().flat_map(|&(a, b, _)| [a, b]));
        for v in refs {
            if v.0 >= n {
                return Err(Error::Construction(format!(
                    "objective references undeclared variable #{}",
                    v.0
                )));
            }
        }
        Ok(())
    }
}
