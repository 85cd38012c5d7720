//! Human-readable dump in CPLEX LP flavour, for debugging only.

use std::fmt::Write as _;
use std::path::Path;

use super::model::{ModelSpec, Sense, VarKind};

fn term(out: &mut String, first: &mut bool, coeff: f64, name: &str) {
    if *first {
        let _ = write!(out, " {coeff} {name}");
        *first = false;
    } else if coeff < 0.0 {
        let _ = write!(out, " - {} {name}", -coeff);
    } else {
        let _ = write!(out, " + {coeff} {name}");
    }
}

fn sanitize(name: &str) -> String {
    name.chars().map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' }).collect()
}

pub fn to_lp_string(model: &ModelSpec) -> String {
    let names: Vec<String> = model.variables.iter().map(|v| sanitize(&v.name)).collect();
    let mut out = String::from("\\ generated model\nMinimize\n obj:");
    let mut first = true;
    for &(v, c) in &model.objective {
        term(&mut out, &mut first, c, &names[v.0]);
    }
    if model.has_quadratic() {
        out.push_str(" + [");
        let mut qfirst = true;
        for &(a, b, c) in &model.quadratic {
            let pair = if a == b { format!("{} ^ 2", names[a.0]) } else { format!("{} * {}", names[a.0], names[b.0]) };
            term(&mut out, &mut qfirst, 2.0 * c, &pair);
        }
        out.push_str(" ] / 2");
    }
    if first && !model.has_quadratic() {
        out.push_str(" 0");
    }
    if model.objective_constant != 0.0 {
        let _ = write!(out, " + {}", model.objective_constant);
    }
    out.push_str("\nSubject To\n");
    for c in &model.constraints {
        let _ = write!(out, " {}:", sanitize(&c.tag));
        let mut first = true;
        for &(v, a) in &c.coeffs {
            term(&mut out, &mut first, a, &names[v.0]);
        }
        if first {
            out.push_str(" 0");
        }
        let sense = match c.sense {
            Sense::Le => "<=",
            Sense::Eq => "=",
            Sense::Ge => ">=",
        };
        let _ = writeln!(out, " {sense} {}", c.rhs);
    }
    out.push_str("Bounds\n");
    for (v, name) in model.variables.iter().zip(&names) {
        let lo = if v.lower.is_finite() { v.lower.to_string() } else { "-inf".into() };
        let hi = if v.upper.is_finite() { v.upper.to_string() } else { "+inf".into() };
        let _ = writeln!(out, " {lo} <= {name} <= {hi}");
    }
    let ints: Vec<&str> = model
        .variables
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Integer)
        .map(|(_, n)| n.as_str())
        .collect();
    if !ints.is_empty() {
        let _ = writeln!(out, "General\n {}", ints.join(" "));
    }
    let bins: Vec<&str> = model
        .variables
        .iter()
        .zip(&names)
        .filter(|(v, _)| v.kind == VarKind::Binary)
        .map(|(_, n)| n.as_str())
        .collect();
    if !bins.is_empty() {
        let _ = writeln!(out, "Binary\n {}", bins.join(" "));
    }
    out.push_str("End\n");
    out
}

pub fn write_lp(model: &ModelSpec, path: impl AsRef<Path>) -> std::io::Result<()> {
    std::fs::write(path, to_lp_string(model))
}
