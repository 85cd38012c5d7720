//! Separable piecewise-linear convex coordinate functions.
//!
//! A [`CoordinateFunction`] stores the slopes between consecutive integer
//! breakpoints; its value at `lower_break` is pinned to zero. The learning
//! loop nudges one slope at a time ([`slope_update`]) and restores convexity
//! with [`project_isotone`], which only touches the window around the
//! updated entry.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateFunction {
    pub lower_break: i64,
    pub upper_break: i64,
    pub slopes: Vec<f64>,
}

impl CoordinateFunction {
    /// All-zero slopes over `lower_break..=upper_break`.
    pub fn zeros(lower_break: i64, upper_break: i64) -> Result<Self> {
        if upper_break <= lower_break {
            return Err(Error::Domain(format!(
                "breakpoint range {lower_break}..{upper_break} is empty"
            )));
        }
        Ok(Self { lower_break, upper_break, slopes: vec![0.0; (upper_break - lower_break) as usize] })
    }

    pub fn from_slopes(lower_break: i64, slopes: Vec<f64>) -> Result<Self> {
        if slopes.is_empty() {
            return Err(Error::Domain("a coordinate function needs at least one slope".into()));
        }
        Ok(Self { lower_break, upper_break: lower_break + slopes.len() as i64, slopes })
    }

    pub fn is_isotone(&self) -> bool {
        self.slopes.windows(2).all(|w| w[0] <= w[1])
    }

    /// Slope index for a decision at breakpoint `l`; the top breakpoint maps
    /// onto the last segment.
    pub fn segment_for(&self, l: i64) -> usize {
        ((l - self.lower_break).max(0) as usize).min(self.slopes.len() - 1)
    }
}

pub fn evaluate(f: &CoordinateFunction, x: f64) -> Result<f64> {
    let lo = f.lower_break as f64;
    let hi = f.upper_break as f64;
    if !(lo..=hi).contains(&x) {
        return Err(Error::Domain(format!("x = {x} outside [{lo}, {hi}]")));
    }
    let offset = x - lo;
    let u = (offset.floor() as usize).min(f.slopes.len());
    let full: f64 = f.slopes[..u].iter().sum();
    let partial = if u < f.slopes.len() { f.slopes[u] * (offset - u as f64) } else { 0.0 };
    Ok(full + partial)
}

/// Function values at every integer breakpoint, starting with 0.
pub fn breakpoint_values(f: &CoordinateFunction) -> Vec<f64> {
    let mut out = Vec::with_capacity(f.slopes.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for m in &f.slopes {
        acc += m;
        out.push(acc);
    }
    out
}

/// Smoothed slope vector with entry `l` moved toward the observation `gamma`.
pub fn slope_update(f: &CoordinateFunction, l: i64, gamma: f64, alpha: f64) -> Result<Vec<f64>> {
    if l < f.lower_break || l >= f.upper_break {
        return Err(Error::Domain(format!(
            "segment {l} outside [{}, {})",
            f.lower_break, f.upper_break
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("step size {alpha} outside (0, 1]")));
    }
    let mut n = f.slopes.clone();
    let k = (l - f.lower_break) as usize;
    n[k] = (1.0 - alpha) * n[k] + alpha * gamma;
    Ok(n)
}

/// Euclidean projection onto nondecreasing vectors, for input that differs
/// from an isotone vector only at index `l_updated` (offset from the lowest
/// breakpoint).
pub fn project_isotone(n: &[f64], l_updated: usize) -> Vec<f64> {
    let mut m = n.to_vec();
    let len = n.len();
    if len < 2 || l_updated >= len {
        return m;
    }
    let l = l_updated;
    if l > 0 && n[l - 1] > n[l] {
        // Pool leftward: largest eta <= l whose left neighbour sits at or
        // below the window mean.
        let mut sum = n[l];
        let mut eta = l;
        loop {
            let mean = sum / (l - eta + 1) as f64;
            if eta == 0 || n[eta - 1] <= mean {
                break;
            }
            eta -= 1;
            sum += n[eta];
        }
        let mean = sum / (l - eta + 1) as f64;
        for v in &mut m[eta..=l] {
            *v = mean;
        }
    } else if l + 1 < len && n[l] > n[l + 1] {
        let mut sum = n[l];
        let mut eta = l;
        loop {
            let mean = sum / (eta - l + 1) as f64;
            if eta + 1 == len || n[eta + 1] >= mean {
                break;
            }
            eta += 1;
            sum += n[eta];
        }
        let mean = sum / (eta - l + 1) as f64;
        for v in &mut m[l..=eta] {
            *v = mean;
        }
    }
    m
}

/// One coordinate function per linking coordinate. Serializes as
/// `{"coordinates": [{label, lower_break, upper_break, slopes}, ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Document", into = "Document")]
pub struct CoordinateFunctionSet {
    pub labels: Vec<String>,
    pub functions: Vec<CoordinateFunction>,
}

#[derive(Serialize, Deserialize)]
struct Entry {
    label: String,
    lower_break: i64,
    upper_break: i64,
    slopes: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Document {
    coordinates: Vec<Entry>,
}

impl From<CoordinateFunctionSet> for Document {
    fn from(set: CoordinateFunctionSet) -> Self {
        Document {
            coordinates: set
                .labels
                .into_iter()
                .zip(set.functions)
                .map(|(label, f)| Entry { label, lower_break: f.lower_break, upper_break: f.upper_break, slopes: f.slopes })
                .collect(),
        }
    }
}

impl TryFrom<Document> for CoordinateFunctionSet {
    type Error = Error;
    fn try_from(doc: Document) -> Result<Self> {
        let mut labels = Vec::new();
        let mut functions = Vec::new();
        for e in doc.coordinates {
            if e.slopes.is_empty() || e.upper_break - e.lower_break != e.slopes.len() as i64 {
                return Err(Error::Ingestion(format!(
                    "coordinate {} declares {}..{} but carries {} slopes",
                    e.label,
                    e.lower_break,
                    e.upper_break,
                    e.slopes.len()
                )));
            }
            labels.push(e.label);
            functions.push(CoordinateFunction { lower_break: e.lower_break, upper_break: e.upper_break, slopes: e.slopes });
        }
        Ok(Self { labels, functions })
    }
}

impl CoordinateFunctionSet {
    pub fn zeros(labels: Vec<String>, lower_break: i64, upper_break: i64) -> Result<Self> {
        let functions = labels
            .iter()
            .map(|_| CoordinateFunction::zeros(lower_break, upper_break))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { labels, functions })
    }

    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }

    /// Sum of coordinate values at an integer point.
    pub fn value_at(&self, x: &[i64]) -> Result<f64> {
        self.functions.iter().zip(x).map(|(f, &xi)| evaluate(f, xi as f64)).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Ingestion(e.to_string()))
    }
}
