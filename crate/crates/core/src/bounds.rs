//! Statistical bounds on the optimal expected cost.
//!
//! The upper bound averages full-simulation costs of independently learned
//! plans; the lower bound averages optimal values of small sample-average
//! problems. Both come with a symmetric confidence interval.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::engine::{run_spar, EngineConfig};
use crate::error::{Error, Result};
use crate::gridmodel::Network;
use crate::master::PlanningParams;
use crate::oracle::{solve_extensive_form, true_expected_value, EF_VARIABLE_LIMIT};
use crate::parallel;
use crate::rng::{rng_for, stream};
use crate::scenarios::ScenarioSet;

/// Inverse of the standard normal CDF (Acklam's rational approximation
/// with one Halley refinement step).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00, 3.754408661907416e+00];
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let p_low = 0.02425;
    let x = if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // Halley step against erfc.
    let e = 0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2) - p;
    let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
    x - u / (1.0 + x * u / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    /// Standard error of the mean.
    pub sigma: f64,
    pub ci: (f64, f64),
    /// Critical value used for the interval.
    pub critical: f64,
}

fn check(values: &[f64], alpha: f64) -> Result<()> {
    if values.len() < 2 {
        return Err(Error::Parameter(format!("need at least 2 values, got {}", values.len())));
    }
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(Error::Parameter(format!("alpha = {alpha} must lie in (0, 0.5)")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parameter("values must be finite".into()));
    }
    Ok(())
}

fn mean_and_sigma(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (mean, (ss / (m * (m - 1.0))).sqrt())
}

fn interval(values: &[f64], critical: f64) -> Estimate {
    let (mean, sigma) = mean_and_sigma(values);
    Estimate { mean, sigma, ci: (mean - critical * sigma, mean + critical * sigma), critical }
}

/// Normal-quantile interval from full-simulation costs of `M` plans.
pub fn upper_bound(h_values: &[f64], alpha: f64) -> Result<Estimate> {
    check(h_values, alpha)?;
    Ok(interval(h_values, normal_quantile(1.0 - alpha)))
}

/// Normal-quantile interval from `M` batch optimal values.
pub fn lower_bound(p_values: &[f64], alpha: f64) -> Result<Estimate> {
    check(p_values, alpha)?;
    Ok(interval(p_values, normal_quantile(1.0 - alpha)))
}

/// Student-t critical value with `m - 1` degrees of freedom.
pub fn t_quantile(p: f64, m: usize) -> Result<f64> {
    let t = StudentsT::new(0.0, 1.0, (m - 1) as f64).map_err(|e| Error::Parameter(e.to_string()))?;
    Ok(t.inverse_cdf(p))
}

/// Below this many samples the report switches to t quantiles.
pub const T_SWITCH: usize = 30;

fn estimate_for_report(values: &[f64], alpha: f64, use_t: bool) -> Result<Estimate> {
    check(values, alpha)?;
    let critical = if use_t { t_quantile(1.0 - alpha, values.len())? } else { normal_quantile(1.0 - alpha) };
    Ok(interval(values, critical))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub scenarios: usize,
    /// Objective value used as the reference (best plan's simulated cost).
    pub objective: f64,
    pub ub_mean: f64,
    pub ub_sigma: f64,
    pub ub_ci: (f64, f64),
    pub lb_mean: f64,
    pub lb_sigma: f64,
    pub lb_ci: (f64, f64),
    pub bounds_gap: f64,
    /// `1 - 2 alpha`
    pub confidence: f64,
    pub t_quantiles: bool,
    pub h_values: Vec<f64>,
    pub p_values: Vec<f64>,
}

impl BoundsReport {
    /// t quantiles are used when there are fewer than [`T_SWITCH`] samples
    /// and `allow_t` is set.
    pub fn new(scenarios: usize, h_values: &[f64], p_values: &[f64], alpha: f64, allow_t: bool) -> Result<Self> {
        let use_t = allow_t && h_values.len().min(p_values.len()) < T_SWITCH;
        let ub = estimate_for_report(h_values, alpha, use_t)?;
        let lb = estimate_for_report(p_values, alpha, use_t)?;
        let objective = h_values.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Self {
            scenarios,
            objective,
            ub_mean: ub.mean,
            ub_sigma: ub.sigma,
            ub_ci: ub.ci,
            lb_mean: lb.mean,
            lb_sigma: lb.sigma,
            lb_ci: lb.ci,
            bounds_gap: ub.ci.1 - lb.ci.0,
            confidence: 1.0 - 2.0 * alpha,
            t_quantiles: use_t,
            h_values: h_values.to_vec(),
            p_values: p_values.to_vec(),
        })
    }

    /// Gap relative to the objective, in percent.
    pub fn gap_percent(&self) -> f64 {
        100.0 * self.bounds_gap / self.objective.abs().max(f64::MIN_POSITIVE)
    }

    pub fn table(&self) -> String {
        let mut s = format!(
            "{:>6} | {:>12} | {:>27} | {:>27} | {:>7}\n",
            "N_s", "Obj", "LB CI", "UB CI", "BG (%)"
        );
        s.push_str(&format!(
            "{:>6} | {:>12.6} | [{:>12.6}, {:>12.6}] | [{:>12.6}, {:>12.6}] | {:>7.3}\n",
            self.scenarios,
            self.objective,
            self.lb_ci.0,
            self.lb_ci.1,
            self.ub_ci.0,
            self.ub_ci.1,
            self.gap_percent()
        ));
        if self.t_quantiles {
            s.push_str("(intervals use Student-t quantiles)\n");
        }
        s
    }
}

/// How the optimal value of a batch problem is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchOptimum {
    /// Extensive form of the batch, solved exactly.
    ExtensiveForm,
    /// The learned plan's simulated cost on its own batch. Only an estimate
    /// of the batch optimum (it can sit above it).
    Run,
}

#[derive(Debug, Clone)]
pub struct BoundsConfig {
    /// Number of batches `M`.
    pub batches: usize,
    /// Scenarios per batch `N'`.
    pub batch_size: usize,
    pub alpha: f64,
    pub allow_t: bool,
    pub batch_optimum: BatchOptimum,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self { batches: 10, batch_size: 5, alpha: 0.05, allow_t: true, batch_optimum: BatchOptimum::ExtensiveForm }
    }
}

impl BoundsConfig {
    pub fn validate(&self, scenarios: usize) -> Result<()> {
        if self.batches < 2 {
            return Err(Error::Parameter(format!("need at least 2 batches, got {}", self.batches)));
        }
        if self.batch_size == 0 || self.batch_size > scenarios {
            return Err(Error::Parameter(format!("batch size {} outside 1..={scenarios}", self.batch_size)));
        }
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(Error::Parameter(format!("alpha must lie in (0, 0.5), got {}", self.alpha)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRun {
    pub batch: Vec<usize>,
    pub units: Vec<i64>,
    /// First-stage cost plus expected recourse over every scenario.
    pub h: f64,
    /// Optimal value of the batch problem.
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsOutcome {
    pub report: BoundsReport,
    pub runs: Vec<BatchRun>,
}

/// Scenario indices for each batch: disjoint slices of one shuffle when
/// they fit, otherwise independent draws (distinct within a batch).
pub fn draw_batches(scenarios: usize, batches: usize, size: usize, seed: u64) -> Vec<Vec<usize>> {
    if batches * size <= scenarios {
        let mut all: Vec<usize> = (0..scenarios).collect();
        all.shuffle(&mut rng_for(seed, stream::BATCHES, 0));
        return all.chunks(size).take(batches).map(|c| sorted(c.to_vec())).collect();
    }
    (0..batches)
        .map(|m| {
            let mut rng = rng_for(seed, stream::BATCHES, 1 + m as u64);
            sorted(rand::seq::index::sample(&mut rng, scenarios, size).into_vec())
        })
        .collect()
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

/// Learn one plan per batch, simulate each on every scenario (upper bound)
/// and solve each batch problem (lower bound).
pub fn run_bounds(
    engine: &EngineConfig,
    net: &Network,
    scen: &ScenarioSet,
    params: &PlanningParams,
    cfg: &BoundsConfig,
) -> Result<BoundsOutcome> {
    cfg.validate(scen.len())?;
    engine.validate()?;
    let batches = draw_batches(scen.len(), cfg.batches, cfg.batch_size, engine.seed);
    let jobs: Vec<(usize, Vec<usize>)> = batches.into_iter().enumerate().collect();
    let runs = parallel::try_map(engine.execution, &jobs, |(m, batch)| {
        let sub = scen.select(batch)?;
        let run_seed: u64 = rng_for(engine.seed, stream::BATCHES, u64::MAX - *m as u64).gen();
        let run_cfg = EngineConfig { seed: run_seed, ..engine.clone() };
        let units = run_spar(&run_cfg, net, &sub, params)?.solution.units;
        let first = params.first_stage_value(&units);
        let h = first + true_expected_value(&units, net, scen, engine.objective, &engine.dg, &engine.solver, engine.execution)?;
        let p = match cfg.batch_optimum {
            BatchOptimum::ExtensiveForm => {
                solve_extensive_form(net, &sub, params, engine.objective, &engine.dg, &engine.solver, EF_VARIABLE_LIMIT)?.value
            }
            BatchOptimum::Run => {
                first + true_expected_value(&units, net, &sub, engine.objective, &engine.dg, &engine.solver, engine.execution)?
            }
        };
        Ok::<_, Error>(BatchRun { batch: batch.clone(), units, h, p })
    })?;
    let h: Vec<f64> = runs.iter().map(|r| r.h).collect();
    let p: Vec<f64> = runs.iter().map(|r| r.p).collect();
    let report = BoundsReport::new(scen.len(), &h, &p, cfg.alpha, cfg.allow_t)?;
    Ok(BoundsOutcome { report, runs })
}
