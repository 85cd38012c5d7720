//! Flat TOML run configuration. Every key mirrors a library field; relative
//! paths are taken from the directory holding the config file.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use spar_opf::bounds::{BatchOptimum, BoundsConfig};
use spar_opf::engine::{EngineConfig, StepRule};
use spar_opf::gridmodel::{DgParams, Objective};
use spar_opf::master::{Encoding, PlanningParams};
use spar_opf::mpif::{Backend, SolverConfig};
use spar_opf::oracle::EF_VARIABLE_LIMIT;
use spar_opf::parallel::Execution;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    /// Hourly history; scenarios are generated from it when no
    /// `scenario_file` is given.
    pub history: Option<PathBuf>,
    pub scenario_file: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,

    pub hours_per_stratum: usize,
    pub noise_std: f64,
    /// Keep this many generated scenarios (all when unset).
    pub scenario_count: Option<usize>,

    pub k_max: usize,
    pub epsilon: f64,
    pub window: usize,
    pub min_iters: usize,
    pub step_rule: String,
    pub encoding: String,
    pub explore_iters: usize,
    pub objective: String,
    pub backend: String,
    pub master_backend: String,
    pub parallel: bool,
    pub checkpoint_every: usize,
    pub quality_every: usize,
    pub f_star: Option<f64>,

    pub budget: f64,
    pub unit_kw: f64,
    pub unit_cost: f64,
    pub p_min_kw: f64,
    pub p_max_kw: f64,
    pub n_min: usize,
    pub n_max: usize,
    pub first_stage_cost: Vec<f64>,
    pub power_factor: f64,

    pub batches: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub allow_t: bool,
    pub batch_optimum: String,

    pub ef_variable_limit: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let engine = EngineConfig::default();
        let plan = PlanningParams::default();
        let bounds = BoundsConfig::default();
        Self {
            network: None,
            history: None,
            scenario_file: None,
            output_dir: PathBuf::from("out"),
            seed: 0,
            hours_per_stratum: 24,
            noise_std: 0.1,
            scenario_count: None,
            k_max: engine.k_max,
            epsilon: engine.epsilon,
            window: engine.window,
            min_iters: engine.min_iters,
            step_rule: "rule1".into(),
            encoding: "epigraph".into(),
            explore_iters: engine.explore_iters,
            objective: "vdev".into(),
            backend: "clarabel".into(),
            master_backend: "simplex".into(),
            parallel: true,
            checkpoint_every: 0,
            quality_every: 0,
            f_star: None,
            budget: plan.budget,
            unit_kw: plan.unit_kw,
            unit_cost: plan.unit_cost,
            p_min_kw: plan.p_min_kw,
            p_max_kw: plan.p_max_kw,
            n_min: plan.n_min,
            n_max: plan.n_max,
            first_stage_cost: Vec::new(),
            power_factor: 1.0,
            batches: bounds.batches,
            batch_size: bounds.batch_size,
            alpha: bounds.alpha,
            allow_t: bounds.allow_t,
            batch_optimum: "extensive_form".into(),
            ef_variable_limit: EF_VARIABLE_LIMIT,
        }
    }
}

fn parse<T: FromStr<Err = String>>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|e: String| CliError::Config(format!("{key}: {e}")))
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [&mut self.network, &mut self.history, &mut self.scenario_file].into_iter().flatten() {
            fix(p);
        }
        fix(&mut self.output_dir);
    }

    pub fn objective(&self) -> Result<Objective> {
        parse("objective", &self.objective)
    }

    pub fn encoding(&self) -> Result<Encoding> {
        parse("encoding", &self.encoding)
    }

    pub fn dg(&self) -> DgParams {
        DgParams { unit_kw: self.unit_kw, power_factor: self.power_factor }
    }

    pub fn planning(&self) -> PlanningParams {
        PlanningParams {
            budget: self.budget,
            unit_kw: self.unit_kw,
            unit_cost: self.unit_cost,
            p_min_kw: self.p_min_kw,
            p_max_kw: self.p_max_kw,
            n_min: self.n_min,
            n_max: self.n_max,
            first_stage_cost: self.first_stage_cost.clone(),
        }
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }

    pub fn engine(&self) -> Result<EngineConfig> {
        let backend: Backend = parse("backend", &self.backend)?;
        let master: Backend = parse("master_backend", &self.master_backend)?;
        let step_rule: StepRule = parse("step_rule", &self.step_rule)?;
        let cfg = EngineConfig {
            k_max: self.k_max,
            epsilon: self.epsilon,
            window: self.window,
            min_iters: self.min_iters,
            step_rule,
            encoding: self.encoding()?,
            explore_iters: self.explore_iters,
            objective: self.objective()?,
            seed: self.seed,
            dg: self.dg(),
            solver: SolverConfig::with_backend(backend),
            master_solver: SolverConfig::with_backend(master),
            execution: self.execution(),
            f_star: self.f_star,
            quality_every: self.quality_every,
            checkpoint_every: self.checkpoint_every,
            checkpoint_dir: (self.checkpoint_every > 0).then(|| self.output_dir.join("checkpoints")),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn bounds(&self) -> Result<BoundsConfig> {
        let batch_optimum = match self.batch_optimum.as_str() {
            "extensive_form" | "ef" => BatchOptimum::ExtensiveForm,
            "run" => BatchOptimum::Run,
            other => return Err(CliError::Config(format!("batch_optimum: unknown value '{other}' (expected extensive_form or run)"))),
        };
        Ok(BoundsConfig {
            batches: self.batches,
            batch_size: self.batch_size,
            alpha: self.alpha,
            allow_t: self.allow_t,
            batch_optimum,
        })
    }

    pub fn network_path(&self) -> Result<&Path> {
        let p = self.network.as_deref().ok_or_else(|| CliError::Config("network path is not set".into()))?;
        existing(p)
    }

    /// Checks everything that can be checked without solving: referenced
    /// files exist, numeric fields are in range, the output dir is usable.
    pub fn validate(&self, needs_scenarios: bool) -> Result<()> {
        self.network_path()?;
        if needs_scenarios {
            match (&self.scenario_file, &self.history) {
                (Some(p), _) => {
                    existing(p)?;
                }
                (None, Some(p)) => {
                    existing(p)?;
                }
                (None, None) => return Err(CliError::Config("either scenario_file or history must be set".into())),
            }
        }
        if self.hours_per_stratum == 0 {
            return Err(CliError::Config("hours_per_stratum must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(CliError::Config(format!("noise_std must be a nonnegative number, got {}", self.noise_std)));
        }
        if self.scenario_count == Some(0) {
            return Err(CliError::Config("scenario_count must be positive".into()));
        }
        if !(self.power_factor > 0.0 && self.power_factor <= 1.0) {
            return Err(CliError::Config(format!("power_factor must lie in (0, 1], got {}", self.power_factor)));
        }
        self.engine()?;
        self.bounds()?;
        self.prepare_output()
    }

    pub fn prepare_output(&self) -> Result<()> {
        std::fs::create_dir_all(&self.output_dir).map_err(|e| CliError::io(&self.output_dir, e))
    }
}

fn existing(p: &Path) -> Result<&Path> {
    if p.is_file() {
        Ok(p)
    } else {
        Err(CliError::io(p, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")))
    }
}
