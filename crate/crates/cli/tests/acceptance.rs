//! Acceptance checks, run in sequence so the timing limits mean something.
//! Prints one PASS/FAIL line per criterion and exits nonzero on any failure.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spar_opf::bounds::{lower_bound, run_bounds, upper_bound};
use spar_opf::engine::{approximation_quality, run_spar, EngineConfig, StepRule};
use spar_opf::gridmodel::{solve_second_stage, Network, Objective};
use spar_opf::master::{build_master, random_feasible_plan, solve_master, Encoding, PlanningParams};
use spar_opf::oracle::{scenario_values, solve_extensive_form, true_expected_value, EF_VARIABLE_LIMIT};
use spar_opf::pwl::{breakpoint_values, project_isotone, CoordinateFunction, CoordinateFunctionSet};
use spar_opf::scenarios::ScenarioSet;
use spar_opf::Error;
use spar_opf_cli::config::RunConfig;

type Outcome = Result<String, String>;

struct Instance {
    config: RunConfig,
    net: Network,
    scen: ScenarioSet,
    params: PlanningParams,
}

impl Instance {
    fn shipped() -> Self {
        let config = RunConfig::load(&common::data("ieee13.toml")).unwrap();
        let net = Network::load(config.network.as_ref().unwrap()).unwrap();
        let scen = ScenarioSet::load(config.scenario_file.as_ref().unwrap()).unwrap();
        let params = config.planning();
        Self { config, net, scen, params }
    }

    fn engine(&self, seed: u64, objective: Objective) -> EngineConfig {
        EngineConfig { seed, objective, ..self.config.engine().unwrap() }
    }

    fn ef(&self, objective: Objective) -> f64 {
        let e = self.engine(0, objective);
        solve_extensive_form(&self.net, &self.scen, &self.params, objective, &e.dg, &e.solver, EF_VARIABLE_LIMIT).unwrap().value
    }

    fn expected_cost(&self, units: &[i64], e: &EngineConfig) -> f64 {
        self.params.first_stage_value(units)
            + true_expected_value(units, &self.net, &self.scen, e.objective, &e.dg, &e.solver, e.execution).unwrap()
    }
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn optimality_gap(inst: &Instance) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for objective in [Objective::VoltageDeviation, Objective::PowerLoss] {
        let f_star = inst.ef(objective);
        let mut gaps = Vec::new();
        let mut slowest = Duration::ZERO;
        for seed in 0..25 {
            let e = inst.engine(seed, objective);
            let t = Instant::now();
            let run = run_spar(&e, &inst.net, &inst.scen, &inst.params).unwrap();
            slowest = slowest.max(t.elapsed());
            gaps.push(100.0 * (inst.expected_cost(&run.solution.units, &e) - f_star) / f_star);
        }
        let med = median(gaps.clone());
        let worst = gaps.iter().cloned().fold(f64::MIN, f64::max);
        ok &= med <= 2.0 && slowest < Duration::from_secs(60);
        lines.push(format!("{objective:?} median gap {med:.3}% (worst {worst:.3}%), slowest run {:.2} s", slowest.as_secs_f64()));
    }
    check(ok, lines.join("; "))
}

fn approximation_quality_per_rule(inst: &Instance) -> Outcome {
    let f_star = inst.ef(Objective::VoltageDeviation);
    let mut ok = true;
    let mut parts = Vec::new();
    for rule in [StepRule::Rule1, StepRule::Rule2, StepRule::Rule3] {
        let e = EngineConfig { step_rule: rule, ..inst.engine(inst.config.seed, Objective::VoltageDeviation) };
        let run = run_spar(&e, &inst.net, &inst.scen, &inst.params).unwrap();
        let q = approximation_quality(&run.solution, &inst.net, &inst.scen, &inst.params, f_star, &e).unwrap();
        ok &= run.converged && q >= 0.95;
        parts.push(format!("{rule:?} {q:.4} ({} iters{})", run.iterations, if run.converged { "" } else { ", not converged" }));
    }
    check(ok, parts.join(", "))
}

fn bound_sandwich(inst: &Instance) -> Outcome {
    let f_star = inst.ef(Objective::VoltageDeviation);
    let bounds = inst.config.bounds().unwrap();
    assert_eq!((bounds.batches, bounds.batch_size, bounds.alpha), (10, 5, 0.05));
    let (mut inside, mut worst_gap) = (0, 0.0f64);
    for seed in 0..25 {
        let e = inst.engine(seed, Objective::VoltageDeviation);
        let r = run_bounds(&e, &inst.net, &inst.scen, &inst.params, &bounds).unwrap().report;
        if r.lb_ci.0 <= f_star && f_star <= r.ub_ci.1 {
            inside += 1;
        }
        worst_gap = worst_gap.max(100.0 * r.bounds_gap / f_star);
    }
    check(inside * 10 >= 25 * 9 && worst_gap <= 10.0, format!("optimum inside {inside}/25, largest gap {worst_gap:.2}% of the optimum"))
}

/// Exact isotonic regression by trying every contiguous partition.
fn isotonic_oracle(n: &[f64]) -> Vec<f64> {
    let len = n.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << (len - 1)) {
        let mut m = Vec::with_capacity(len);
        let mut start = 0;
        for end in 1..=len {
            if end == len || mask & (1 << (end - 1)) != 0 {
                let mean = n[start..end].iter().sum::<f64>() / (end - start) as f64;
                m.extend(std::iter::repeat(mean).take(end - start));
                start = end;
            }
        }
        if m.windows(2).any(|w| w[0] > w[1] + 1e-12) {
            continue;
        }
        let cost: f64 = m.iter().zip(n).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().map_or(true, |(c, _)| cost < *c) {
            best = Some((cost, m));
        }
    }
    best.unwrap().1
}

fn projection_correctness(_: &Instance) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let t = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = 0;
    for _ in 0..10_000 {
        let len = rng.gen_range(1..=8);
        let mut n: Vec<f64> = (0..len).map(|_| rng.gen_range(-10.0..10.0)).collect();
        n.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let l = rng.gen_range(0..len);
        n[l] = rng.gen_range(-10.0..10.0);
        let m = project_isotone(&n, l);
        let o = isotonic_oracle(&n);
        worst = m.iter().zip(&o).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
        if !m.windows(2).all(|w| w[0] <= w[1]) || project_isotone(&m, l) != m {
            failures += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(worst <= 1e-9 && failures == 0 && secs < 5.0, format!("max deviation {worst:.1e}, {failures} idempotence/isotonicity failures, {secs:.2} s"))
}

fn random_master(rng: &mut ChaCha8Rng) -> (CoordinateFunctionSet, PlanningParams) {
    let buses = rng.gen_range(1..=5);
    let lmax = rng.gen_range(1..=6i64);
    let functions = (0..buses)
        .map(|_| {
            let mut s: Vec<f64> = (0..lmax).map(|_| rng.gen_range(-10.0..10.0)).collect();
            s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            CoordinateFunction::from_slopes(0, s).unwrap()
        })
        .collect();
    let vfa = CoordinateFunctionSet { labels: (0..buses).map(|i| format!("b{i}")).collect(), functions };
    let (a, b) = (rng.gen_range(0..=buses), rng.gen_range(0..=buses));
    let params = PlanningParams {
        budget: rng.gen_range(1..=buses as i64 * lmax) as f64 * 2.0 * 1.01,
        unit_kw: 2.0,
        unit_cost: 1.01,
        p_min_kw: rng.gen_range(0..=lmax) as f64 * 2.0,
        p_max_kw: lmax as f64 * 2.0,
        n_min: a.min(b),
        n_max: a.max(b).max(1),
        first_stage_cost: Vec::new(),
    };
    (vfa, params)
}

fn encoding_equivalence(inst: &Instance) -> Outcome {
    let solver = inst.config.engine().unwrap().master_solver;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut solved, mut disagreements) = (0.0f64, 0, 0);
    while solved < 200 {
        let (vfa, params) = random_master(&mut rng);
        let solve = |enc| solve_master(&build_master(enc, &vfa, &params, &[]).unwrap(), &params, &solver);
        let (l, e) = match (solve(Encoding::Lambda), solve(Encoding::Epigraph)) {
            (Ok(l), Ok(e)) => (l, e),
            (Err(Error::Infeasible(_)), Err(Error::Infeasible(_))) => continue,
            _ => {
                disagreements += 1;
                continue;
            }
        };
        solved += 1;
        worst = worst.max((l.master_objective - e.master_objective).abs());
        // the reported objective is the value function at the reported plan
        let direct: f64 = vfa.functions.iter().zip(&e.units).map(|(f, &x)| breakpoint_values(f)[x as usize]).sum();
        worst = worst.max((direct - e.master_objective).abs());
    }

    let e = inst.engine(inst.config.seed, Objective::VoltageDeviation);
    let vfa = run_spar(&e, &inst.net, &inst.scen, &inst.params).unwrap().vfa;
    let time = |enc| {
        let model = build_master(enc, &vfa, &inst.params, &[]).unwrap();
        let samples: Vec<f64> = (0..15)
            .map(|_| {
                let t = Instant::now();
                solve_master(&model, &inst.params, &solver).unwrap();
                t.elapsed().as_secs_f64()
            })
            .collect();
        median(samples)
    };
    let (lambda, epigraph) = (time(Encoding::Lambda), time(Encoding::Epigraph));
    check(
        worst <= 1e-6 && disagreements == 0 && epigraph <= lambda,
        format!("max objective difference {worst:.1e} over 200 instances, {disagreements} feasibility disagreements; 13-bus master median {:.2} ms epigraph vs {:.2} ms lambda", epigraph * 1e3, lambda * 1e3),
    )
}

fn recourse_convexity(inst: &Instance) -> Outcome {
    let e = inst.engine(0, Objective::VoltageDeviation);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let s = rng.gen_range(0..inst.scen.len());
        let bus = rng.gen_range(1..inst.net.bus_count());
        let mut cap: Vec<f64> = (0..inst.net.bus_count()).map(|_| if rng.gen_bool(0.25) { rng.gen_range(1..=8) as f64 } else { 0.0 }).collect();
        let q: Vec<f64> = (0..=8)
            .map(|k| {
                cap[bus] = k as f64;
                solve_second_stage(&inst.net, &inst.scen.scenarios[s], &cap, e.objective, &e.dg, &e.solver).unwrap().recourse_value
            })
            .collect();
        for w in q.windows(3) {
            worst = worst.min((w[2] - w[1]) - (w[1] - w[0]));
        }
    }
    check(worst >= -1e-6, format!("smallest second difference {worst:.2e} over 50 probes"))
}

fn feasibility_cuts(_: &Instance) -> Outcome {
    let config = RunConfig::load(&common::data("ieee13.toml")).unwrap();
    let net = Network::load(common::data("ieee13_thermal_tight.json")).unwrap();
    let scen = ScenarioSet::load(common::data("thermal_tight_scenarios.csv")).unwrap();
    let params = config.planning();
    let e = config.engine().unwrap();
    let run = run_spar(&e, &net, &scen, &params).unwrap();
    let feasible = |units: &[i64]| {
        scenario_values(units, &net, &scen, e.objective, &e.dg, &e.solver, e.execution).unwrap().iter().all(Option::is_some)
    };

    let final_ok = feasible(&run.solution.units);
    let mut cut_off: Vec<&[i64]> = Vec::new();
    let mut revisits = 0;
    for row in &run.trace {
        if cut_off.contains(&row.plan.as_slice()) {
            revisits += 1;
        }
        if row.recourse.is_none() {
            cut_off.push(&row.plan);
        }
    }

    let n = net.bus_count();
    let mut candidates = vec![vec![0; n]];
    for bus in 0..n {
        for units in params.min_units().max(1)..=params.max_units() {
            let mut x = vec![0; n];
            x[bus] = units;
            candidates.push(x);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    candidates.extend((0..200).filter_map(|_| random_feasible_plan(&params, n, &[], &mut rng, 1000)));
    let feasible_set: Vec<&Vec<i64>> = candidates.iter().filter(|x| params.admits(x) && feasible(x)).collect();
    let excluded = feasible_set.iter().filter(|x| run.cuts.iter().any(|c| c.slack(x) < -1e-9)).count();

    check(
        final_ok && revisits == 0 && excluded == 0 && !run.cuts.is_empty(),
        format!(
            "{} cuts, final plan {}, {revisits} revisits, {excluded} of {} enumerated feasible plans excluded",
            run.cuts.len(),
            if final_ok { "feasible" } else { "INFEASIBLE" },
            feasible_set.len()
        ),
    )
}

fn statistical_arithmetic(_: &Instance) -> Outcome {
    // one-sided 95% normal quantile
    const Z: f64 = 1.6448536269514722;
    let ub = upper_bound(&[10.0, 14.0], 0.05).unwrap();
    let lb = lower_bound(&[6.0, 8.0, 10.0], 0.05).unwrap();
    let ub_half = Z * 2.0;
    let lb_half = Z * (4.0f64 / 3.0).sqrt();
    let four = |a: f64, b: f64| (a - b).abs() < 5e-5;
    let ok = four(ub.mean, 12.0)
        && four(ub.ci.0, 12.0 - ub_half)
        && four(ub.ci.1, 12.0 + ub_half)
        && four(lb.mean, 8.0)
        && four(lb.ci.0, 8.0 - lb_half)
        && four(lb.ci.1, 8.0 + lb_half)
        && format!("{:.2}", ub.ci.1 - 12.0) == "3.29"
        && format!("{:.2}", lb.ci.1 - 8.0) == "1.90";
    check(ok, format!("[10,14] -> {:.4} +/- {:.4}; [6,8,10] -> {:.4} +/- {:.4}", ub.mean, ub.ci.1 - ub.mean, lb.mean, lb.ci.1 - lb.mean))
}

fn determinism(_: &Instance) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let cfg = common::write_config(dir.path(), &a, &[]);
    for out in [&a, &b] {
        let o = common::run("solve", &cfg, &["--out", out.to_str().unwrap()]);
        if !o.status.success() {
            return Err(common::stderr(&o));
        }
    }
    let same = |f: &str| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap();
    let (trace, solution) = (same("trace.csv"), same("solution.json"));
    check(trace && solution, format!("trace.csv {}, solution.json {}", if trace { "identical" } else { "differs" }, if solution { "identical" } else { "differs" }))
}

fn main() {
    std::panic::set_hook(Box::new(|_| {}));
    let inst = Instance::shipped();
    let criteria: [(&str, fn(&Instance) -> Outcome); 9] = [
        ("optimality gap", optimality_gap),
        ("approximation quality", approximation_quality_per_rule),
        ("bound sandwich", bound_sandwich),
        ("projection correctness", projection_correctness),
        ("encoding equivalence", encoding_equivalence),
        ("recourse convexity", recourse_convexity),
        ("feasibility cuts", feasibility_cuts),
        ("statistical arithmetic", statistical_arithmetic),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&inst))).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_else(|| "panicked".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {} {name}: PASS ({d}) [{secs:.1} s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({d}) [{secs:.1} s]", i + 1)
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
