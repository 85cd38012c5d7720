use proptest::prelude::*;
use spar_opf::master::{build_master, solve_master, Encoding, FeasibilityCut, PlanningParams};
use spar_opf::mpif::{self, Backend, SolverConfig};
use spar_opf::pwl::{breakpoint_values, CoordinateFunction, CoordinateFunctionSet};

#[derive(Debug, Clone)]
struct Instance {
    vfa: CoordinateFunctionSet,
    params: PlanningParams,
    cuts: Vec<FeasibilityCut>,
}

fn convex_set(buses: usize, lmax: i64) -> impl Strategy<Value = CoordinateFunctionSet> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, lmax as usize), buses).prop_map(|rows| {
        let functions = rows
            .into_iter()
            .map(|mut s| {
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
                CoordinateFunction::from_slopes(0, s).unwrap()
            })
            .collect::<Vec<_>>();
        let labels = (0..functions.len()).map(|i| format!("b{i}")).collect();
        CoordinateFunctionSet { labels, functions }
    })
}

fn instance(max_buses: usize, max_l: i64, with_cuts: bool) -> impl Strategy<Value = Instance> {
    (1..=max_buses, 1..=max_l).prop_flat_map(move |(n, lmax)| {
        let cuts = prop::collection::vec((prop::collection::vec(-1.0f64..1.0, n), 0.0f64..4.0), 0..=if with_cuts { 2 } else { 0 });
        (convex_set(n, lmax), 0..=lmax, 1..=n as i64 * lmax, 0..=n, 0..=n, prop::collection::vec(-2.0f64..2.0, n), any::<bool>(), cuts)
            .prop_map(move |(vfa, lmin, budget, a, b, h, use_h, cuts)| {
                let (n_min, n_max) = (a.min(b), a.max(b).max(1));
                let params = PlanningParams {
                    budget: budget as f64 * 2.0 * 1.01,
                    unit_kw: 2.0,
                    unit_cost: 1.01,
                    p_min_kw: lmin as f64 * 2.0,
                    p_max_kw: lmax as f64 * 2.0,
                    n_min,
                    n_max,
                    first_stage_cost: if use_h { h } else { vec![] },
                };
                let cuts = cuts.into_iter().map(|(coefficients, constant)| FeasibilityCut { coefficients, constant }).collect();
                Instance { vfa, params, cuts }
            })
    })
}

/// Planning feasibility written out from the model definition.
fn feasible(x: &[i64], p: &PlanningParams, cuts: &[FeasibilityCut]) -> bool {
    let lmax = (p.p_max_kw / p.unit_kw).round() as i64;
    let lmin = (p.p_min_kw / p.unit_kw).round() as i64;
    if x.iter().any(|&v| v < 0 || v > lmax || (v > 0 && v < lmin)) {
        return false;
    }
    let spend: f64 = x.iter().map(|&v| v as f64 * p.unit_kw * p.unit_cost).sum();
    if spend > p.budget + 1e-9 {
        return false;
    }
    let sited = x.iter().filter(|&&v| v > 0).count();
    let idle = if lmin == 0 { x.len() - sited } else { 0 };
    if sited > p.n_max || sited + idle < p.n_min {
        return false;
    }
    cuts.iter().all(|c| c.coefficients.iter().zip(x).map(|(a, &v)| a * v as f64).sum::<f64>() + c.constant >= -1e-9)
}

fn value(x: &[i64], inst: &Instance) -> f64 {
    inst.vfa
        .functions
        .iter()
        .zip(x)
        .enumerate()
        .map(|(i, (f, &v))| breakpoint_values(f)[v as usize] + inst.params.first_stage_cost.get(i).copied().unwrap_or(0.0) * v as f64)
        .sum()
}

fn grid_optimum(inst: &Instance) -> Option<f64> {
    let n = inst.vfa.len();
    let lmax = inst.vfa.functions[0].upper_break;
    let side = (lmax + 1) as usize;
    let mut best: Option<f64> = None;
    for code in 0..side.pow(n as u32) {
        let x: Vec<i64> = (0..n).map(|i| ((code / side.pow(i as u32)) % side) as i64).collect();
        if feasible(&x, &inst.params, &inst.cuts) {
            let v = value(&x, inst);
            best = Some(best.map_or(v, |b: f64| b.min(v)));
        }
    }
    best
}

fn solver(simplex: bool) -> SolverConfig {
    SolverConfig::with_backend(if simplex { Backend::DenseSimplex } else { Backend::Clarabel })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn encodings_agree(inst in instance(5, 6, false), simplex in any::<bool>()) {
        let lam = build_master(Encoding::Lambda, &inst.vfa, &inst.params, &inst.cuts).unwrap();
        let epi = build_master(Encoding::Epigraph, &inst.vfa, &inst.params, &inst.cuts).unwrap();
        let cfg = solver(simplex);
        match (solve_master(&lam, &inst.params, &cfg), solve_master(&epi, &inst.params, &cfg)) {
            (Ok(a), Ok(b)) => {
                prop_assert!((a.master_objective - b.master_objective).abs() < 1e-6, "{} vs {}", a.master_objective, b.master_objective);
                prop_assert!((value(&a.units, &inst) - value(&b.units, &inst)).abs() < 1e-6);
                for s in [&a, &b] {
                    prop_assert!(feasible(&s.units, &inst.params, &[]));
                    prop_assert!(s.units.iter().zip(&s.siting).all(|(&u, &d)| u == 0 || d));
                    prop_assert!((s.master_objective - value(&s.units, &inst)).abs() < 1e-6);
                }
            }
            (Err(_), Err(_)) => prop_assert!(grid_optimum(&inst).is_none()),
            (a, b) => prop_assert!(false, "one encoding failed: {:?} / {:?}", a.err(), b.err()),
        }
    }

    #[test]
    fn lambda_units_come_out_integral(inst in instance(4, 6, false)) {
        let lam = build_master(Encoding::Lambda, &inst.vfa, &inst.params, &[]).unwrap();
        let out = mpif::solve(&lam.model, &solver(true));
        if out.is_optimal() {
            for v in &lam.units {
                prop_assert!((out.primal[v.0] - out.primal[v.0].round()).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn master_matches_grid_enumeration(inst in instance(3, 4, true), lambda in any::<bool>(), simplex in any::<bool>()) {
        let enc = if lambda { Encoding::Lambda } else { Encoding::Epigraph };
        let model = build_master(enc, &inst.vfa, &inst.params, &inst.cuts).unwrap();
        let got = solve_master(&model, &inst.params, &solver(simplex));
        match grid_optimum(&inst) {
            Some(best) => {
                let sol = got.unwrap();
                prop_assert!((sol.master_objective - best).abs() < 1e-6, "{} vs grid {}", sol.master_objective, best);
                prop_assert!(feasible(&sol.units, &inst.params, &inst.cuts));
            }
            None => prop_assert!(got.is_err()),
        }
    }
}

#[test]
fn siting_floor_forces_a_site_with_flat_values() {
    let vfa = CoordinateFunctionSet::zeros(vec!["a".into(), "b".into()], 0, 3).unwrap();
    let params = PlanningParams { budget: 100.0, unit_kw: 1.0, unit_cost: 1.0, p_min_kw: 0.0, p_max_kw: 3.0, n_min: 1, n_max: 2, first_stage_cost: vec![] };
    for enc in [Encoding::Lambda, Encoding::Epigraph] {
        let m = build_master(enc, &vfa, &params, &[]).unwrap();
        let sol = solve_master(&m, &params, &SolverConfig::default()).unwrap();
        assert!(sol.siting.iter().any(|&d| d), "{enc:?}");
    }
}
