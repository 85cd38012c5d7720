use proptest::prelude::*;
use spar_opf::scenarios::{generate_scenarios, History, ScenarioSet, HOURS};

fn history() -> impl Strategy<Value = History> {
    (1usize..=12).prop_flat_map(|days| {
        (prop::collection::vec(0.0f64..2.0, days * HOURS), prop::collection::vec(0.0f64..1.5, days * HOURS))
            .prop_map(|(l, p)| History::new(l, p).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn noiseless_scenarios_preserve_stratum_means(hist in history(), strata in 1usize..=4, buses in 1usize..=5) {
        prop_assume!(hist.days >= strata);
        let set = generate_scenarios(&hist, strata * HOURS, 0.0, buses, 3).unwrap();
        prop_assert_eq!(set.len(), strata * HOURS);
        let width = hist.days / strata;
        for s in 0..strata {
            let d0 = s * width;
            let d1 = if s + 1 == strata { hist.days } else { d0 + width };
            let cells = ((d1 - d0) * HOURS) as f64;
            let hist_load: f64 = (d0 * HOURS..d1 * HOURS).map(|k| hist.load[k]).sum::<f64>() / cells;
            let hist_pv: f64 = (d0 * HOURS..d1 * HOURS).map(|k| hist.pv[k]).sum::<f64>() / cells;
            for b in 0..buses {
                let block = &set.scenarios[s * HOURS..(s + 1) * HOURS];
                let load = block.iter().map(|sc| sc.load[b]).sum::<f64>() / HOURS as f64;
                let pv = block.iter().map(|sc| sc.pv[b]).sum::<f64>() / HOURS as f64;
                prop_assert!((load - hist_load).abs() < 1e-12, "{} vs {}", load, hist_load);
                prop_assert!((pv - hist_pv).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sets_are_well_formed(hist in history(), noise in 0.0f64..0.5, seed in any::<u64>()) {
        let set = generate_scenarios(&hist, HOURS, noise, 4, seed).unwrap();
        prop_assert_eq!(set.len(), HOURS);
        prop_assert!((set.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(set.scenarios.iter().all(|s| s.load.iter().chain(&s.pv).all(|v| *v >= 0.0)));
        prop_assert_eq!(set.clone(), generate_scenarios(&hist, HOURS, noise, 4, seed).unwrap());
    }

    #[test]
    fn csv_round_trip_is_lossless(hist in history(), seed in any::<u64>()) {
        let set = generate_scenarios(&hist, HOURS, 0.1, 3, seed).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = ScenarioSet::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, set);
    }
}

#[test]
fn relative_noise_has_the_requested_spread() {
    let days = 4;
    let load: Vec<f64> = (0..days * HOURS).map(|k| 0.4 + 0.05 * (k % HOURS) as f64).collect();
    let pv = vec![0.0; days * HOURS];
    let hist = History::new(load, pv).unwrap();
    let noisy = generate_scenarios(&hist, HOURS, 0.1, 500, 11).unwrap();
    let clean = generate_scenarios(&hist, HOURS, 0.0, 1, 11).unwrap();
    let mut z = Vec::new();
    for (n, c) in noisy.scenarios.iter().zip(&clean.scenarios) {
        for v in &n.load {
            z.push(v / c.load[0] - 1.0);
        }
        // night-time PV stays exactly zero under relative noise
        assert!(n.pv.iter().all(|v| *v == 0.0));
    }
    assert!(z.len() >= 10_000);
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (z.len() - 1) as f64).sqrt();
    assert!((sd - 0.1).abs() < 0.005, "relative spread {sd}");
    assert!(mean.abs() < 0.005, "relative mean {mean}");
}

#[test]
fn cardinality_ignores_surplus_days() {
    for days in [8, 9, 10, 11] {
        let hist = History::new(vec![1.0; days * HOURS], vec![0.5; days * HOURS]).unwrap();
        assert_eq!(generate_scenarios(&hist, 4 * HOURS, 0.1, 2, 0).unwrap().len(), 4 * HOURS);
    }
}
