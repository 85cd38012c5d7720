//! Load and PV scenarios: history ingestion, strata-averaged reduction to
//! `n_t` hourly scenarios and per-bus Gaussian perturbation.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

pub const HOURS: usize = 24;

/// Hourly multipliers, day-major: entry `24 * d + h`.
#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub days: usize,
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

impl History {
    pub fn new(load: Vec<f64>, pv: Vec<f64>) -> Result<Self> {
        if load.len() != pv.len() || load.is_empty() || load.len() % HOURS != 0 {
            return Err(Error::Ingestion(format!(
                "series lengths {} and {} must be equal nonzero multiples of 24",
                load.len(),
                pv.len()
            )));
        }
        Ok(Self { days: load.len() / HOURS, load, pv })
    }
}

#[derive(Debug, Deserialize)]
struct HistoryRow {
    day: i64,
    hour: i64,
    load_multiplier: f64,
    pv_multiplier: f64,
}

pub const MULTIPLIER_MAX: f64 = 10.0;

/// Reads a `day,hour,load_multiplier,pv_multiplier` CSV. Days are sorted;
/// every day needs hours 0..=23 exactly once.
pub fn load_history(path: impl AsRef<Path>) -> Result<History> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
    read_history(file)
}

pub fn read_history<R: std::io::Read>(reader: R) -> Result<History> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut cells: BTreeMap<i64, [Option<(f64, f64)>; HOURS]> = BTreeMap::new();
    let mut problems = Vec::new();
    for (k, rec) in rdr.deserialize::<HistoryRow>().enumerate() {
        let line = k + 2;
        let row = match rec {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("line {line}: {e}"));
                continue;
            }
        };
        if !(0..HOURS as i64).contains(&row.hour) {
            problems.push(format!("line {line}: hour {} outside 0..23", row.hour));
            continue;
        }
        for (name, v) in [("load_multiplier", row.load_multiplier), ("pv_multiplier", row.pv_multiplier)] {
            if !(0.0..=MULTIPLIER_MAX).contains(&v) {
                problems.push(format!("line {line}: {name} {v} outside [0, {MULTIPLIER_MAX}]"));
            }
        }
        let slot = &mut cells.entry(row.day).or_insert([None; HOURS])[row.hour as usize];
        if slot.is_some() {
            problems.push(format!("line {line}: duplicate (day {}, hour {})", row.day, row.hour));
        }
        *slot = Some((row.load_multiplier, row.pv_multiplier));
    }
    for (day, hours) in &cells {
        for (h, c) in hours.iter().enumerate() {
            if c.is_none() {
                problems.push(format!("missing (day {day}, hour {h})"));
            }
        }
    }
    if cells.is_empty() && problems.is_empty() {
        problems.push("no data rows".into());
    }
    if !problems.is_empty() {
        return Err(Error::Ingestion(problems.join("; ")));
    }
    let mut load = Vec::with_capacity(cells.len() * HOURS);
    let mut pv = Vec::with_capacity(cells.len() * HOURS);
    for hours in cells.values() {
        for (l, p) in hours.iter().flatten() {
            load.push(*l);
            pv.push(*p);
        }
    }
    History::new(load, pv)
}

/// One realization: per-bus load and PV multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub load: Vec<f64>,
    pub pv: Vec<f64>,
}

impl Scenario {
    pub fn uniform(buses: usize, load: f64, pv: f64) -> Self {
        Self { load: vec![load; buses], pv: vec![pv; buses] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub scenarios: Vec<Scenario>,
    pub probabilities: Vec<f64>,
}

impl ScenarioSet {
    /// Equiprobable set.
    pub fn uniform(scenarios: Vec<Scenario>) -> Result<Self> {
        let n = scenarios.len();
        Self::new(scenarios, vec![1.0 / n.max(1) as f64; n])
    }

    pub fn new(scenarios: Vec<Scenario>, probabilities: Vec<f64>) -> Result<Self> {
        if scenarios.is_empty() {
            return Err(Error::Parameter("empty scenario set".into()));
        }
        if probabilities.len() != scenarios.len() {
            return Err(Error::Parameter("one probability per scenario required".into()));
        }
        let buses = scenarios[0].load.len();
        for (s, sc) in scenarios.iter().enumerate() {
            if sc.load.len() != buses || sc.pv.len() != buses {
                return Err(Error::Parameter(format!("scenario {s} covers a different bus count")));
            }
            if sc.load.iter().chain(&sc.pv).any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::Parameter(format!("scenario {s} has a negative or non-finite multiplier")));
            }
        }
        if probabilities.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Parameter("probabilities must be nonnegative".into()));
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Parameter(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { scenarios, probabilities })
    }

    pub fn len(&self) -> usize {
        self.scenarios.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenarios.is_empty()
    }

    pub fn bus_count(&self) -> usize {
        self.scenarios[0].load.len()
    }

    /// Index drawn according to the probabilities.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (s, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if u < acc {
                return s;
            }
        }
        self.len() - 1
    }

    /// Equiprobable subset of the given scenario indices.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| {
                self.scenarios
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::Parameter(format!("scenario index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::uniform(picked)
    }

    /// `count` distinct scenarios chosen uniformly, kept in original order.
    pub fn subsample(&self, count: usize, seed: u64) -> Result<Self> {
        if count == 0 || count > self.len() {
            return Err(Error::Parameter(format!("cannot pick {count} of {} scenarios", self.len())));
        }
        let mut rng = rng_for(seed, stream::SUBSAMPLE, 0);
        let mut idx = sample(&mut rng, self.len(), count).into_vec();
        idx.sort_unstable();
        self.select(&idx)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["scenario", "bus", "load_mult", "pv_mult", "probability"])?;
        for (s, sc) in self.scenarios.iter().enumerate() {
            for b in 0..sc.load.len() {
                w.write_record([
                    s.to_string(),
                    b.to_string(),
                    sc.load[b].to_string(),
                    sc.pv[b].to_string(),
                    self.probabilities[s].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads the CSV written by [`ScenarioSet::write_csv`]. The probability
    /// column is optional; without it scenarios are equiprobable.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            scenario: usize,
            bus: usize,
            load_mult: f64,
            pv_mult: f64,
            #[serde(default)]
            probability: Option<f64>,
        }
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut by_s: BTreeMap<usize, (BTreeMap<usize, (f64, f64)>, Option<f64>)> = BTreeMap::new();
        for (k, rec) in rdr.deserialize::<Row>().enumerate() {
            let r = rec.map_err(|e| Error::Ingestion(format!("line {}: {e}", k + 2)))?;
            let entry = by_s.entry(r.scenario).or_default();
            if entry.0.insert(r.bus, (r.load_mult, r.pv_mult)).is_some() {
                return Err(Error::Ingestion(format!("duplicate (scenario {}, bus {})", r.scenario, r.bus)));
            }
            entry.1 = r.probability.or(entry.1);
        }
        if by_s.keys().enumerate().any(|(i, &s)| i != s) {
            return Err(Error::Ingestion("scenario ids must be 0..n without gaps".into()));
        }
        let mut scenarios = Vec::new();
        let mut probs = Vec::new();
        for (s, (buses, p)) in by_s {
            if buses.keys().enumerate().any(|(i, &b)| i != b) {
                return Err(Error::Ingestion(format!("scenario {s}: bus ids must be 0..n without gaps")));
            }
            scenarios.push(Scenario {
                load: buses.values().map(|v| v.0).collect(),
                pv: buses.values().map(|v| v.1).collect(),
            });
            probs.push(p);
        }
        let probabilities = if probs.iter().all(Option::is_some) {
            probs.into_iter().flatten().collect()
        } else {
            vec![1.0 / scenarios.len().max(1) as f64; scenarios.len()]
        };
        Self::new(scenarios, probabilities).map_err(|e| Error::Ingestion(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::Ingestion(format!("{}: {e}", path.display())))?;
        Self::read_csv(file)
    }
}

/// Day ranges of the `strata` contiguous strata. Surplus days join the last.
pub fn strata_bounds(days: usize, strata: usize) -> Vec<(usize, usize)> {
    let width = days / strata;
    (0..strata)
        .map(|s| (s * width, if s + 1 == strata { days } else { (s + 1) * width }))
        .collect()
}

/// Common (bus-independent) profile: one `(load, pv)` pair per scenario.
pub fn common_profile(hist: &History, n_t: usize) -> Result<Vec<(f64, f64)>> {
    if n_t == 0 || n_t % HOURS != 0 {
        return Err(Error::Parameter(format!("n_t = {n_t} is not a positive multiple of 24")));
    }
    let strata = n_t / HOURS;
    if hist.days < strata {
        return Err(Error::Parameter(format!("{} days cannot fill {strata} strata", hist.days)));
    }
    let mut out = Vec::with_capacity(n_t);
    for (d0, d1) in strata_bounds(hist.days, strata) {
        let n = (d1 - d0) as f64;
        for h in 0..HOURS {
            let (mut l, mut p) = (0.0, 0.0);
            for d in d0..d1 {
                l += hist.load[d * HOURS + h];
                p += hist.pv[d * HOURS + h];
            }
            out.push((l / n, p / n));
        }
    }
    Ok(out)
}

/// Strata-averaged reduction followed by relative Gaussian noise per bus.
pub fn generate_scenarios(hist: &History, n_t: usize, noise_std: f64, bus_count: usize, seed: u64) -> Result<ScenarioSet> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::Parameter(format!("noise_std = {noise_std} must be finite and nonnegative")));
    }
    if bus_count == 0 {
        return Err(Error::Parameter("bus_count must be positive".into()));
    }
    let common = common_profile(hist, n_t)?;
    let mut rng = rng_for(seed, stream::SCENARIO_NOISE, 0);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut perturb = |base: f64| -> f64 {
        let z: f64 = std_normal.sample(&mut rng);
        (base + noise_std * base * z).max(0.0)
    };
    let scenarios = common
        .iter()
        .map(|&(l, p)| {
            let mut sc = Scenario { load: Vec::with_capacity(bus_count), pv: Vec::with_capacity(bus_count) };
            for _ in 0..bus_count {
                sc.load.push(perturb(l));
                sc.pv.push(perturb(p));
            }
            sc
        })
        .collect();
    ScenarioSet::uniform(scenarios)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_history(days: usize) -> History {
        let load = (0..days * HOURS).map(|k| 0.5 + 0.01 * (k % 37) as f64).collect();
        let pv = (0..days * HOURS).map(|k| if (6..18).contains(&(k % HOURS)) { 0.8 } else { 0.0 }).collect();
        History::new(load, pv).unwrap()
    }

    #[test]
    fn hour_zero_mean_over_two_days() {
        let mut h = flat_history(2);
        h.load[0] = 0.5;
        h.load[HOURS] = 0.7;
        let set = generate_scenarios(&h, 24, 0.0, 3, 1).unwrap();
        assert_eq!(set.len(), 24);
        for b in 0..3 {
            assert!((set.scenarios[0].load[b] - 0.6).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_noise_shares_profile() {
        let set = generate_scenarios(&flat_history(5), 48, 0.0, 4, 9).unwrap();
        for sc in &set.scenarios {
            assert!(sc.load.iter().all(|v| *v == sc.load[0]));
            assert!(sc.pv.iter().all(|v| *v == sc.pv[0]));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let h = flat_history(4);
        let mut a = Vec::new();
        let mut b = Vec::new();
        generate_scenarios(&h, 48, 0.1, 5, 3).unwrap().write_csv(&mut a).unwrap();
        generate_scenarios(&h, 48, 0.1, 5, 3).unwrap().write_csv(&mut b).unwrap();
        assert_eq!(a, b);
        let mut c = Vec::new();
        generate_scenarios(&h, 48, 0.1, 5, 4).unwrap().write_csv(&mut c).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn parameter_errors() {
        let h = flat_history(1);
        assert!(matches!(generate_scenarios(&h, 20, 0.0, 1, 0), Err(Error::Parameter(_))));
        assert!(matches!(generate_scenarios(&h, 48, 0.0, 1, 0), Err(Error::Parameter(_))));
    }

    #[test]
    fn surplus_days_join_last_stratum() {
        assert_eq!(strata_bounds(7, 3), vec![(0, 2), (2, 4), (4, 7)]);
        let set = generate_scenarios(&flat_history(7), 72, 0.1, 2, 0).unwrap();
        assert_eq!(set.len(), 72);
    }

    #[test]
    fn history_csv_validation() {
        let mut text = String::from("day,hour,load_multiplier,pv_multiplier\n");
        for h in 0..24 {
            text.push_str(&format!("1,{h},0.5,0.1\n"));
        }
        assert_eq!(read_history(text.as_bytes()).unwrap().days, 1);

        let mut short = String::from("day,hour,load_multiplier,pv_multiplier\n");
        for h in 0..23 {
            short.push_str(&format!("1,{h},0.5,0.1\n"));
        }
        let err = read_history(short.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("day 1, hour 23"), "{err}");

        let bad = text.replacen("1,5,0.5,0.1", "1,5,0.5,-0.1", 1);
        let err = read_history(bad.as_bytes()).unwrap_err().to_string();
        assert!(err.contains("pv_multiplier") && err.contains("line 7"), "{err}");
    }

    #[test]
    fn scenario_csv_round_trip_and_subsample() {
        let set = generate_scenarios(&flat_history(2), 24, 0.1, 3, 11).unwrap();
        let mut buf = Vec::new();
        set.write_csv(&mut buf).unwrap();
        let back = ScenarioSet::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, set);
        let sub = set.subsample(5, 2).unwrap();
        assert_eq!(sub.len(), 5);
        assert!((sub.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(sub, set.subsample(5, 2).unwrap());
        assert!(set.subsample(25, 0).is_err());
    }
}
