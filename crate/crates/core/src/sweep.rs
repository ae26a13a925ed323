//! Robustness sweeps over the transition duration and the HDV parameters.
//!
//! For the `Eta`, `Rho` and `Alpha` axes the plant's HDVs take the swept
//! value (plus optional uniform jitter) while the plan is still built from
//! `eta_bar` and the scenario's `t_p`. `Rho` is the exception the
//! coordinator knows about: the plan sees the true time gaps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::controller::{feasible_range, plan};
use crate::error::{Bound, Error, Result};
use crate::metrics::{detect_formation, FormationOutcome};
use crate::model::{make_steady_state_fleet, ScenarioConfig, Vehicle};
use crate::sim::{default_horizon, run};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    TauT,
    Eta,
    Rho,
    Alpha,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::TauT => "tau",
            Axis::Eta => "eta",
            Axis::Rho => "rho",
            Axis::Alpha => "alpha",
        }
    }

    /// Admissible range of the swept parameter; `None` for `TauT`, whose
    /// range is each fleet's feasible interval.
    pub fn bounds(self) -> Option<(f64, f64)> {
        match self {
            Axis::TauT => None,
            Axis::Eta => Some((0.0, 1.0)),
            Axis::Rho => Some((0.5, 1.5)),
            Axis::Alpha => Some((1.0, 2.0)),
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" | "tau_t" => Ok(Axis::TauT),
            "eta" => Ok(Axis::Eta),
            "rho" => Ok(Axis::Rho),
            "alpha" => Ok(Axis::Alpha),
            _ => Err(Error::Invalid(format!("unknown sweep axis {s:?}"))),
        }
    }
}

pub const DEFAULT_SAMPLES: usize = 50;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    pub axis: Axis,
    /// Defaults to the axis bounds (or the feasible interval for `TauT`).
    pub range: Option<(f64, f64)>,
    pub samples: usize,
    pub fleet_sizes: Vec<usize>,
    pub seed: u64,
    /// Half-width of the per-HDV uniform draw around the axis value.
    pub jitter: f64,
}

impl SweepSpec {
    pub fn new(base: ScenarioConfig, axis: Axis) -> Self {
        let n = base.len();
        SweepSpec {
            base,
            axis,
            range: None,
            samples: DEFAULT_SAMPLES,
            fleet_sizes: vec![n],
            seed: 0,
            jitter: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.base.t_p.is_none() {
            return Err(Error::Invalid("sweeps need a scenario with t_p".into()));
        }
        if self.samples == 0 {
            return Err(Error::Invalid("samples must be positive".into()));
        }
        if self.fleet_sizes.is_empty() || self.fleet_sizes.iter().any(|&n| n < 2) {
            return Err(Error::Invalid("fleet sizes must be at least 2".into()));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::Invalid("jitter must be >= 0".into()));
        }
        if let Some((lo, hi)) = self.range {
            if !(lo <= hi) {
                return Err(Error::Invalid(format!("empty range [{lo}, {hi}]")));
            }
            if let Some((blo, bhi)) = self.axis.bounds() {
                if lo < blo || hi > bhi {
                    return Err(Error::Invalid(format!(
                        "{} range [{lo}, {hi}] leaves [{blo}, {bhi}]",
                        self.axis.as_str()
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One point of a robustness curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub axis: Axis,
    pub axis_value: f64,
    pub n: usize,
    pub u_p: Option<f64>,
    pub feasible: bool,
    pub binding: Option<Bound>,
    pub t_ap: Option<f64>,
    pub deviation_pct: Option<f64>,
    pub in_zone: Option<bool>,
    /// Why the point produced no formation time.
    pub note: Option<String>,
}

fn linspace(lo: f64, hi: f64, samples: usize) -> Vec<f64> {
    if samples == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..samples)
        .map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64)
        .collect()
}

/// Fleet of `n` vehicles comparable to `base`: HDV parameters repeat
/// cyclically and the platoon gaps are equal, sized so the nominal plan at
/// the base `t_p` brakes to the same `v_eq` as the base plan.
pub fn fleet_for_size(base: &ScenarioConfig, n: usize) -> Result<ScenarioConfig> {
    if n == base.len() {
        return Ok(base.clone());
    }
    if n < 2 {
        return Err(Error::Invalid(format!("fleet size {n} < 2")));
    }
    let t_p = base
        .t_p
        .ok_or_else(|| Error::Invalid("fleet resizing needs a scenario with t_p".into()))?;
    let base_plan = plan(base, &make_steady_state_fleet(base)?, t_p)?;

    let hdvs: Vec<Vehicle> = base.vehicles[1..].to_vec();
    let mut cfg = base.clone();
    cfg.vehicles.truncate(1);
    cfg.vehicles.extend((0..n - 1).map(|j| hdvs[j % hdvs.len()]));
    let tau = base_plan.tau_t;
    let delta = (base.road.v_max - base_plan.v_eq) * (tau - 2.0 * cfg.rho_sum()) / 2.0;
    place_with_gaps(&mut cfg, &vec![delta / (n - 1) as f64; n - 1]);
    Ok(cfg)
}

/// Platoon gaps of the steady state at `v_max`, one per HDV.
pub fn initial_gaps(cfg: &ScenarioConfig) -> Vec<f64> {
    let v = cfg.road.v_max;
    (1..cfg.len())
        .map(|i| {
            let p = &cfg.vehicles[i].params;
            cfg.vehicles[i - 1].position - cfg.vehicles[i].position - (p.rho * v + cfg.road.s0) - p.length
        })
        .collect()
}

/// Repositions the HDVs behind the CAV so the steady state at `v_max` has
/// the given platoon gaps.
pub fn place_with_gaps(cfg: &mut ScenarioConfig, gaps: &[f64]) {
    let v = cfg.road.v_max;
    let s0 = cfg.road.s0;
    for i in 1..cfg.vehicles.len() {
        let p = cfg.vehicles[i].params;
        cfg.vehicles[i].position = cfg.vehicles[i - 1].position - (gaps[i - 1] + p.rho * v + s0 + p.length);
    }
}

struct Item {
    n: usize,
    value: f64,
    stream: u64,
}

fn items(spec: &SweepSpec, fleets: &[(usize, Result<ScenarioConfig>)]) -> Vec<Item> {
    let mut out = Vec::new();
    for (n, fleet) in fleets {
        let range = match (spec.axis, spec.range) {
            (Axis::TauT, r) => {
                let iv = fleet
                    .as_ref()
                    .ok()
                    .and_then(|cfg| make_steady_state_fleet(cfg).ok().map(|s| (cfg, s)))
                    .and_then(|(cfg, s)| feasible_range(cfg, &s).ok());
                match (iv, r) {
                    (Some(iv), Some((lo, hi))) => Some((lo.max(iv.lo), hi.min(iv.hi))),
                    (Some(iv), None) => Some((iv.lo, iv.hi)),
                    (None, r) => r,
                }
            }
            (axis, r) => r.or(axis.bounds()),
        };
        let values = match range {
            Some((lo, hi)) if lo <= hi => linspace(lo, hi, spec.samples),
            _ => vec![f64::NAN],
        };
        for value in values {
            out.push(Item {
                n: *n,
                value,
                stream: out.len() as u64,
            });
        }
    }
    out
}

impl SweepSpec {
    /// Scenario and target formation time for one sweep point. `stream`
    /// selects the random stream used for jitter.
    pub fn scenario_at(&self, fleet: &ScenarioConfig, value: f64, stream: u64) -> (ScenarioConfig, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        let cfg = perturbed(self, fleet, value, &mut rng);
        let t_p = match self.axis {
            Axis::TauT => cfg.t_c + value + cfg.tau_s(),
            _ => cfg.t_p.expect("sweep scenarios carry t_p"),
        };
        (cfg, t_p)
    }
}

fn perturbed(spec: &SweepSpec, fleet: &ScenarioConfig, value: f64, rng: &mut ChaCha8Rng) -> ScenarioConfig {
    let mut cfg = fleet.clone();
    let gaps = initial_gaps(&cfg);
    let (lo, hi) = spec.axis.bounds().unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    for v in cfg.vehicles[1..].iter_mut() {
        let x = if spec.jitter > 0.0 {
            rng.gen_range(value - spec.jitter..=value + spec.jitter).clamp(lo, hi)
        } else {
            value
        };
        match spec.axis {
            Axis::Eta => v.params.eta = x.min(cfg.eta_bar),
            Axis::Rho => v.params.rho = x,
            Axis::Alpha => v.params.alpha = x,
            Axis::TauT => {}
        }
    }
    if spec.axis == Axis::Rho {
        place_with_gaps(&mut cfg, &gaps);
    }
    cfg
}

fn evaluate(spec: &SweepSpec, fleet: &Result<ScenarioConfig>, item: &Item) -> SweepRecord {
    let mut rec = SweepRecord {
        axis: spec.axis,
        axis_value: item.value,
        n: item.n,
        u_p: None,
        feasible: false,
        binding: None,
        t_ap: None,
        deviation_pct: None,
        in_zone: None,
        note: None,
    };
    let fleet = match fleet {
        Ok(f) => f,
        Err(e) => {
            rec.note = Some(e.to_string());
            return rec;
        }
    };
    if item.value.is_nan() {
        rec.note = Some("no admissible axis values".into());
        return rec;
    }
    let (cfg, t_p) = spec.scenario_at(fleet, item.value, item.stream);

    let result = make_steady_state_fleet(&cfg).and_then(|snap| plan(&cfg, &snap, t_p));
    let p = match result {
        Ok(p) => p,
        Err(e) => {
            if let Error::Infeasible { bound, .. } = e {
                rec.binding = Some(bound);
            }
            rec.note = Some(e.to_string());
            return rec;
        }
    };
    rec.feasible = true;
    rec.u_p = Some(p.u_p);
    match run(&cfg, &p, default_horizon(&cfg, &p)) {
        Ok(traj) => match detect_formation(&traj, &cfg.tolerances) {
            FormationOutcome::Formed(r) => {
                rec.t_ap = Some(r.t_ap);
                rec.deviation_pct = Some(r.deviation_pct);
                rec.in_zone = Some(r.in_zone);
            }
            FormationOutcome::NotReached(d) => {
                rec.note = Some(format!(
                    "not reached: {:?} failed for {:.2} s",
                    d.condition, d.longest_failure
                ));
            }
        },
        Err(e) => rec.note = Some(e.to_string()),
    }
    rec
}

/// Runs every (fleet size, axis value) point. Records come back in the same
/// order whether or not `parallel` is set.
pub fn run_sweep_with(spec: &SweepSpec, parallel: bool) -> Result<Vec<SweepRecord>> {
    spec.validate()?;
    let fleets: Vec<(usize, Result<ScenarioConfig>)> = spec
        .fleet_sizes
        .iter()
        .map(|&n| (n, fleet_for_size(&spec.base, n)))
        .collect();
    let work = items(spec, &fleets);
    let fleet_of = |n: usize| &fleets.iter().find(|(m, _)| *m == n).unwrap().1;
    let records = if parallel {
        work.par_iter().map(|it| evaluate(spec, fleet_of(it.n), it)).collect()
    } else {
        work.iter().map(|it| evaluate(spec, fleet_of(it.n), it)).collect()
    };
    Ok(records)
}

pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<SweepRecord>> {
    run_sweep_with(spec, true)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub axis: Axis,
    pub records: usize,
    pub formed: usize,
    /// Share of records that produced a formation time.
    pub feasible_fraction: f64,
    pub min_deviation: Option<f64>,
    pub max_deviation: Option<f64>,
    pub mean_deviation: Option<f64>,
    /// Index of the record with the largest absolute deviation.
    pub worst: Option<usize>,
}

pub fn aggregate(records: &[SweepRecord]) -> Result<Vec<SweepSummary>> {
    if records.is_empty() {
        return Err(Error::Empty);
    }
    let mut axes: Vec<Axis> = Vec::new();
    for r in records {
        if !axes.contains(&r.axis) {
            axes.push(r.axis);
        }
    }
    Ok(axes
        .into_iter()
        .map(|axis| {
            let devs: Vec<(usize, f64)> = records
                .iter()
                .enumerate()
                .filter(|(_, r)| r.axis == axis)
                .filter_map(|(i, r)| r.deviation_pct.map(|d| (i, d)))
                .collect();
            let total = records.iter().filter(|r| r.axis == axis).count();
            let values = devs.iter().map(|&(_, d)| d);
            let worst = devs
                .iter()
                .copied()
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, b)) if b.abs() >= d.abs() => best,
                    _ => Some((i, d)),
                });
            SweepSummary {
                axis,
                records: total,
                formed: devs.len(),
                feasible_fraction: devs.len() as f64 / total as f64,
                min_deviation: values.clone().reduce(f64::min),
                max_deviation: values.clone().reduce(f64::max),
                mean_deviation: (!devs.is_empty()).then(|| values.sum::<f64>() / devs.len() as f64),
                worst: worst.map(|(i, _)| i),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scenario;

    fn base() -> ScenarioConfig {
        let mut cfg = scenario(&[0.0, -207.0, -414.0]);
        cfg.gap_scale = 0.04;
        cfg.t_p = Some(47.2);
        cfg
    }

    fn record(value: f64, dev: Option<f64>) -> SweepRecord {
        SweepRecord {
            axis: Axis::Eta,
            axis_value: value,
            n: 3,
            u_p: Some(-0.4),
            feasible: true,
            binding: None,
            t_ap: dev.map(|d| 47.2 * (1.0 + d / 100.0)),
            deviation_pct: dev,
            in_zone: dev.map(|_| true),
            note: None,
        }
    }

    #[test]
    fn fleet_resizing_keeps_v_eq() {
        let b = base();
        let base_plan = plan(&b, &make_steady_state_fleet(&b).unwrap(), 47.2).unwrap();
        for n in [2, 4, 5] {
            let cfg = fleet_for_size(&b, n).unwrap();
            assert_eq!(cfg.len(), n);
            let p = plan(&cfg, &make_steady_state_fleet(&cfg).unwrap(), 47.2).unwrap();
            assert!((p.v_eq - base_plan.v_eq).abs() < 1e-9, "n = {n}");
        }
        assert_eq!(fleet_for_size(&b, 3).unwrap(), b);
        let gaps = initial_gaps(&fleet_for_size(&b, 2).unwrap());
        assert!((gaps[0] - 356.9).abs() < 0.1, "{gaps:?}");
    }

    #[test]
    fn rho_perturbation_keeps_gaps() {
        let b = base();
        let mut spec = SweepSpec::new(b.clone(), Axis::Rho);
        spec.jitter = 0.2;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let cfg = perturbed(&spec, &b, 1.2, &mut rng);
        let g0 = initial_gaps(&b);
        let g1 = initial_gaps(&cfg);
        for (a, b) in g0.iter().zip(&g1) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(cfg.vehicles[1..].iter().all(|v| (1.0..=1.4).contains(&v.params.rho)));
    }

    #[test]
    fn aggregate_single_record() {
        let s = aggregate(&[record(0.5, Some(1.5))]).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].min_deviation, Some(1.5));
        assert_eq!(s[0].max_deviation, Some(1.5));
        assert_eq!(s[0].mean_deviation, Some(1.5));
        assert_eq!(s[0].feasible_fraction, 1.0);
        assert_eq!(s[0].worst, Some(0));
    }

    #[test]
    fn aggregate_counts_not_reached() {
        let recs = [record(0.1, Some(-2.0)), record(0.2, None), record(0.3, Some(1.0))];
        let s = &aggregate(&recs).unwrap()[0];
        assert_eq!(s.records, 3);
        assert_eq!(s.formed, 2);
        assert!((s.feasible_fraction - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(s.worst, Some(0));
        assert!(matches!(aggregate(&[]), Err(Error::Empty)));
    }

    #[test]
    fn spec_validation() {
        let mut spec = SweepSpec::new(base(), Axis::Eta);
        assert!(spec.validate().is_ok());
        spec.range = Some((0.0, 1.5));
        assert!(spec.validate().is_err());
        spec.range = None;
        spec.base.t_p = None;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn sweep_is_deterministic_and_order_stable() {
        let mut spec = SweepSpec::new(base(), Axis::Alpha);
        spec.samples = 3;
        spec.jitter = 0.1;
        spec.seed = 11;
        spec.fleet_sizes = vec![2, 3];
        let a = run_sweep_with(&spec, true).unwrap();
        let b = run_sweep_with(&spec, true).unwrap();
        let c = run_sweep_with(&spec, false).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a.len(), 6);
        assert!(a.iter().all(|r| r.deviation_pct.is_some() == r.t_ap.is_some()));
    }

    #[test]
    fn tau_axis_stays_in_feasible_interval() {
        let mut spec = SweepSpec::new(base(), Axis::TauT);
        spec.samples = 4;
        let recs = run_sweep(&spec).unwrap();
        assert_eq!(recs.len(), 4);
        assert!(recs.iter().all(|r| r.feasible), "{recs:?}");
    }
}
