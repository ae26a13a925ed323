//! Shared domain types and the spacing algebra.
//!
//! Positions are front-bumper coordinates measured from the control-zone
//! entry line, so the CAV sits at `p = 0` at `t_c` and the zone ends at
//! `p = control_length`. Vehicle 0 (the first entry) is the lead CAV; every
//! following entry is an HDV.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::FormationTolerances;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleKind {
    Cav,
    Hdv,
}

impl VehicleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            VehicleKind::Cav => "cav",
            VehicleKind::Hdv => "hdv",
        }
    }
}

/// Position, speed and acceleration of one vehicle at one instant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
}

/// Car-following parameters of one vehicle.
///
/// `rho` is the desired time gap, `alpha` the driver sensitivity, `eta` the
/// perception delay and `length` the vehicle length `l_c`. The CAV carries the
/// same fields; they govern it once it leaves the control zone.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleParams {
    pub kind: VehicleKind,
    pub rho: f64,
    pub alpha: f64,
    pub eta: f64,
    pub length: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoadConfig {
    pub buffer_length: f64,
    pub control_length: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub u_min: f64,
    pub u_max: f64,
    /// Standstill distance.
    pub s0: f64,
}

impl RoadConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Invalid(msg.to_string()));
        if !(self.buffer_length >= 0.0) {
            return bad("buffer_length must be >= 0");
        }
        if !(self.control_length > 0.0) {
            return bad("control_length must be > 0");
        }
        if !(self.v_min > 0.0 && self.v_min < self.v_max) {
            return bad("speed bounds must satisfy 0 < v_min < v_max");
        }
        if !(self.u_min < 0.0 && self.u_max > 0.0) {
            return bad("control bounds must satisfy u_min < 0 < u_max");
        }
        if !(self.s0 > 0.0) {
            return bad("standstill distance s0 must be > 0");
        }
        Ok(())
    }
}

/// One fleet member as declared in a scenario: parameters plus its position
/// at `t_c`. Speeds are not configurable; the steady state fixes them at
/// `v_max`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub params: VehicleParams,
    pub position: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub road: RoadConfig,
    pub vehicles: Vec<Vehicle>,
    /// Control-zone entry time.
    pub t_c: f64,
    /// Response time of the car-following law, given a priori.
    pub tau_r: f64,
    /// Known upper bound on the HDV perception delays.
    pub eta_bar: f64,
    /// Integration step.
    pub dt: f64,
    /// Scale (1/m) applied to the platoon-gap argument of the equilibrium
    /// speed function.
    pub gap_scale: f64,
    /// Desired platoon formation time, if the scenario fixes one.
    pub t_p: Option<f64>,
    /// Simulation end time, if the scenario fixes one.
    pub horizon: Option<f64>,
    /// `v_max - v_min` above this value triggers a local-stability warning.
    pub speed_fluctuation_limit: f64,
    pub tolerances: FormationTolerances,
}

pub const DEFAULT_SPEED_FLUCTUATION_LIMIT: f64 = 20.0;

impl ScenarioConfig {
    pub fn len(&self) -> usize {
        self.vehicles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vehicles.is_empty()
    }

    pub fn params(&self, i: usize) -> &VehicleParams {
        &self.vehicles[i].params
    }

    /// Sum of the time gaps of the intermediate HDVs (all but the last).
    pub fn rho_sum(&self) -> f64 {
        let n = self.len();
        if n < 3 {
            return 0.0;
        }
        self.vehicles[1..n - 1].iter().map(|v| v.params.rho).sum()
    }

    pub fn tau_s(&self) -> f64 {
        crate::controller::stabilization_duration(self.eta_bar, self.tau_r)
    }

    /// Checks every structural invariant, including the requirement that the
    /// fleet is not already platooned at `t_c`.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        make_steady_state_fleet(self).map(|_| ())
    }

    fn validate_structure(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Invalid(msg));
        self.road.validate()?;
        if self.len() < 2 {
            return bad(format!("need at least 2 vehicles, got {}", self.len()));
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            let p = &v.params;
            let expected = if i == 0 {
                VehicleKind::Cav
            } else {
                VehicleKind::Hdv
            };
            if p.kind != expected {
                return bad(format!(
                    "vehicle {} must be {} (lead CAV followed by HDVs)",
                    i + 1,
                    expected.as_str()
                ));
            }
            if !(p.rho > 0.0 && p.alpha > 0.0 && p.eta >= 0.0 && p.length > 0.0) {
                return bad(format!(
                    "vehicle {}: need rho > 0, alpha > 0, eta >= 0, length > 0",
                    i + 1
                ));
            }
            if p.eta > self.eta_bar {
                return bad(format!(
                    "vehicle {}: eta = {} exceeds eta_bar = {}",
                    i + 1,
                    p.eta,
                    self.eta_bar
                ));
            }
            if !v.position.is_finite() {
                return bad(format!("vehicle {}: position must be finite", i + 1));
            }
        }
        if !(self.dt > 0.0) {
            return bad("dt must be > 0".into());
        }
        if !(self.tau_r > 0.0) {
            return bad("tau_r must be > 0".into());
        }
        if !(self.eta_bar >= 0.0) {
            return bad("eta_bar must be >= 0".into());
        }
        if !(self.gap_scale > 0.0) {
            return bad("gap_scale must be > 0".into());
        }
        if !self.t_c.is_finite() {
            return bad("t_c must be finite".into());
        }
        self.tolerances.validate()?;
        if let Some(t_p) = self.t_p {
            if !(t_p > self.t_c) {
                return bad(format!("t_p = {t_p} must be after t_c = {}", self.t_c));
            }
        }
        if let Some(h) = self.horizon {
            if !(h > self.t_c) {
                return bad(format!("horizon = {h} must be after t_c = {}", self.t_c));
            }
        }
        Ok(())
    }

    /// Non-fatal observations about the scenario.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(first) = self.vehicles.first() {
            let l = first.params.length;
            if self.vehicles.iter().any(|v| v.params.length != l) {
                out.push("heterogeneous vehicle lengths; the gap algebra assumes a common l_c".into());
            }
        }
        let spread = self.road.v_max - self.road.v_min;
        if spread > self.speed_fluctuation_limit {
            out.push(format!(
                "v_max - v_min = {spread} m/s exceeds the speed fluctuation limit {} m/s; local platoon stability is not guaranteed",
                self.speed_fluctuation_limit
            ));
        }
        out
    }
}

/// State of the whole fleet at one instant, index-aligned with
/// [`ScenarioConfig::vehicles`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FleetSnapshot {
    pub time: f64,
    pub states: Vec<VehicleState>,
}

/// Speed-dependent following distance `rho * v + s0`.
pub fn dynamic_spacing(speed: f64, params: &VehicleParams, s0: f64) -> f64 {
    params.rho * speed + s0
}

/// Bumper-to-bumper spacing minus dynamic spacing. Positive means the
/// follower is decoupled from its predecessor, non-positive means coupled.
pub fn platoon_gap(
    pred: &VehicleState,
    ego: &VehicleState,
    params: &VehicleParams,
    s0: f64,
) -> Result<f64> {
    if !(pred.position > ego.position) {
        return Err(Error::Invalid(format!(
            "predecessor at {} m is not ahead of follower at {} m",
            pred.position, ego.position
        )));
    }
    Ok(raw_gap(pred, ego, params, s0))
}

#[inline]
pub(crate) fn raw_gap(pred: &VehicleState, ego: &VehicleState, params: &VehicleParams, s0: f64) -> f64 {
    pred.position - ego.position - dynamic_spacing(ego.speed, params, s0) - params.length
}

/// Lead-to-tail distance minus all required spacings and vehicle lengths.
pub fn cumulative_gap(snapshot: &FleetSnapshot, config: &ScenarioConfig) -> Result<f64> {
    let n = snapshot.states.len();
    if n < 2 || config.len() != n {
        return Err(Error::Invalid(format!(
            "cumulative gap needs at least 2 vehicles matching the config (snapshot {n}, config {})",
            config.len()
        )));
    }
    let s0 = config.road.s0;
    let required: f64 = snapshot.states[1..]
        .iter()
        .zip(&config.vehicles[1..])
        .map(|(st, v)| dynamic_spacing(st.speed, &v.params, s0) + v.params.length)
        .sum();
    Ok(snapshot.states[0].position - snapshot.states[n - 1].position - required)
}

/// Builds the fleet state at `t_c`: every vehicle cruising at `v_max` with
/// zero acceleration at its configured position.
pub fn make_steady_state_fleet(config: &ScenarioConfig) -> Result<FleetSnapshot> {
    config.validate_structure()?;
    let v_max = config.road.v_max;
    let states: Vec<VehicleState> = config
        .vehicles
        .iter()
        .map(|v| VehicleState {
            position: v.position,
            speed: v_max,
            accel: 0.0,
        })
        .collect();

    for i in 1..states.len() {
        let bumper = states[i - 1].position - states[i].position - config.params(i).length;
        if !(bumper > 0.0) {
            return Err(Error::Ordering {
                front: i,
                back: i + 1,
                gap: bumper,
            });
        }
    }
    let any_open = (1..states.len())
        .any(|i| raw_gap(&states[i - 1], &states[i], config.params(i), config.road.s0) > 0.0);
    if !any_open {
        return Err(Error::AlreadyPlatooned);
    }
    Ok(FleetSnapshot {
        time: config.t_c,
        states,
    })
}


#[cfg(test)]
mod tests {
    use super::fixtures::*;
    use super::*;
    use proptest::prelude::*;

    fn at(position: f64, speed: f64) -> VehicleState {
        VehicleState {
            position,
            speed,
            accel: 0.0,
        }
    }

    #[test]
    fn dynamic_spacing_examples() {
        assert_eq!(dynamic_spacing(10.0, &hdv(1.0), 2.0), 12.0);
        assert_eq!(dynamic_spacing(0.0, &hdv(1.5), 2.0), 2.0);
        assert_eq!(dynamic_spacing(30.0, &hdv(0.5), 2.0), 17.0);
    }

    #[test]
    fn platoon_gap_examples() {
        let p = hdv(1.0);
        assert_eq!(platoon_gap(&at(100.0, 30.0), &at(70.0, 10.0), &p, 2.0).unwrap(), 13.0);
        assert_eq!(platoon_gap(&at(80.0, 30.0), &at(70.0, 10.0), &p, 2.0).unwrap(), -7.0);
        // exactly s + l_c apart
        assert_eq!(platoon_gap(&at(87.0, 30.0), &at(70.0, 10.0), &p, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn platoon_gap_rejects_misordered_pair() {
        let p = hdv(1.0);
        assert!(matches!(
            platoon_gap(&at(70.0, 30.0), &at(70.0, 10.0), &p, 2.0),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn cumulative_gap_examples() {
        let cfg = scenario(&[200.0, 150.0, 100.0]);
        let snap = FleetSnapshot {
            time: 0.0,
            states: vec![at(200.0, 30.0), at(150.0, 30.0), at(100.0, 30.0)],
        };
        assert_eq!(cumulative_gap(&snap, &cfg).unwrap(), 26.0);

        // N = 2 reduces to the single platoon gap.
        let cfg2 = scenario(&[100.0, 40.0]);
        let snap2 = FleetSnapshot {
            time: 0.0,
            states: vec![at(100.0, 30.0), at(40.0, 30.0)],
        };
        let g = platoon_gap(&snap2.states[0], &snap2.states[1], cfg2.params(1), 2.0).unwrap();
        assert_eq!(cumulative_gap(&snap2, &cfg2).unwrap(), g);

        // every pair exactly at s + l_c
        let snap3 = FleetSnapshot {
            time: 0.0,
            states: vec![at(74.0, 30.0), at(37.0, 30.0), at(0.0, 30.0)],
        };
        assert_eq!(cumulative_gap(&snap3, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn cumulative_gap_needs_two_vehicles() {
        let cfg = scenario(&[0.0]);
        let snap = FleetSnapshot {
            time: 0.0,
            states: vec![at(0.0, 30.0)],
        };
        assert!(cumulative_gap(&snap, &cfg).is_err());
    }

    #[test]
    fn steady_state_fleet_runs_at_v_max() {
        let cfg = scenario(&[0.0, -207.0, -414.0]);
        let snap = make_steady_state_fleet(&cfg).unwrap();
        assert!(snap.states.iter().all(|s| s.speed == 30.0 && s.accel == 0.0));
        assert_eq!(snap.time, 0.0);
    }

    #[test]
    fn steady_state_fleet_rejects_platooned_fleet() {
        // 37 m apart = s + l_c at v_max, so every gap is exactly zero
        let cfg = scenario(&[0.0, -37.0, -74.0]);
        assert!(matches!(make_steady_state_fleet(&cfg), Err(Error::AlreadyPlatooned)));
    }

    #[test]
    fn steady_state_fleet_rejects_overlap() {
        let cfg = scenario(&[0.0, -3.0, -100.0]);
        assert!(matches!(
            make_steady_state_fleet(&cfg),
            Err(Error::Ordering { front: 1, back: 2, .. })
        ));
    }

    #[test]
    fn validation_catches_bad_fields() {
        let mut cfg = scenario(&[0.0, -207.0]);
        cfg.road.v_min = 40.0;
        assert!(cfg.validate().is_err());

        let mut cfg = scenario(&[0.0, -207.0]);
        cfg.vehicles[1].params.eta = 1.5;
        assert!(cfg.validate().is_err());

        let mut cfg = scenario(&[0.0, -207.0]);
        cfg.vehicles[1].params.kind = VehicleKind::Cav;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn warnings_flag_heterogeneous_lengths_and_wide_speed_band() {
        let mut cfg = scenario(&[0.0, -207.0]);
        assert!(cfg.warnings().is_empty());
        cfg.vehicles[1].params.length = 6.0;
        cfg.road.v_min = 5.0;
        assert_eq!(cfg.warnings().len(), 2);
    }

    proptest! {
        #[test]
        fn gap_strictly_decreasing_in_speed(
            v in 0.0..40.0f64, dv in 0.01..5.0f64, rho in 0.1..3.0f64, dp in 10.0..300.0f64,
        ) {
            let p = hdv(rho);
            let a = platoon_gap(&at(dp, 0.0), &at(0.0, v), &p, 2.0).unwrap();
            let b = platoon_gap(&at(dp, 0.0), &at(0.0, v + dv), &p, 2.0).unwrap();
            prop_assert!(b < a);
        }

        #[test]
        fn cumulative_gap_telescopes_at_uniform_speed(
            v in 0.0..40.0f64,
            gaps in proptest::collection::vec(10.0..200.0f64, 1..6),
        ) {
            let mut positions = vec![0.0];
            for g in &gaps {
                let last = *positions.last().unwrap();
                positions.push(last - g);
            }
            let cfg = scenario(&positions);
            let states: Vec<_> = positions.iter().map(|&p| at(p, v)).collect();
            let snap = FleetSnapshot { time: 0.0, states };
            let sum: f64 = (1..snap.states.len())
                .map(|i| platoon_gap(&snap.states[i - 1], &snap.states[i], cfg.params(i), 2.0).unwrap())
                .sum();
            let total = cumulative_gap(&snap, &cfg).unwrap();
            prop_assert!((sum - total).abs() <= 1e-9 * (1.0 + total.abs()));
        }
    }
}
