//! Closed-form braking plan for the lead CAV.
//!
//! The CAV brakes at a constant `u_p < 0` from `t_c` until the last HDV's
//! platoon gap closes at `t_s = t_c + tau_t`, then holds its speed until it
//! leaves the control zone at `t_f`. The HDVs then need `tau_s` more seconds
//! to settle, so the platoon is planned to be formed at
//! `t_p = t_c + tau_t + tau_s`.
//!
//! For a single follower the gap closes when `2*delta + u_p*tau_t^2 = 0`.
//! With several followers, the intermediate HDVs track the braking CAV and
//! their dynamic spacings shrink with it, which gives
//! `2*Delta + u_p*tau_t^2 - 2*u_p*tau_t*C1 = 0` where `Delta` is the
//! cumulative gap and `C1` the sum of the intermediate time gaps.

use serde::{Deserialize, Serialize};

use crate::error::{Bound, Error, Result};
use crate::model::{cumulative_gap, raw_gap, FleetSnapshot, ScenarioConfig};

pub fn stabilization_duration(eta_bar: f64, tau_r: f64) -> f64 {
    eta_bar + tau_r
}

/// Braking level that closes a single platoon gap `delta2` in `tau_t`.
pub fn solve_up_two(delta2: f64, tau_t: f64) -> Result<f64> {
    if !(delta2 > 0.0) {
        return Err(Error::AlreadyPlatooned);
    }
    if !(tau_t > 0.0) {
        return Err(Error::NonPositiveDuration(tau_t));
    }
    Ok(-2.0 * delta2 / (tau_t * tau_t))
}

/// Braking level that closes the cumulative gap `delta` of a multi-HDV fleet
/// in `tau_t`, with `rho_sum` the time gaps of all but the last HDV.
pub fn solve_up_multi(delta: f64, tau_t: f64, rho_sum: f64) -> Result<f64> {
    if !(delta > 0.0) {
        return Err(Error::AlreadyPlatooned);
    }
    if !(tau_t > 0.0) {
        return Err(Error::NonPositiveDuration(tau_t));
    }
    if !(tau_t > 2.0 * rho_sum) {
        return Err(Error::TransitionTooShort {
            tau_t,
            min: 2.0 * rho_sum,
        });
    }
    Ok(-2.0 * delta / (tau_t * tau_t - 2.0 * tau_t * rho_sum))
}

/// Quantities the feasibility bounds depend on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityInputs {
    /// Platoon gap of the single follower, or the cumulative gap.
    pub gap: f64,
    /// CAV speed at `t_c`.
    pub v1_tc: f64,
    pub rho_sum: f64,
    /// Control-zone length still ahead of the CAV at `t_c`.
    pub control_length: f64,
    pub u_min: f64,
    pub v_min: f64,
    pub tau_s: f64,
}

impl FeasibilityInputs {
    fn check(&self) -> Result<()> {
        if !(self.gap > 0.0) {
            return Err(Error::AlreadyPlatooned);
        }
        if !(self.v1_tc > self.v_min) {
            return Err(Error::NoSpeedMargin {
                v1: self.v1_tc,
                v_min: self.v_min,
            });
        }
        if !(self.u_min < 0.0) {
            return Err(Error::Invalid("u_min must be negative".into()));
        }
        Ok(())
    }
}

/// Admissible transition durations `[lo, hi]`. The interval may be empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeasibleInterval {
    pub lo: f64,
    pub hi: f64,
    /// Which of the two lower-bound terms is the larger one.
    pub lo_bound: Bound,
}

impl FeasibleInterval {
    pub fn is_empty(&self) -> bool {
        self.lo > self.hi
    }

    pub fn contains(&self, tau_t: f64) -> bool {
        self.lo <= tau_t && tau_t <= self.hi
    }

    /// Names the violated bound when `tau_t` is outside the interval.
    pub fn check(&self, tau_t: f64) -> Result<()> {
        let bound = if tau_t < self.lo {
            self.lo_bound
        } else if tau_t > self.hi {
            Bound::ControlZone
        } else {
            return Ok(());
        };
        Err(Error::Infeasible {
            tau_t,
            lo: self.lo,
            hi: self.hi,
            bound,
        })
    }
}

fn lower(accel_term: f64, speed_term: f64) -> (f64, Bound) {
    if accel_term >= speed_term {
        (accel_term, Bound::AccelLimit)
    } else {
        (speed_term, Bound::SpeedFloor)
    }
}

fn upper(phi_a: f64, phi_b: f64) -> Result<f64> {
    let disc = phi_a * phi_a + 4.0 * phi_b;
    if disc < 0.0 {
        return Err(Error::NoUpperBound);
    }
    Ok((phi_a + disc.sqrt()) / 2.0)
}

/// Feasible transition durations for a CAV with one trailing HDV.
pub fn feasible_range_two(inputs: &FeasibilityInputs) -> Result<FeasibleInterval> {
    inputs.check()?;
    if inputs.rho_sum != 0.0 {
        return Err(Error::Invalid(
            "two-vehicle feasibility takes no intermediate time gaps".into(),
        ));
    }
    let FeasibilityInputs {
        gap: delta,
        v1_tc: v1,
        u_min,
        v_min,
        tau_s,
        ..
    } = *inputs;
    let (lo, lo_bound) = lower((-2.0 * delta / u_min).sqrt(), 2.0 * delta / (v1 - v_min));
    let zone_left = inputs.control_length - v1 * tau_s;
    let phi1 = (delta + zone_left) / v1;
    let phi2 = 2.0 * delta * tau_s / v1;
    Ok(FeasibleInterval {
        lo,
        hi: upper(phi1, phi2)?,
        lo_bound,
    })
}

/// Feasible transition durations for a CAV followed by several HDVs.
pub fn feasible_range_multi(inputs: &FeasibilityInputs) -> Result<FeasibleInterval> {
    inputs.check()?;
    let FeasibilityInputs {
        gap: delta,
        v1_tc: v1,
        rho_sum: c1,
        u_min,
        v_min,
        tau_s,
        ..
    } = *inputs;
    let (lo, lo_bound) = lower(
        c1 + (c1 * c1 - 2.0 * delta / u_min).sqrt(),
        2.0 * c1 + 2.0 * delta / (v1 - v_min),
    );
    let c2 = inputs.control_length - v1 * tau_s;
    let phi3 = (2.0 * c1 * v1 + delta + c2) / v1;
    let phi4 = (2.0 * delta * tau_s - 2.0 * c1 * c2) / v1;
    Ok(FeasibleInterval {
        lo,
        hi: upper(phi3, phi4)?,
        lo_bound,
    })
}

/// The CAV's piecewise-constant control schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlPlan {
    pub u_p: f64,
    pub t_c: f64,
    pub t_s: f64,
    /// Planned exit from the control zone.
    pub t_f: f64,
    pub tau_t: f64,
    pub tau_s: f64,
    pub feasible: FeasibleInterval,
    /// CAV speed after braking, `v1(t_c) + u_p * tau_t`.
    pub v_eq: f64,
}

impl ControlPlan {
    pub fn t_p(&self) -> f64 {
        self.t_c + self.tau_t + self.tau_s
    }
}

/// Derives the feasibility inputs (cumulative gap, zone left, ...) of a
/// fleet snapshot taken at `t_c`.
pub fn feasibility_inputs(config: &ScenarioConfig, snapshot: &FleetSnapshot) -> Result<FeasibilityInputs> {
    let delta = cumulative_gap(snapshot, config)?;
    let s0 = config.road.s0;
    let states = &snapshot.states;
    let any_open = (1..states.len()).any(|i| raw_gap(&states[i - 1], &states[i], config.params(i), s0) > 0.0);
    if !any_open {
        return Err(Error::AlreadyPlatooned);
    }
    if !(delta > 0.0) {
        return Err(Error::Invalid(format!(
            "cumulative gap {delta:.3} m is not positive although some follower is decoupled"
        )));
    }
    Ok(FeasibilityInputs {
        gap: delta,
        v1_tc: states[0].speed,
        rho_sum: config.rho_sum(),
        control_length: config.road.control_length - states[0].position,
        u_min: config.road.u_min,
        v_min: config.road.v_min,
        tau_s: config.tau_s(),
    })
}

pub fn feasible_range(config: &ScenarioConfig, snapshot: &FleetSnapshot) -> Result<FeasibleInterval> {
    let inputs = feasibility_inputs(config, snapshot)?;
    if snapshot.states.len() == 2 {
        feasible_range_two(&inputs)
    } else {
        feasible_range_multi(&inputs)
    }
}

/// Plans the braking maneuver that forms the platoon at `t_p`.
pub fn plan(config: &ScenarioConfig, snapshot: &FleetSnapshot, t_p: f64) -> Result<ControlPlan> {
    let tau_s = config.tau_s();
    let t_c = snapshot.time;
    let tau_t = t_p - t_c - tau_s;
    if !(tau_t > 0.0) {
        return Err(Error::NonPositiveDuration(tau_t));
    }
    let inputs = feasibility_inputs(config, snapshot)?;
    let two = snapshot.states.len() == 2;
    let feasible = if two {
        feasible_range_two(&inputs)?
    } else {
        feasible_range_multi(&inputs)?
    };
    feasible.check(tau_t)?;
    let u_p = if two {
        solve_up_two(inputs.gap, tau_t)?
    } else {
        solve_up_multi(inputs.gap, tau_t, inputs.rho_sum)?
    };

    let lead = &snapshot.states[0];
    let v_eq = lead.speed + u_p * tau_t;
    let p_ts = lead.position + lead.speed * tau_t + 0.5 * u_p * tau_t * tau_t;
    let t_s = t_c + tau_t;
    let t_f = t_s + (config.road.control_length - p_ts) / v_eq;
    Ok(ControlPlan {
        u_p,
        t_c,
        t_s,
        t_f,
        tau_t,
        tau_s,
        feasible,
        v_eq,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ControlCommand {
    Accel(f64),
    /// Past `t_f`: the CAV drives by the car-following law with no
    /// predecessor.
    HandOff,
}

pub fn control_at(plan: &ControlPlan, t: f64) -> Result<ControlCommand> {
    if t < plan.t_c {
        return Err(Error::BeforeControl { t, t_c: plan.t_c });
    }
    Ok(if t <= plan.t_s {
        ControlCommand::Accel(plan.u_p)
    } else if t <= plan.t_f {
        ControlCommand::Accel(0.0)
    } else {
        ControlCommand::HandOff
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::fixtures::scenario;
    use crate::model::make_steady_state_fleet;
    use proptest::prelude::*;

    fn inputs(gap: f64, rho_sum: f64) -> FeasibilityInputs {
        FeasibilityInputs {
            gap,
            v1_tc: 30.0,
            rho_sum,
            control_length: 1000.0,
            u_min: -3.0,
            v_min: 10.0,
            tau_s: 5.0,
        }
    }

    #[test]
    fn stabilization_duration_examples() {
        assert_eq!(stabilization_duration(1.0, 4.0), 5.0);
        assert_eq!(stabilization_duration(0.0, 4.0), 4.0);
        assert_eq!(stabilization_duration(0.5, 2.5), 3.0);
    }

    #[test]
    fn solve_up_two_examples() {
        assert_eq!(solve_up_two(50.0, 10.0).unwrap(), -1.0);
        assert!((solve_up_two(45.0, 30.0).unwrap() + 0.1).abs() < 1e-15);
        assert!(matches!(solve_up_two(0.0, 10.0), Err(Error::AlreadyPlatooned)));
        assert!(matches!(solve_up_two(10.0, 0.0), Err(Error::NonPositiveDuration(_))));
    }

    #[test]
    fn solve_up_multi_examples() {
        let u = solve_up_multi(50.0, 12.0, 1.0).unwrap();
        assert!((u + 100.0 / 120.0).abs() < 1e-15);
        assert!(matches!(
            solve_up_multi(50.0, 2.0, 1.0),
            Err(Error::TransitionTooShort { .. })
        ));
        assert!(solve_up_multi(-1.0, 12.0, 1.0).is_err());
    }

    #[test]
    fn feasible_range_two_example() {
        let iv = feasible_range_two(&inputs(50.0, 0.0)).unwrap();
        assert!((iv.lo - (100.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((iv.lo - 5.7735).abs() < 1e-4);
        assert_eq!(iv.lo_bound, Bound::AccelLimit);
        let phi2 = 500.0 / 30.0;
        let hi = (30.0 + (900.0f64 + 4.0 * phi2).sqrt()) / 2.0;
        assert!((iv.hi - hi).abs() < 1e-12);
        assert!((iv.hi - 30.546).abs() < 1e-3);
    }

    #[test]
    fn feasible_range_two_vanishing_gap() {
        let iv = feasible_range_two(&inputs(1e-9, 0.0)).unwrap();
        assert!(iv.lo < 1e-4);
    }

    #[test]
    fn feasible_range_two_empty_for_short_zone() {
        let mut inp = inputs(50.0, 0.0);
        inp.control_length = 100.0;
        inp.tau_s = 10.0;
        let iv = feasible_range_two(&inp).unwrap();
        assert!(iv.is_empty());
    }

    #[test]
    fn feasible_range_multi_example() {
        let iv = feasible_range_multi(&inputs(50.0, 1.0)).unwrap();
        assert!((iv.lo - 7.0).abs() < 1e-12);
        assert_eq!(iv.lo_bound, Bound::SpeedFloor);
        assert!((iv.hi - (32.0 + 864f64.sqrt()) / 2.0).abs() < 1e-12);
        assert!((iv.hi - 30.697).abs() < 1e-3);
        let accel_term = 1.0 + (1.0f64 + 100.0 / 3.0).sqrt();
        assert!((accel_term - 6.8595).abs() < 1e-4);
    }

    #[test]
    fn feasible_range_errors() {
        let mut inp = inputs(50.0, 1.0);
        inp.v1_tc = 10.0;
        assert!(matches!(feasible_range_multi(&inp), Err(Error::NoSpeedMargin { .. })));
        assert!(feasible_range_two(&inputs(50.0, 1.0)).is_err());
    }

    #[test]
    fn accel_branch_lower_bound_gives_u_min() {
        let c1 = 1.0;
        let delta = 50.0;
        let tau = c1 + (c1 * c1 - 2.0 * delta / -3.0f64).sqrt();
        let u = solve_up_multi(delta, tau, c1).unwrap();
        assert!((u + 3.0).abs() < 1e-12);
    }

    fn three_vehicle_fleet() -> ScenarioConfig {
        let mut cfg = scenario(&[0.0, -207.0, -414.0]);
        cfg.gap_scale = 0.04;
        cfg
    }

    #[test]
    fn plan_for_three_vehicle_fleet() {
        let cfg = three_vehicle_fleet();
        let snap = make_steady_state_fleet(&cfg).unwrap();
        let plan = plan(&cfg, &snap, 47.2).unwrap();
        assert!((plan.tau_t - 42.2).abs() < 1e-12);
        assert_eq!(plan.tau_s, 5.0);
        assert!(plan.feasible.contains(42.2));
        let expected = solve_up_multi(340.0, plan.tau_t, 1.0).unwrap();
        assert_eq!(plan.u_p, expected);
        assert!((plan.t_p() - 47.2).abs() < 1e-12);
        assert!(plan.t_f > plan.t_s);
    }

    #[test]
    fn plan_rejects_bad_durations() {
        let cfg = three_vehicle_fleet();
        let snap = make_steady_state_fleet(&cfg).unwrap();
        assert!(matches!(plan(&cfg, &snap, 5.0), Err(Error::NonPositiveDuration(_))));
        assert!(matches!(plan(&cfg, &snap, 3.0), Err(Error::NonPositiveDuration(_))));
        match plan(&cfg, &snap, 30.0) {
            Err(Error::Infeasible { bound, .. }) => assert_eq!(bound, Bound::SpeedFloor),
            other => panic!("expected infeasible, got {other:?}"),
        }
        match plan(&cfg, &snap, 80.0) {
            Err(Error::Infeasible { bound, .. }) => assert_eq!(bound, Bound::ControlZone),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn control_schedule() {
        let cfg = three_vehicle_fleet();
        let snap = make_steady_state_fleet(&cfg).unwrap();
        let plan = plan(&cfg, &snap, 47.2).unwrap();
        let dt = 0.01;
        assert_eq!(control_at(&plan, plan.t_c).unwrap(), ControlCommand::Accel(plan.u_p));
        assert_eq!(control_at(&plan, plan.t_s).unwrap(), ControlCommand::Accel(plan.u_p));
        assert_eq!(control_at(&plan, plan.t_s + dt).unwrap(), ControlCommand::Accel(0.0));
        assert_eq!(control_at(&plan, plan.t_f + dt).unwrap(), ControlCommand::HandOff);
        assert!(matches!(control_at(&plan, -1.0), Err(Error::BeforeControl { .. })));
    }

    proptest! {
        #[test]
        fn two_vehicle_residual(delta in 0.1..500.0f64, tau in 0.5..120.0f64) {
            let u = solve_up_two(delta, tau).unwrap();
            let r = 2.0 * delta + u * tau * tau;
            prop_assert!(r.abs() <= 1e-12 * 2.0 * delta);
            prop_assert!(u < 0.0);
        }

        #[test]
        fn multi_vehicle_residual(delta in 0.1..500.0f64, c1 in 0.0..5.0f64, extra in 0.1..100.0f64) {
            let tau = 2.0 * c1 + extra;
            let u = solve_up_multi(delta, tau, c1).unwrap();
            let r = 2.0 * delta + u * tau * tau - 2.0 * u * tau * c1;
            prop_assert!(r.abs() <= 1e-12 * 2.0 * delta);
        }

        #[test]
        fn empty_sum_reduces_to_two_vehicle_case(delta in 0.1..500.0f64, tau in 0.5..120.0f64) {
            prop_assert_eq!(solve_up_multi(delta, tau, 0.0).unwrap(), solve_up_two(delta, tau).unwrap());
            let inp = FeasibilityInputs { control_length: 500.0 + 10.0 * delta, ..inputs(delta, 0.0) };
            prop_assert_eq!(feasible_range_multi(&inp).unwrap(), feasible_range_two(&inp).unwrap());
        }

        #[test]
        fn up_monotone(delta in 1.0..400.0f64, dd in 0.1..50.0f64, c1 in 0.0..3.0f64, extra in 0.5..80.0f64, dtau in 0.1..10.0f64) {
            let tau = 2.0 * c1 + extra;
            let u = solve_up_multi(delta, tau, c1).unwrap();
            prop_assert!(solve_up_multi(delta + dd, tau, c1).unwrap() < u);
            prop_assert!(solve_up_multi(delta, tau + dtau, c1).unwrap() > u);
        }

        #[test]
        fn lower_bound_consistency(delta in 1.0..400.0f64, c1 in 0.0..3.0f64) {
            let inp = inputs(delta, c1);
            let accel_tau = c1 + (c1 * c1 - 2.0 * delta / inp.u_min).sqrt();
            let u = solve_up_multi(delta, accel_tau, c1).unwrap();
            prop_assert!((u - inp.u_min).abs() <= 1e-6);

            let speed_tau = 2.0 * c1 + 2.0 * delta / (inp.v1_tc - inp.v_min);
            let u = solve_up_multi(delta, speed_tau, c1).unwrap();
            prop_assert!((inp.v1_tc + u * speed_tau - inp.v_min).abs() <= 1e-6);
        }

        #[test]
        fn upper_root_always_real(
            delta in 1e-3..500.0f64, c1 in 0.0..5.0f64, zone in -2000.0..3000.0f64, tau_s in 0.0..20.0f64,
        ) {
            let inp = FeasibilityInputs { control_length: zone, tau_s, ..inputs(delta, c1) };
            prop_assert!(feasible_range_multi(&inp).is_ok());
        }

        #[test]
        fn speed_floor_respected_above_bound(delta in 1.0..400.0f64, c1 in 0.0..3.0f64, extra in 0.0..50.0f64) {
            let inp = inputs(delta, c1);
            let tau = 2.0 * c1 + 2.0 * delta / (inp.v1_tc - inp.v_min) + extra;
            let u = solve_up_multi(delta, tau, c1).unwrap();
            prop_assert!(inp.v1_tc + u * tau >= inp.v_min - 1e-9);
        }
    }
}
