//! Fixed-step simulation of the fleet from `t_c` onward.
//!
//! Semi-implicit Euler: the raw acceleration is clamped to
//! `[u_min, u_max]`, the speed update is clamped to `[v_min, v_max]`, and the
//! position advances with the new speed. If the speed clamp binds, the
//! stored acceleration is the realised `(v_new - v_old) / dt`.
//!
//! The CAV's control schedule is sampled at the midpoint of each step, so a
//! transition of `tau_t` seconds applies `u_p` for exactly `tau_t / dt`
//! steps when that ratio is whole.

use serde::{Deserialize, Serialize};

use crate::controller::{control_at, ControlCommand, ControlPlan};
use crate::error::{Error, Result};
use crate::model::{
    dynamic_spacing, make_steady_state_fleet, raw_gap, RoadConfig, ScenarioConfig, VehicleParams, VehicleState,
};
use crate::ovm::{ovm_accel, DelayHistory, LeadGap, Sample};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    PreControl,
    Transition,
    Stabilization,
    PostZone,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::PreControl => "pre_control",
            Phase::Transition => "transition",
            Phase::Stabilization => "stabilization",
            Phase::PostZone => "post_zone",
        }
    }
}

pub fn phase_at(plan: &ControlPlan, t: f64) -> Phase {
    let eps = 1e-9 * t.abs().max(1.0);
    if t < plan.t_c - eps {
        Phase::PreControl
    } else if t < plan.t_s - eps {
        Phase::Transition
    } else if t < plan.t_f - eps {
        Phase::Stabilization
    } else {
        Phase::PostZone
    }
}

/// How HDVs perceive their predecessor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FollowerMode {
    /// Full car-following law with the measured platoon gap.
    #[default]
    Coupled,
    /// Every HDV drives as if it had no predecessor.
    FreeFlow,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SimOptions {
    pub follower_mode: FollowerMode,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub time: f64,
    pub phase: Phase,
    pub states: Vec<VehicleState>,
    pub spacing: Vec<f64>,
    /// Platoon gap to the predecessor; `None` for the lead CAV.
    pub gap: Vec<Option<f64>>,
    /// `p_{i-1} - p_i`; `None` for the lead CAV.
    pub headway: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub road: RoadConfig,
    pub params: Vec<VehicleParams>,
    pub plan: ControlPlan,
    pub steps: Vec<TrajectoryStep>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn vehicles(&self) -> usize {
        self.params.len()
    }

    pub fn start(&self) -> f64 {
        self.steps.first().map_or(self.plan.t_c, |s| s.time)
    }

    pub fn end(&self) -> f64 {
        self.steps.last().map_or(self.plan.t_c, |s| s.time)
    }

    /// Index of the stored step nearest to `t`, if `t` lies within the run.
    pub fn index_at(&self, t: f64) -> Option<usize> {
        let k = ((t - self.start()) / self.dt).round();
        if k < 0.0 || k as usize >= self.steps.len() {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Speed and acceleration bound violations, as `(step, vehicle)` pairs.
    pub fn bound_violations(&self) -> Vec<(usize, usize)> {
        let r = &self.road;
        let mut out = Vec::new();
        for (k, step) in self.steps.iter().enumerate() {
            for (i, s) in step.states.iter().enumerate() {
                let v_ok = s.speed >= r.v_min && s.speed <= r.v_max;
                let u_ok = s.accel >= r.u_min && s.accel <= r.u_max;
                if !(v_ok && u_ok) {
                    out.push((k, i));
                }
            }
        }
        out
    }
}

/// Live state of one simulation run.
#[derive(Clone, Debug)]
pub struct SimState {
    config: ScenarioConfig,
    plan: ControlPlan,
    options: SimOptions,
    step: u64,
    states: Vec<VehicleState>,
    histories: Vec<DelayHistory>,
}

impl SimState {
    /// Starts from the steady state at `t_c` with histories covering the
    /// preceding `eta_bar` seconds.
    pub fn new(config: &ScenarioConfig, plan: ControlPlan, options: SimOptions) -> Result<Self> {
        let snapshot = make_steady_state_fleet(config)?;
        if (snapshot.time - plan.t_c).abs() > 1e-9 {
            return Err(Error::Invalid(format!(
                "plan starts at t_c = {} but the scenario at t_c = {}",
                plan.t_c, snapshot.time
            )));
        }
        let mut sim = SimState {
            config: config.clone(),
            plan,
            options,
            step: 0,
            states: snapshot.states,
            histories: Vec::new(),
        };
        sim.reset_histories()?;
        Ok(sim)
    }

    /// Forgets the past: every history holds the current sample, as if the
    /// fleet had been in this state for the last `eta_bar` seconds.
    fn reset_histories(&mut self) -> Result<()> {
        let t = self.time();
        self.histories = (0..self.states.len())
            .map(|i| {
                let s = self.sample(i, t);
                let mut h = DelayHistory::prefilled(self.config.dt, self.config.eta_bar, s);
                h.record(s).map(|_| h)
            })
            .collect::<Result<_>>()?;
        Ok(())
    }

    pub fn time(&self) -> f64 {
        self.plan.t_c + self.step as f64 * self.config.dt
    }

    pub fn states(&self) -> &[VehicleState] {
        &self.states
    }

    pub fn phase(&self) -> Phase {
        phase_at(&self.plan, self.time())
    }

    pub fn plan(&self) -> &ControlPlan {
        &self.plan
    }

    fn sample(&self, i: usize, time: f64) -> Sample {
        let params = self.config.params(i);
        let st = &self.states[i];
        let gap = if i == 0 || self.options.follower_mode == FollowerMode::FreeFlow {
            LeadGap::NoPredecessor
        } else {
            LeadGap::Finite(raw_gap(&self.states[i - 1], st, params, self.config.road.s0))
        };
        Sample {
            time,
            gap,
            spacing: dynamic_spacing(st.speed, params, self.config.road.s0),
            speed: st.speed,
        }
    }

    fn raw_accel(&self, i: usize, t: f64) -> Result<f64> {
        let road = &self.config.road;
        if i == 0 {
            if let ControlCommand::Accel(u) = control_at(&self.plan, t + 0.5 * self.config.dt)? {
                return Ok(u);
            }
        }
        ovm_accel(
            &self.histories[i],
            t,
            self.config.params(i),
            road.v_max,
            self.config.gap_scale,
        )
    }

    /// Advances the fleet by one step of `dt`.
    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let dt = self.config.dt;
        let road = self.config.road;
        let raw = (0..self.states.len())
            .map(|i| self.raw_accel(i, t))
            .collect::<Result<Vec<_>>>()?;

        for (st, u) in self.states.iter_mut().zip(raw) {
            let u = u.clamp(road.u_min, road.u_max);
            let free = st.speed + u * dt;
            let v = free.clamp(road.v_min, road.v_max);
            st.accel = if v == free { u } else { (v - st.speed) / dt };
            st.speed = v;
            st.position += v * dt;
        }
        self.step += 1;
        let now = self.time();

        for i in 1..self.states.len() {
            let bumper = self.states[i - 1].position - self.states[i].position - self.config.params(i).length;
            if bumper <= 0.0 {
                return Err(Error::Collision {
                    time: now,
                    vehicle: i + 1,
                    gap: bumper,
                });
            }
        }
        if self.states[0].position > road.control_length && now < self.plan.t_s - 1e-9 {
            return Err(Error::LeftZoneEarly {
                time: now,
                t_s: self.plan.t_s,
            });
        }
        for i in 0..self.states.len() {
            let s = self.sample(i, now);
            self.histories[i].record(s)?;
        }
        Ok(())
    }

    /// Steps until the clock reaches `t` (to the nearest step).
    pub fn run_until(&mut self, t: f64) -> Result<()> {
        let target = ((t - self.plan.t_c) / self.config.dt).round() as u64;
        while self.step < target {
            self.step()?;
        }
        Ok(())
    }

    /// The current state as a trajectory row.
    pub fn record(&self) -> TrajectoryStep {
        let s0 = self.config.road.s0;
        let states = self.states.clone();
        let spacing = states
            .iter()
            .enumerate()
            .map(|(i, st)| dynamic_spacing(st.speed, self.config.params(i), s0))
            .collect();
        let gap = (0..states.len())
            .map(|i| (i > 0).then(|| raw_gap(&states[i - 1], &states[i], self.config.params(i), s0)))
            .collect();
        let headway = (0..states.len())
            .map(|i| (i > 0).then(|| states[i - 1].position - states[i].position))
            .collect();
        TrajectoryStep {
            time: self.time(),
            phase: self.phase(),
            states,
            spacing,
            gap,
            headway,
        }
    }
}

/// Simulates from `t_c` to `horizon` and stores every step.
pub fn run(config: &ScenarioConfig, plan: &ControlPlan, horizon: f64) -> Result<Trajectory> {
    run_with(config, plan, horizon, SimOptions::default())
}

pub fn run_with(config: &ScenarioConfig, plan: &ControlPlan, horizon: f64, options: SimOptions) -> Result<Trajectory> {
    let needed = plan.t_p() + config.tolerances.dwell;
    if !(horizon >= needed - 1e-9) {
        return Err(Error::Invalid(format!(
            "horizon {horizon} s is shorter than t_p + dwell = {needed} s"
        )));
    }
    let mut sim = SimState::new(config, *plan, options)?;
    let n = ((horizon - plan.t_c) / config.dt).round() as usize;
    let mut steps = Vec::with_capacity(n + 1);
    steps.push(sim.record());
    for _ in 0..n {
        sim.step()?;
        steps.push(sim.record());
    }
    Ok(Trajectory {
        dt: config.dt,
        road: config.road,
        params: config.vehicles.iter().map(|v| v.params).collect(),
        plan: *plan,
        steps,
    })
}

/// Default simulation end: the later of the planned zone exit and the end of
/// the formation dwell window.
pub fn default_horizon(config: &ScenarioConfig, plan: &ControlPlan) -> f64 {
    config
        .horizon
        .unwrap_or_else(|| plan.t_f.max(plan.t_p() + config.tolerances.dwell))
}
