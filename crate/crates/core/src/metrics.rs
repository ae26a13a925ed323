//! Steady-state tests, transition and formation detection.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::Trajectory;

/// Tolerances that turn the exact steady-state conditions into checks a
/// discrete trajectory can pass.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormationTolerances {
    /// Speed mismatch treated as zero (m/s).
    pub eps_v: f64,
    /// Largest platoon gap treated as coupled (m).
    pub eps_delta: f64,
    /// How long the conditions must hold (s).
    pub dwell: f64,
}

impl Default for FormationTolerances {
    fn default() -> Self {
        FormationTolerances {
            eps_v: 0.1,
            eps_delta: 0.1,
            dwell: 2.0,
        }
    }
}

impl FormationTolerances {
    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x > 0.0 && x.is_finite();
        if ok(self.eps_v) && ok(self.eps_delta) && ok(self.dwell) {
            Ok(())
        } else {
            Err(Error::Invalid(
                "formation tolerances eps_v, eps_delta and dwell must be positive".into(),
            ))
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormationReport {
    /// When every platoon gap first reached zero, if it did.
    pub t_s_actual: Option<f64>,
    pub t_ap: f64,
    pub t_p: f64,
    pub deviation_pct: f64,
    /// Mean CAV speed over the dwell window starting at `t_ap`.
    pub v_eq_observed: f64,
    /// Whether the CAV was still inside the control zone at `t_ap`.
    pub in_zone: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailedCondition {
    /// Some platoon gap stayed above `eps_delta`.
    Gap,
    /// Some HDV speed differed from the CAV's by more than `eps_v`.
    Speed,
    /// The run is shorter than one dwell window.
    Horizon,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NotReached {
    pub condition: FailedCondition,
    /// Longest run of consecutive steps failing `condition` (s).
    pub longest_failure: f64,
    /// Vehicle (1-based) that failed `condition` at the last step.
    pub vehicle: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome")]
pub enum FormationOutcome {
    Formed(FormationReport),
    NotReached(NotReached),
}

impl FormationOutcome {
    pub fn report(&self) -> Option<&FormationReport> {
        match self {
            FormationOutcome::Formed(r) => Some(r),
            FormationOutcome::NotReached(_) => None,
        }
    }
}

fn steps_in(dt: f64, span: f64) -> usize {
    (span / dt).round() as usize
}

/// Per-pair steady-state flags at `t` (index `i - 1` holds pair `i`): the
/// gap drifted by at most `eps_delta` and the speed difference to the
/// predecessor stayed within `eps_v` over the trailing dwell window.
pub fn steady_state_check(traj: &Trajectory, t: f64, tol: &FormationTolerances) -> Result<Vec<bool>> {
    let k = traj
        .index_at(t)
        .ok_or_else(|| Error::Trajectory(format!("t = {t} s is outside the trajectory")))?;
    let w = steps_in(traj.dt, tol.dwell);
    if w > k {
        return Err(Error::Trajectory(format!(
            "dwell window before t = {t} s starts before the trajectory"
        )));
    }
    let window = &traj.steps[k - w..=k];
    Ok((1..traj.vehicles())
        .map(|i| {
            let drift = window[w].gap[i].unwrap() - window[0].gap[i].unwrap();
            let dv = window
                .iter()
                .map(|s| (s.states[i - 1].speed - s.states[i].speed).abs())
                .fold(0.0, f64::max);
            drift.abs() <= tol.eps_delta && dv <= tol.eps_v
        })
        .collect())
}

fn max_gap(traj: &Trajectory, k: usize) -> f64 {
    traj.steps[k].gap[1..]
        .iter()
        .map(|g| g.unwrap())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// First time every platoon gap is at or below zero, interpolated linearly
/// between the bracketing steps. `None` if it never happens.
pub fn detect_transition(traj: &Trajectory) -> Option<f64> {
    let k = (0..traj.len()).find(|&k| max_gap(traj, k) <= 0.0)?;
    if k == 0 {
        return Some(traj.steps[0].time);
    }
    let (g0, g1) = (max_gap(traj, k - 1), max_gap(traj, k));
    let (t0, t1) = (traj.steps[k - 1].time, traj.steps[k].time);
    Some(t0 + (t1 - t0) * g0 / (g0 - g1))
}

pub fn formation_deviation(t_ap: f64, t_p: f64) -> f64 {
    (t_ap - t_p) / t_p * 100.0
}

/// Earliest `t_ap` from which every HDV is coupled (gap at most
/// `eps_delta`) and matches the CAV's speed within `eps_v` for a full dwell
/// window.
pub fn detect_formation(traj: &Trajectory, tol: &FormationTolerances) -> FormationOutcome {
    let n = traj.vehicles();
    let w = steps_in(traj.dt, tol.dwell);
    let gap_fail = |k: usize| (1..n).find(|&i| traj.steps[k].gap[i].unwrap() > tol.eps_delta);
    let speed_fail = |k: usize| {
        let s = &traj.steps[k].states;
        (1..n).find(|&i| (s[i].speed - s[0].speed).abs() > tol.eps_v)
    };

    // scan backwards so each step knows how long the conditions hold from it
    let mut run = 0usize;
    let mut t_ap = None;
    for k in (0..traj.len()).rev() {
        if gap_fail(k).is_none() && speed_fail(k).is_none() {
            run += 1;
            if run > w {
                t_ap = Some(k);
            }
        } else {
            run = 0;
        }
    }

    let Some(k) = t_ap else {
        return FormationOutcome::NotReached(diagnose(traj, w, &gap_fail, &speed_fail));
    };
    let window = &traj.steps[k..=k + w];
    let v_eq_observed = window.iter().map(|s| s.states[0].speed).sum::<f64>() / window.len() as f64;
    let t = traj.steps[k].time;
    let t_p = traj.plan.t_p();
    FormationOutcome::Formed(FormationReport {
        t_s_actual: detect_transition(traj),
        t_ap: t,
        t_p,
        deviation_pct: formation_deviation(t, t_p),
        v_eq_observed,
        in_zone: traj.steps[k].states[0].position <= traj.road.control_length,
    })
}

fn diagnose(
    traj: &Trajectory,
    w: usize,
    gap_fail: &dyn Fn(usize) -> Option<usize>,
    speed_fail: &dyn Fn(usize) -> Option<usize>,
) -> NotReached {
    if traj.len() <= w {
        return NotReached {
            condition: FailedCondition::Horizon,
            longest_failure: 0.0,
            vehicle: None,
        };
    }
    let longest = |fail: &dyn Fn(usize) -> Option<usize>| {
        let (mut best, mut cur) = (0usize, 0usize);
        for k in 0..traj.len() {
            cur = if fail(k).is_some() { cur + 1 } else { 0 };
            best = best.max(cur);
        }
        best
    };
    let (lg, ls) = (longest(gap_fail), longest(speed_fail));
    let last = traj.len() - 1;
    let (condition, steps, vehicle) = if lg >= ls {
        (FailedCondition::Gap, lg, gap_fail(last))
    } else {
        (FailedCondition::Speed, ls, speed_fail(last))
    };
    NotReached {
        condition,
        longest_failure: steps as f64 * traj.dt,
        vehicle: vehicle.map(|i| i + 1),
    }
}

/// Population standard deviation of each follower's headway over
/// `[from, to]`.
pub fn headway_std(traj: &Trajectory, from: f64, to: f64) -> Result<Vec<f64>> {
    let rows: Vec<_> = traj
        .steps
        .iter()
        .filter(|s| s.time >= from - 1e-9 && s.time <= to + 1e-9)
        .collect();
    if rows.is_empty() {
        return Err(Error::Trajectory(format!("no steps in [{from}, {to}]")));
    }
    let m = rows.len() as f64;
    Ok((1..traj.vehicles())
        .map(|i| {
            let mean = rows.iter().map(|s| s.headway[i].unwrap()).sum::<f64>() / m;
            let var = rows.iter().map(|s| (s.headway[i].unwrap() - mean).powi(2)).sum::<f64>() / m;
            var.sqrt()
        })
        .collect())
}
