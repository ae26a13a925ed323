//! Delayed optimal-velocity car-following law.
//!
//! An HDV accelerates toward the equilibrium speed
//! `V(delta, s) = v_max/2 * (tanh(k*delta) + tanh(s))`, seeing its own gap,
//! spacing and speed `eta` seconds late:
//!
//! ```text
//! u(t) = alpha * (V(delta(t - eta), s(t - eta)) - v(t - eta))
//! ```
//!
//! Both free-flow and coupled behaviour come out of the same smooth `tanh`;
//! only the missing predecessor of a lone vehicle is special-cased (its gap
//! is infinite). `k` is the gap scale in 1/m, 1.0 by default.
//!
//! Delays are quantised to whole steps: `eta` is rounded to the nearest
//! multiple of `dt`, so the realised delay is off by at most `dt / 2`.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::VehicleParams;

/// Platoon gap as seen by the car-following law.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum LeadGap {
    Finite(f64),
    NoPredecessor,
}

impl LeadGap {
    pub fn value(self) -> f64 {
        match self {
            LeadGap::Finite(d) => d,
            LeadGap::NoPredecessor => f64::INFINITY,
        }
    }
}

pub fn equilibrium_speed(gap: LeadGap, spacing: f64, v_max: f64, gap_scale: f64) -> f64 {
    let gap_term = match gap {
        LeadGap::Finite(d) => (gap_scale * d).tanh(),
        LeadGap::NoPredecessor => 1.0,
    };
    0.5 * v_max * (gap_term + spacing.tanh())
}

/// One perceived sample: gap, dynamic spacing and own speed at `time`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub time: f64,
    pub gap: LeadGap,
    pub spacing: f64,
    pub speed: f64,
}

/// Fixed-step ring of past samples for one vehicle.
#[derive(Clone, Debug)]
pub struct DelayHistory {
    dt: f64,
    eta_bar: f64,
    samples: VecDeque<Sample>,
}

impl DelayHistory {
    pub fn new(dt: f64, eta_bar: f64) -> Self {
        let cap = (eta_bar / dt).ceil() as usize + 3;
        DelayHistory {
            dt,
            eta_bar,
            samples: VecDeque::with_capacity(cap),
        }
    }

    /// History holding `sample` repeated over the `eta_bar` seconds before
    /// `sample.time`, i.e. the steady state assumed before control starts.
    /// The sample at `sample.time` itself is not included.
    pub fn prefilled(dt: f64, eta_bar: f64, sample: Sample) -> Self {
        let mut h = DelayHistory::new(dt, eta_bar);
        let back = (eta_bar / dt + 0.5).ceil() as usize + 1;
        for k in (1..=back).rev() {
            h.samples.push_back(Sample {
                time: sample.time - k as f64 * dt,
                ..sample
            });
        }
        h
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn latest(&self) -> Option<&Sample> {
        self.samples.back()
    }

    pub fn earliest(&self) -> Option<&Sample> {
        self.samples.front()
    }

    /// Appends a sample exactly one step after the latest one and evicts
    /// samples older than `t - eta_bar - dt`.
    pub fn record(&mut self, sample: Sample) -> Result<()> {
        if let Some(last) = self.samples.back() {
            let expected = last.time + self.dt;
            if (sample.time - expected).abs() > 1e-6 * self.dt {
                return Err(Error::HistoryGap {
                    expected,
                    got: sample.time,
                });
            }
        }
        self.samples.push_back(sample);
        let horizon = sample.time - self.eta_bar - self.dt - 1e-6 * self.dt;
        while self.samples.front().is_some_and(|s| s.time < horizon) {
            self.samples.pop_front();
        }
        Ok(())
    }

    pub fn lag_steps(&self, eta: f64) -> usize {
        (eta / self.dt).round() as usize
    }

    /// The sample seen at time `t` by a driver with delay `eta`.
    pub fn delayed(&self, t: f64, eta: f64) -> Result<&Sample> {
        let lag = self.lag_steps(eta);
        let first = self.samples.front().ok_or(Error::HistoryTooShort {
            lag,
            len: 0,
        })?;
        let idx_t = ((t - first.time) / self.dt).round();
        if idx_t < 0.0 || idx_t as usize >= self.samples.len() {
            return Err(Error::Trajectory(format!(
                "t = {t} s is outside the recorded history"
            )));
        }
        let idx_t = idx_t as usize;
        if lag > idx_t {
            return Err(Error::HistoryTooShort {
                lag,
                len: idx_t + 1,
            });
        }
        Ok(&self.samples[idx_t - lag])
    }
}

/// Raw (unclamped) car-following acceleration at time `t`.
pub fn ovm_accel(
    history: &DelayHistory,
    t: f64,
    params: &VehicleParams,
    v_max: f64,
    gap_scale: f64,
) -> Result<f64> {
    let seen = history.delayed(t, params.eta)?;
    let target = equilibrium_speed(seen.gap, seen.spacing, v_max, gap_scale);
    Ok(params.alpha * (target - seen.speed))
}
