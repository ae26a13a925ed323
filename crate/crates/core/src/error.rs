use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

/// Lower or upper bound of the feasible transition-duration interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Braking at `u_min` is not enough to close the gap in time.
    AccelLimit,
    /// The CAV would drop below `v_min` before the transition ends.
    SpeedFloor,
    /// Formation would complete beyond the end of the control zone.
    ControlZone,
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Bound::AccelLimit => write!(f, "u_min lower bound"),
            Bound::SpeedFloor => write!(f, "v_min lower bound"),
            Bound::ControlZone => write!(f, "control-zone upper bound"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid scenario: {0}")]
    Invalid(String),

    #[error("vehicles {front} and {back} overlap or are mis-ordered (bumper gap {gap:.3} m)")]
    Ordering { front: usize, back: usize, gap: f64 },

    #[error("already platooned: no HDV has a positive platoon gap at t_c")]
    AlreadyPlatooned,

    #[error("transition duration must be positive, got {0} s")]
    NonPositiveDuration(f64),

    #[error("transition too short: tau_t = {tau_t} s must exceed 2*sum(rho) = {min} s")]
    TransitionTooShort { tau_t: f64, min: f64 },

    #[error("infeasible tau_t = {tau_t:.4} s: violates {bound} (interval [{lo:.4}, {hi:.4}] s)")]
    Infeasible {
        tau_t: f64,
        lo: f64,
        hi: f64,
        bound: Bound,
    },

    #[error("no real upper bound on tau_t: control zone too short for the stabilization step")]
    NoUpperBound,

    #[error("CAV speed {v1} m/s at t_c must exceed v_min = {v_min} m/s")]
    NoSpeedMargin { v1: f64, v_min: f64 },

    #[error("delay history does not reach back {lag} steps (holds {len})")]
    HistoryTooShort { lag: usize, len: usize },

    #[error("history sample at t = {got} s, expected t = {expected} s")]
    HistoryGap { expected: f64, got: f64 },

    #[error("t = {t} s precedes control start t_c = {t_c} s")]
    BeforeControl { t: f64, t_c: f64 },

    #[error("collision at t = {time:.3} s: vehicle {vehicle} bumper gap {gap:.4} m")]
    Collision { time: f64, vehicle: usize, gap: f64 },

    #[error("CAV left the control zone at t = {time:.3} s, before t_s = {t_s:.3} s")]
    LeftZoneEarly { time: f64, t_s: f64 },

    #[error("{0}")]
    Trajectory(String),

    #[error("empty input")]
    Empty,

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
