use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::scenario_to_string;
use super::write_atomic;
use crate::controller::ControlPlan;
use crate::error::{Error, Result};
use crate::metrics::{FormationOutcome, FormationTolerances};
use crate::model::ScenarioConfig;
use crate::sim::Trajectory;
use crate::sweep::SweepRecord;

pub const TRAJECTORY_HEADER: &str = "t,vehicle_id,kind,p,v,u,s_i,delta_i,headway,phase";

/// Formats `x` with 9 significant digits: plain decimals for exponents in
/// `[-5, 9)`, scientific notation otherwise. Trailing zeros are dropped.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let (sign, mantissa) = match mantissa.strip_prefix('-') {
        Some(m) => ("-", m),
        None => ("", mantissa),
    };
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    if !(-5..9).contains(&exp) {
        let m = trim(mantissa);
        return format!("{sign}{m}e{exp}");
    }
    let body = if exp < 0 {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    } else {
        let (int, frac) = digits.split_at(exp as usize + 1);
        format!("{int}.{frac}")
    };
    format!("{sign}{}", trim(&body))
}

fn trim(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

/// One row per vehicle per step; the CAV's gap and headway are empty.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut s = String::with_capacity(64 * traj.len() * traj.vehicles());
    s.push_str(TRAJECTORY_HEADER);
    s.push('\n');
    for step in &traj.steps {
        let t = fmt_sig(step.time);
        for (i, st) in step.states.iter().enumerate() {
            let _ = writeln!(
                s,
                "{t},{},{},{},{},{},{},{},{},{}",
                i + 1,
                traj.params[i].kind.as_str(),
                fmt_sig(st.position),
                fmt_sig(st.speed),
                fmt_sig(st.accel),
                fmt_sig(step.spacing[i]),
                opt(step.gap[i]),
                opt(step.headway[i]),
                step.phase.as_str(),
            );
        }
    }
    s
}

pub fn write_trajectory(traj: &Trajectory, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), trajectory_csv(traj).as_bytes())
}

/// `axis_value,N,deviation_pct,feasible`, one row per record.
pub fn plot_csv(records: &[SweepRecord]) -> String {
    let mut s = String::from("axis_value,N,deviation_pct,feasible\n");
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_sig(r.axis_value),
            r.n,
            opt(r.deviation_pct),
            r.feasible
        );
    }
    s
}

pub fn emit_plot_data(records: &[SweepRecord], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), plot_csv(records).as_bytes())
}

/// SHA-256 of the canonical scenario text, hex encoded.
pub fn scenario_hash(cfg: &ScenarioConfig) -> String {
    Sha256::digest(scenario_to_string(cfg).as_bytes())
        .iter()
        .fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub version: String,
    pub scenario: String,
    pub scenario_hash: String,
    pub vehicles: usize,
    pub dt: f64,
    pub plan: ControlPlan,
    pub formation: FormationOutcome,
    pub tolerances: FormationTolerances,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn new(cfg: &ScenarioConfig, plan: ControlPlan, formation: FormationOutcome) -> Self {
        RunSummary {
            version: env!("CARGO_PKG_VERSION").to_string(),
            scenario: cfg.name.clone(),
            scenario_hash: scenario_hash(cfg),
            vehicles: cfg.len(),
            dt: cfg.dt,
            plan,
            formation,
            tolerances: cfg.tolerances,
            warnings: cfg.warnings(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("summary serializes");
        s.push('\n');
        s
    }
}

pub fn write_summary(summary: &RunSummary, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), summary.to_json().as_bytes())
}

pub fn read_summary(path: impl AsRef<Path>) -> Result<RunSummary> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}
