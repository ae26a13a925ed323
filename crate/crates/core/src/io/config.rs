//! Scenario file grammar.
//!
//! ```text
//! # comment (also `;`); blank lines ignored
//! [scenario]          name
//! [road]              buffer_length control_length v_min v_max u_min u_max s0
//! [sim]               tau_r eta_bar, optional: t_c dt gap_scale t_p horizon
//!                     speed_fluctuation_limit eps_v eps_delta dwell
//! [vehicle]           kind position rho alpha eta length   (one per vehicle,
//!                     lead CAV first)
//! ```
//!
//! Every entry is `key = value`. Unknown sections or keys, duplicate keys
//! and missing required keys are errors that carry the line number.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::FormationTolerances;
use crate::model::{
    RoadConfig, ScenarioConfig, Vehicle, VehicleKind, VehicleParams, DEFAULT_SPEED_FLUCTUATION_LIMIT,
};

const SCENARIO_KEYS: &[&str] = &["name"];
const ROAD_KEYS: &[&str] = &[
    "buffer_length",
    "control_length",
    "v_min",
    "v_max",
    "u_min",
    "u_max",
    "s0",
];
const SIM_KEYS: &[&str] = &[
    "t_c",
    "tau_r",
    "eta_bar",
    "dt",
    "gap_scale",
    "t_p",
    "horizon",
    "speed_fluctuation_limit",
    "eps_v",
    "eps_delta",
    "dwell",
];
const VEHICLE_KEYS: &[&str] = &["kind", "position", "rho", "alpha", "eta", "length"];

struct Section {
    name: String,
    line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl Section {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|(line, v)| {
                v.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    msg: format!("{key}: expected a number, got {v:?}"),
                })
            })
            .transpose()
    }

    fn f64(&self, key: &str) -> Result<f64> {
        self.opt_f64(key)?.ok_or_else(|| Error::Parse {
            line: self.line,
            msg: format!("[{}] is missing required key {key}", self.name),
        })
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.opt_f64(key)?.unwrap_or(default))
    }
}

fn sections(text: &str) -> Result<Vec<Section>> {
    let mut out: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split(['#', ';']).next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(name) = body.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| Error::Parse {
                line,
                msg: format!("malformed section header {body:?}"),
            })?;
            let name = name.trim();
            if !["scenario", "road", "sim", "vehicle"].contains(&name) {
                return Err(Error::Parse {
                    line,
                    msg: format!("unknown section [{name}]"),
                });
            }
            if name != "vehicle" && out.iter().any(|s| s.name == name) {
                return Err(Error::Parse {
                    line,
                    msg: format!("duplicate section [{name}]"),
                });
            }
            out.push(Section {
                name: name.to_string(),
                line,
                entries: BTreeMap::new(),
            });
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got {body:?}"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let section = out.last_mut().ok_or_else(|| Error::Parse {
            line,
            msg: format!("key {key} appears before any section"),
        })?;
        let allowed = match section.name.as_str() {
            "scenario" => SCENARIO_KEYS,
            "road" => ROAD_KEYS,
            "sim" => SIM_KEYS,
            _ => VEHICLE_KEYS,
        };
        if !allowed.contains(&key) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key {key} in [{}]", section.name),
            });
        }
        if section
            .entries
            .insert(key.to_string(), (line, value.to_string()))
            .is_some()
        {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key {key} in [{}]", section.name),
            });
        }
    }
    Ok(out)
}

fn one<'a>(secs: &'a [Section], name: &str) -> Result<&'a Section> {
    secs.iter().find(|s| s.name == name).ok_or_else(|| Error::Parse {
        line: 0,
        msg: format!("missing section [{name}]"),
    })
}

/// Parses scenario text without validating it.
pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let secs = sections(text)?;
    let road = one(&secs, "road")?;
    let sim = one(&secs, "sim")?;
    let name = secs
        .iter()
        .find(|s| s.name == "scenario")
        .and_then(|s| s.raw("name"))
        .map_or("scenario", |(_, v)| v)
        .to_string();

    let vehicles = secs
        .iter()
        .filter(|s| s.name == "vehicle")
        .map(|s| {
            let (line, kind) = s.raw("kind").ok_or_else(|| Error::Parse {
                line: s.line,
                msg: "[vehicle] is missing required key kind".into(),
            })?;
            let kind = match kind {
                "cav" => VehicleKind::Cav,
                "hdv" => VehicleKind::Hdv,
                other => {
                    return Err(Error::Parse {
                        line,
                        msg: format!("kind: expected cav or hdv, got {other:?}"),
                    })
                }
            };
            Ok(Vehicle {
                params: VehicleParams {
                    kind,
                    rho: s.f64("rho")?,
                    alpha: s.f64("alpha")?,
                    eta: s.f64("eta")?,
                    length: s.f64("length")?,
                },
                position: s.f64("position")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let defaults = FormationTolerances::default();
    Ok(ScenarioConfig {
        name,
        road: RoadConfig {
            buffer_length: road.f64("buffer_length")?,
            control_length: road.f64("control_length")?,
            v_min: road.f64("v_min")?,
            v_max: road.f64("v_max")?,
            u_min: road.f64("u_min")?,
            u_max: road.f64("u_max")?,
            s0: road.f64("s0")?,
        },
        vehicles,
        t_c: sim.f64_or("t_c", 0.0)?,
        tau_r: sim.f64("tau_r")?,
        eta_bar: sim.f64("eta_bar")?,
        dt: sim.f64_or("dt", 0.01)?,
        gap_scale: sim.f64_or("gap_scale", 1.0)?,
        t_p: sim.opt_f64("t_p")?,
        horizon: sim.opt_f64("horizon")?,
        speed_fluctuation_limit: sim.f64_or("speed_fluctuation_limit", DEFAULT_SPEED_FLUCTUATION_LIMIT)?,
        tolerances: FormationTolerances {
            eps_v: sim.f64_or("eps_v", defaults.eps_v)?,
            eps_delta: sim.f64_or("eps_delta", defaults.eps_delta)?,
            dwell: sim.f64_or("dwell", defaults.dwell)?,
        },
    })
}

/// Reads, parses and fully validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let cfg = parse_scenario(&text)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text form; `parse_scenario` reads it back unchanged.
pub fn scenario_to_string(cfg: &ScenarioConfig) -> String {
    use std::fmt::Write;
    let mut s = String::new();
    let r = &cfg.road;
    let t = &cfg.tolerances;
    let _ = writeln!(s, "[scenario]\nname = {}\n", cfg.name);
    let _ = writeln!(
        s,
        "[road]\nbuffer_length = {}\ncontrol_length = {}\nv_min = {}\nv_max = {}\nu_min = {}\nu_max = {}\ns0 = {}\n",
        r.buffer_length, r.control_length, r.v_min, r.v_max, r.u_min, r.u_max, r.s0
    );
    let _ = write!(
        s,
        "[sim]\nt_c = {}\ntau_r = {}\neta_bar = {}\ndt = {}\ngap_scale = {}\n",
        cfg.t_c, cfg.tau_r, cfg.eta_bar, cfg.dt, cfg.gap_scale
    );
    if let Some(t_p) = cfg.t_p {
        let _ = writeln!(s, "t_p = {t_p}");
    }
    if let Some(h) = cfg.horizon {
        let _ = writeln!(s, "horizon = {h}");
    }
    let _ = writeln!(
        s,
        "speed_fluctuation_limit = {}\neps_v = {}\neps_delta = {}\ndwell = {}",
        cfg.speed_fluctuation_limit, t.eps_v, t.eps_delta, t.dwell
    );
    for v in &cfg.vehicles {
        let p = &v.params;
        let _ = write!(
            s,
            "\n[vehicle]\nkind = {}\nposition = {}\nrho = {}\nalpha = {}\neta = {}\nlength = {}\n",
            p.kind.as_str(),
            v.position,
            p.rho,
            p.alpha,
            p.eta,
            p.length
        );
    }
    s
}

pub fn write_scenario(cfg: &ScenarioConfig, path: impl AsRef<Path>) -> Result<()> {
    super::write_atomic(path.as_ref(), scenario_to_string(cfg).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[road]
buffer_length = 200
control_length = 1100
v_min = 10
v_max = 30
u_min = -3
u_max = 3
s0 = 2

[sim]
tau_r = 4
eta_bar = 1   # upper bound on the delays

[vehicle]
kind = cav
position = 0
rho = 1
alpha = 1.5
eta = 0
length = 5

[vehicle]
kind = hdv
position = -207
rho = 1
alpha = 1.5
eta = 0.5
length = 5
";

    #[test]
    fn parses_minimal_file_with_defaults() {
        let cfg = parse_scenario(MINIMAL).unwrap();
        assert_eq!(cfg.len(), 2);
        assert_eq!(cfg.dt, 0.01);
        assert_eq!(cfg.gap_scale, 1.0);
        assert_eq!(cfg.eta_bar, 1.0);
        assert_eq!(cfg.t_p, None);
        assert_eq!(cfg.tolerances, FormationTolerances::default());
        assert_eq!(cfg.vehicles[1].position, -207.0);
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trips_through_text() {
        let mut cfg = parse_scenario(MINIMAL).unwrap();
        cfg.t_p = Some(47.2);
        cfg.gap_scale = 0.04;
        cfg.dt = 1.0 / 300.0;
        let again = parse_scenario(&scenario_to_string(&cfg)).unwrap();
        assert_eq!(again, cfg);
    }

    fn err_line(text: &str) -> usize {
        match parse_scenario(text) {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_and_duplicate_keys() {
        assert_eq!(err_line(&MINIMAL.replace("s0 = 2", "s0 = 2\nfoo = 1")), 9);
        assert_eq!(err_line(&MINIMAL.replace("s0 = 2", "s0 = 2\ns0 = 3")), 9);
        assert_eq!(err_line(&MINIMAL.replace("[sim]", "[solver]")), 10);
        assert_eq!(err_line(&format!("x = 1\n{MINIMAL}")), 1);
        assert_eq!(err_line(&MINIMAL.replace("v_max = 30", "v_max = fast")), 5);
    }

    #[test]
    fn reports_missing_keys() {
        let text = MINIMAL.replace("alpha = 1.5\neta = 0.5", "eta = 0.5");
        match parse_scenario(&text) {
            Err(Error::Parse { msg, .. }) => assert!(msg.contains("alpha"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }
}
