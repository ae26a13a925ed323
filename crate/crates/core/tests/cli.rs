use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/examples/n3_paper.cfg");

fn platoon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_platoon")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn variant(dir: &Path, from: &str, to: &str) -> PathBuf {
    let text = std::fs::read_to_string(FIXTURE).unwrap();
    assert!(text.contains(from), "fixture has no {from:?}");
    let path = dir.join("variant.cfg");
    std::fs::write(&path, text.replacen(from, to, 1)).unwrap();
    path
}

#[test]
fn validate_accepts_fixture() {
    let out = platoon(&["validate", FIXTURE]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stdout).contains("3 vehicles"));
}

#[test]
fn simulate_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = platoon(&["simulate", FIXTURE, "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("trajectory.csv").is_file());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["formation"]["outcome"], "formed");
    assert_eq!(summary["vehicles"], 3);
}

#[test]
fn solve_prints_braking_level() {
    let out = platoon(&["solve", FIXTURE, "--tau-t", "42.2"]);
    assert_eq!(code(&out), 0);
    let u: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((-0.41..-0.39).contains(&u), "u_p = {u}");
}

#[test]
fn infeasible_target_is_a_verdict() {
    let out = platoon(&["feasible", FIXTURE, "--t-p", "6"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("feasible interval"));
}

#[test]
fn bad_speed_bounds_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "v_min = 10", "v_min = 30");
    let out = platoon(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
}

#[test]
fn already_platooned_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "position = -207", "position = -30");
    let path = {
        let text = std::fs::read_to_string(&path).unwrap().replacen("position = -414", "position = -60", 1);
        std::fs::write(&path, text).unwrap();
        path
    };
    let out = platoon(&["simulate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn parse_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = variant(dir.path(), "dt = 0.01", "dt = 0.01\nwobble = 3");
    let out = platoon(&["validate", path.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("wobble"));
}

#[test]
fn missing_file_exits_two() {
    assert_eq!(code(&platoon(&["validate", "/nonexistent/x.cfg"])), 2);
}
