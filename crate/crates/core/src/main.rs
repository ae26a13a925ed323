use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use platoon::controller::{feasible_range, feasibility_inputs, plan, solve_up_multi, solve_up_two};
use platoon::io::{emit_plot_data, load_scenario, write_summary, write_trajectory, RunSummary};
use platoon::metrics::{detect_formation, FormationOutcome};
use platoon::model::{make_steady_state_fleet, ScenarioConfig};
use platoon::sim::{default_horizon, run};
use platoon::sweep::{aggregate, run_sweep, Axis, SweepSpec, DEFAULT_SAMPLES};
use platoon::Error;

#[derive(Parser)]
#[command(name = "platoon", version, about = "CAV-led platoon formation in mixed traffic")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Plan, simulate and report formation.
    Simulate {
        config: PathBuf,
        /// Desired formation time (defaults to the scenario's t_p).
        #[arg(long)]
        t_p: Option<f64>,
        /// Directory for trajectory.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the feasible transition interval and, given t_p, the verdict.
    Feasible {
        config: PathBuf,
        #[arg(long)]
        t_p: Option<f64>,
    },
    /// Print the braking level for a transition duration.
    Solve {
        config: PathBuf,
        #[arg(long)]
        tau_t: f64,
    },
    /// Robustness sweep along one axis.
    Sweep {
        config: PathBuf,
        #[arg(long, value_parser = parse_axis)]
        axis: Axis,
        /// Fleet sizes, comma separated.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        #[arg(long, default_value_t = DEFAULT_SAMPLES)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.0)]
        jitter: f64,
        /// Directory for per-N plot data.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scenario file.
    Validate { config: PathBuf },
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Input(Error),
    Verdict(String),
    Internal(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Infeasible { .. } | Error::NoUpperBound => Failure::Verdict(e.to_string()),
            Error::Parse { .. }
            | Error::Invalid(_)
            | Error::Ordering { .. }
            | Error::AlreadyPlatooned
            | Error::NonPositiveDuration(_)
            | Error::TransitionTooShort { .. }
            | Error::NoSpeedMargin { .. } => Failure::Input(e),
            _ => Failure::Internal(e),
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    let cfg = load_scenario(path).map_err(Failure::Input)?;
    for w in cfg.warnings() {
        eprintln!("warning: {w}");
    }
    Ok(cfg)
}

fn target_time(cfg: &ScenarioConfig, t_p: Option<f64>) -> Result<f64, Failure> {
    t_p.or(cfg.t_p)
        .ok_or_else(|| Failure::Input(Error::Invalid("no t_p given on the command line or in the scenario".into())))
}

fn simulate(config: &Path, t_p: Option<f64>, out: Option<&Path>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let t_p = target_time(&cfg, t_p)?;
    let p = plan(&cfg, &make_steady_state_fleet(&cfg)?, t_p)?;
    let traj = run(&cfg, &p, default_horizon(&cfg, &p))?;
    let outcome = detect_formation(&traj, &cfg.tolerances);
    let summary = RunSummary::new(&cfg, p, outcome);
    match out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Failure::Internal(Error::Io {
                path: dir.to_path_buf(),
                source: e,
            }))?;
            write_trajectory(&traj, dir.join("trajectory.csv"))?;
            write_summary(&summary, dir.join("summary.json"))?;
        }
        None => print!("{}", summary.to_json()),
    }
    match outcome {
        FormationOutcome::Formed(r) => {
            eprintln!(
                "formed at t_ap = {:.3} s (t_p = {:.3} s, deviation {:+.3}%)",
                r.t_ap, r.t_p, r.deviation_pct
            );
            Ok(())
        }
        FormationOutcome::NotReached(d) => Err(Failure::Verdict(format!(
            "platoon not formed: {:?} condition failed for {:.2} s",
            d.condition, d.longest_failure
        ))),
    }
}

fn feasible(config: &Path, t_p: Option<f64>) -> Result<(), Failure> {
    let cfg = load(config)?;
    let snap = make_steady_state_fleet(&cfg)?;
    let iv = feasible_range(&cfg, &snap)?;
    println!("tau_t feasible interval: [{:.6}, {:.6}] s", iv.lo, iv.hi);
    println!("lower bound set by: {}", iv.lo_bound);
    if iv.is_empty() {
        return Err(Failure::Verdict("interval is empty".into()));
    }
    if let Some(t_p) = t_p.or(cfg.t_p) {
        let tau_t = t_p - cfg.t_c - cfg.tau_s();
        println!("t_p = {t_p} s gives tau_t = {tau_t:.6} s");
        iv.check(tau_t)?;
        println!("feasible");
    }
    Ok(())
}

fn solve(config: &Path, tau_t: f64) -> Result<(), Failure> {
    let cfg = load(config)?;
    let snap = make_steady_state_fleet(&cfg)?;
    let inputs = feasibility_inputs(&cfg, &snap)?;
    let u_p = if cfg.len() == 2 {
        solve_up_two(inputs.gap, tau_t)?
    } else {
        solve_up_multi(inputs.gap, tau_t, inputs.rho_sum)?
    };
    println!("{u_p}");
    let iv = feasible_range(&cfg, &snap)?;
    if !iv.contains(tau_t) {
        eprintln!("note: tau_t = {tau_t} s lies outside the feasible interval [{:.4}, {:.4}] s", iv.lo, iv.hi);
    }
    Ok(())
}

fn sweep(
    config: &Path,
    axis: Axis,
    n: Option<Vec<usize>>,
    samples: usize,
    seed: u64,
    jitter: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let cfg = load(config)?;
    let mut spec = SweepSpec::new(cfg, axis);
    if let Some(n) = n {
        spec.fleet_sizes = n;
    }
    spec.samples = samples;
    spec.seed = seed;
    spec.jitter = jitter;
    let records = run_sweep(&spec)?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|e| Failure::Internal(Error::Io {
            path: dir.to_path_buf(),
            source: e,
        }))?;
        for &size in &spec.fleet_sizes {
            let rows: Vec<_> = records.iter().filter(|r| r.n == size).cloned().collect();
            emit_plot_data(&rows, dir.join(format!("sweep_{}_n{size}.csv", axis.as_str())))?;
        }
    }
    let summary = aggregate(&records)?;
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

fn validate(config: &Path) -> Result<(), Failure> {
    let cfg = load(config)?;
    println!("{}: {} vehicles, valid", cfg.name, cfg.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Simulate { config, t_p, out } => simulate(&config, t_p, out.as_deref()),
        Cmd::Feasible { config, t_p } => feasible(&config, t_p),
        Cmd::Solve { config, tau_t } => solve(&config, tau_t),
        Cmd::Sweep {
            config,
            axis,
            n,
            samples,
            seed,
            jitter,
            out,
        } => sweep(&config, axis, n, samples, seed, jitter, out.as_deref()),
        Cmd::Validate { config } => validate(&config),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verdict(msg)) => {
            eprintln!("{msg}");
            ExitCode::from(1)
        }
        Err(Failure::Input(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
