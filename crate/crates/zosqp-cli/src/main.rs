//! Command-line front end for the zosqp solver: run experiments from a
//! config file, verify the library's property suites, solve the cost-only
//! power dispatch baseline, and sweep seeds across worker threads.
//!
//! Exit codes: 0 success, 1 configuration error, 2 solver/runtime failure.

mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use zosqp::metrics::fmt_float;
use zosqp::oracle::Oracle;
use zosqp::problems::power::{
    baseline_qp, make_power_problem, max_angle_separation, simulate_network, PowerError,
    Trajectory,
};
use zosqp::solver::{run, SolverError, SolverTrace, Termination};
use zosqp::verify::{suite, SUITE_NAMES};

use config::{BuiltProblem, Overrides, RunConfig, RunManifest};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

#[derive(Parser)]
#[command(name = "zosqp", version, about = "Zeroth-order random-subspace SQP driver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the solver on a configured problem and write trace/summary files.
    Run(RunArgs),
    /// Run a named verification suite (qp-oracle, estimator, subspace,
    /// theory, experiments) and report each check.
    Verify {
        suite: String,
    },
    /// Solve the cost-only power dispatch QP, simulate it, and report the
    /// resulting max angle separation.
    Baseline {
        config: PathBuf,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one seeded solver run per worker thread, each into its own
    /// output directory.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the run configuration file.
    config: PathBuf,
    /// Output directory override.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Subspace dimension override.
    #[arg(long)]
    d: Option<usize>,
    /// Finite-difference radius override.
    #[arg(long)]
    r: Option<f64>,
    /// Proximal weight override.
    #[arg(long = "L")]
    prox_weight: Option<f64>,
    /// Merit penalty override.
    #[arg(long)]
    tau: Option<f64>,
    /// RNG seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Step rule override: fixed | linesearch.
    #[arg(long)]
    mode: Option<String>,
    /// Iteration count override.
    #[arg(long = "T")]
    iterations: Option<usize>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            d: self.d,
            r: self.r,
            prox_weight: self.prox_weight,
            tau: self.tau,
            seed: self.seed,
            mode: self.mode.clone(),
            iterations: self.iterations,
            out: self.out.clone(),
        }
    }
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Comma-separated list of seeds; one worker thread per seed.
    #[arg(long)]
    seeds: String,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify { suite } => cmd_verify(suite),
        Command::Baseline { config, out } => cmd_baseline(config, out.as_deref()),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn load_effective(args: &RunArgs) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    cfg.apply(&args.overrides());
    let dir = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    Ok((cfg, dir))
}

fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let (cfg, config_dir) = load_effective(args)?;
    execute_run(&cfg, &config_dir)
}

#[derive(Serialize)]
struct RunSummary {
    manifest: RunManifest,
    termination: String,
    iterations: usize,
    evaluations: EvalSummary,
    final_state: FinalState,
}

#[derive(Serialize)]
struct EvalSummary {
    full: u64,
    distinct_points: u64,
}

#[derive(Serialize)]
struct FinalState {
    f: f64,
    viol_h: f64,
    viol_g: f64,
    kkt_gap: f64,
    x: Vec<f64>,
}

/// The shared body of `run` and `sweep`: build everything, write the
/// manifest, run the solver, and emit trace/summary/plot artifacts.
fn execute_run(cfg: &RunConfig, config_dir: &Path) -> Result<(), CliError> {
    let solver_cfg = cfg.solver_config()?;
    let problem = cfg.build_problem(config_dir)?;
    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;

    let mut outputs = BTreeMap::new();
    outputs.insert("manifest".to_string(), "manifest.json".to_string());
    outputs.insert("trace".to_string(), "trace.csv".to_string());
    outputs.insert("summary".to_string(), "summary.json".to_string());
    if cfg.output.plotdata {
        outputs.insert("objective".to_string(), "plotdata/objective.csv".to_string());
        outputs.insert("violation".to_string(), "plotdata/violation.csv".to_string());
        outputs.insert("kkt".to_string(), "plotdata/kkt.csv".to_string());
    }
    let write_trajectory =
        cfg.output.trajectory && matches!(problem, BuiltProblem::Power(_));
    if write_trajectory {
        outputs.insert("trajectory".to_string(), "trajectory.csv".to_string());
    }

    // The manifest goes out before the first iteration so interrupted runs
    // stay diagnosable.
    let manifest = RunManifest::new(cfg, &problem, outputs)?;
    write_json(&out_dir.join("manifest.json"), &manifest)?;

    let oracle = Oracle::new(problem.black_box()?);
    let trace = run(&solver_cfg, &oracle, None).map_err(map_solver_err)?;

    write_text(&out_dir.join("trace.csv"), &trace.to_csv())?;
    if cfg.output.plotdata {
        write_plotdata(&out_dir.join("plotdata"), &trace)?;
    }
    if write_trajectory {
        if let BuiltProblem::Power(spec) = &problem {
            let traj = simulate_network(spec, &trace.final_x)
                .map_err(|e| CliError::Runtime(format!("final-iterate simulation: {e}")))?;
            write_text(&out_dir.join("trajectory.csv"), &trajectory_csv(&traj))?;
        }
    }

    let termination = match &trace.termination {
        Termination::Completed => "completed".to_string(),
        Termination::RejectionBudgetExhausted { at_iteration } => {
            format!("rejection-budget-exhausted at iteration {at_iteration}")
        }
    };
    let counter = oracle.counter();
    let last = trace.final_row();
    let summary = RunSummary {
        manifest,
        termination: termination.clone(),
        iterations: trace.rows.len().saturating_sub(1),
        evaluations: EvalSummary { full: counter.n_full, distinct_points: counter.n_points },
        final_state: FinalState {
            f: last.f,
            viol_h: last.viol_h,
            viol_g: last.viol_g,
            kkt_gap: last.kkt_gap,
            x: trace.final_x.clone(),
        },
    };
    write_json(&out_dir.join("summary.json"), &summary)?;

    println!(
        "{}: {} iterations, {} evaluations, final f {:.6}, kkt gap {:.3e}, artifacts in {}",
        termination,
        summary.iterations,
        counter.n_full,
        last.f,
        last.kkt_gap,
        out_dir.display()
    );
    if let Termination::RejectionBudgetExhausted { at_iteration } = trace.termination {
        return Err(CliError::Runtime(format!(
            "rejection budget exhausted at iteration {at_iteration}"
        )));
    }
    Ok(())
}

fn map_solver_err(e: SolverError) -> CliError {
    match e {
        SolverError::Config(c) => CliError::Config(c.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn cmd_verify(name: &str) -> Result<(), CliError> {
    let Some(results) = suite(name) else {
        return Err(CliError::Config(format!(
            "unknown suite '{name}', expected one of: {}",
            SUITE_NAMES.join(", ")
        )));
    };
    let mut failures = 0usize;
    for check in &results {
        println!("{}", check.line());
        if !check.pass {
            failures += 1;
        }
    }
    if failures > 0 {
        Err(CliError::Runtime(format!("{failures} of {} checks failed", results.len())))
    } else {
        println!("all {} checks passed", results.len());
        Ok(())
    }
}

#[derive(Serialize)]
struct BaselineSummary {
    x: Vec<f64>,
    cost: f64,
    max_separation: f64,
    delta_max: f64,
    violates_limit: bool,
}

fn cmd_baseline(config_path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(out) = out_override {
        cfg.output.dir = out.to_path_buf();
    }
    let config_dir = config_path.parent().unwrap_or(Path::new("."));
    let BuiltProblem::Power(spec) = cfg.build_problem(config_dir)? else {
        return Err(CliError::Config("baseline requires a power problem config".to_string()));
    };
    let x = baseline_qp(&spec).map_err(map_power_err)?;
    let problem = make_power_problem(spec.clone()).map_err(map_power_err)?;
    let cost = problem.cost(&x);
    let traj = simulate_network(&spec, &x).map_err(map_power_err)?;
    let sep = max_angle_separation(&traj, &spec.edges);

    let out_dir = &cfg.output.dir;
    fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", out_dir.display())))?;
    write_text(&out_dir.join("trajectory.csv"), &trajectory_csv(&traj))?;
    let summary = BaselineSummary {
        x,
        cost,
        max_separation: sep,
        delta_max: spec.delta_max,
        violates_limit: sep > spec.delta_max,
    };
    write_json(&out_dir.join("baseline.json"), &summary)?;
    println!(
        "baseline cost {:.6}, max separation {:.4} (delta_max {}), artifacts in {}",
        cost,
        sep,
        spec.delta_max,
        out_dir.display()
    );
    Ok(())
}

fn map_power_err(e: PowerError) -> CliError {
    match e {
        PowerError::InvalidSpec(_) => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    let seeds: Vec<u64> = args
        .seeds
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::Config(format!("bad seed '{}'", s.trim())))
        })
        .collect::<Result<_, _>>()?;
    if seeds.is_empty() {
        return Err(CliError::Config("at least one seed is required".to_string()));
    }
    let (base_cfg, config_dir) = load_effective(&args.run)?;
    // Surface config problems before spawning workers.
    base_cfg.solver_config()?;
    base_cfg.build_problem(&config_dir)?;
    let base_out = base_cfg.output.dir.clone();

    let results: Vec<(u64, Result<(), CliError>)> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .iter()
            .map(|&seed| {
                let mut cfg = base_cfg.clone();
                let dir = config_dir.clone();
                let out = base_out.clone();
                scope.spawn(move || {
                    cfg.solver.seed = seed;
                    cfg.output.dir = out.join(format!("seed-{seed}"));
                    (seed, execute_run(&cfg, &dir))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
    });

    let mut first_err = None;
    for (seed, result) in results {
        match result {
            Ok(()) => println!("seed {seed}: ok"),
            Err(e) => {
                println!("seed {seed}: failed: {e}");
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match first_err {
        None => Ok(()),
        Some(e) => Err(e),
    }
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Runtime(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    write_text(path, &text)
}

fn write_plotdata(dir: &Path, trace: &SolverTrace) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let mut objective = String::from("t,f\n");
    let mut violation = String::from("t,viol_h,viol_g\n");
    let mut kkt = String::from("t,kkt_gap\n");
    for row in &trace.rows {
        objective.push_str(&format!("{},{}\n", row.t, fmt_float(row.f)));
        violation.push_str(&format!(
            "{},{},{}\n",
            row.t,
            fmt_float(row.viol_h),
            fmt_float(row.viol_g)
        ));
        kkt.push_str(&format!("{},{}\n", row.t, fmt_float(row.kkt_gap)));
    }
    write_text(&dir.join("objective.csv"), &objective)?;
    write_text(&dir.join("violation.csv"), &violation)?;
    write_text(&dir.join("kkt.csv"), &kkt)
}

fn trajectory_csv(traj: &Trajectory) -> String {
    let n_buses = traj.theta.first().map_or(0, Vec::len);
    let n_gens = traj.omega.first().map_or(0, Vec::len);
    let mut out = String::from("time");
    for i in 0..n_buses {
        out.push_str(&format!(",theta_{i}"));
    }
    for i in 0..n_gens {
        out.push_str(&format!(",omega_{i}"));
    }
    out.push('\n');
    for (k, &t) in traj.times.iter().enumerate() {
        out.push_str(&fmt_float(t));
        for v in &traj.theta[k] {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        for v in &traj.omega[k] {
            out.push(',');
            out.push_str(&fmt_float(*v));
        }
        out.push('\n');
    }
    out
}
