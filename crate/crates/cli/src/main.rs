//! `fluidnav` command-line entry point.
//!
//! Exit codes: 0 success, 1 invalid input (unreadable file, syntax, schema
//! or regime error), 2 the audit found a safety violation or the run used
//! up its step budget without converging.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use fluidnav::io::{
    audit_exit_code, dump_field_grid, field_at, parse_scenario, read_trajectory, render_plot,
    write_grid, write_trajectory, Bounds, EXIT_INVALID_INPUT, EXIT_SUCCESS, EXIT_UNSAFE,
};
use fluidnav::{audit, run, ClusterId, RunError, SafetyReport, ScenarioSpec, TrajectoryLog};

#[derive(Parser)]
#[command(
    name = "fluidnav",
    version,
    about = "Potential-flow navigation for multi-agent clusters"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario, write its trajectory table and audit it.
    Run {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also render the run as SVG.
        #[arg(long)]
        plot: Option<PathBuf>,
    },
    /// Audit a trajectory table against the scenario that produced it.
    Audit {
        table: PathBuf,
        #[arg(long)]
        spec: PathBuf,
    },
    /// Render a trajectory table as SVG.
    Plot {
        table: PathBuf,
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Sample the potential and stream function a cluster navigates by at a
    /// given time.
    Field(FieldArgs),
}

#[derive(Args)]
struct FieldArgs {
    scenario: PathBuf,
    /// Time in seconds; the nearest logged tick is used.
    #[arg(long)]
    time: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    cluster: ClusterId,
    /// Points per axis.
    #[arg(long, default_value_t = 101)]
    resolution: usize,
    /// x_min,x_max,y_min,y_max in meters; defaults to the run's extent plus 0.5 m.
    #[arg(long, value_delimiter = ',', num_args = 4)]
    bounds: Option<Vec<f64>>,
}

fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    parse_scenario(path).with_context(|| format!("cannot load scenario {}", path.display()))
}

/// Run to completion; a run that exhausted its budget still yields its log.
fn simulate(spec: &ScenarioSpec) -> Result<(TrajectoryLog, bool)> {
    match run(spec) {
        Ok(log) => Ok((log, true)),
        Err(RunError::StepBudgetExhausted { budget, log }) => {
            log::warn!("goal not reached within {budget} steps");
            Ok((*log, false))
        }
        Err(e) => Err(e).context("simulation failed"),
    }
}

fn print_report(report: &SafetyReport) {
    let show = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.6} m"));
    println!("ticks: {}", report.ticks);
    println!(
        "min cylinder clearance: {}",
        show(report.min_cylinder_clearance)
    );
    println!(
        "min distance within clusters: {}",
        show(report.min_distance_within_clusters)
    );
    println!(
        "min distance across clusters: {}",
        show(report.min_distance_across_clusters)
    );
    println!("max stream drift: {:.3e} m", report.max_psi_drift);
    println!("failure rebuilds: {}", report.failure_rebuilds);
    if !report.goal_residuals.is_empty() {
        println!("goal residual sum: {:.6} m", report.goal_residual_sum());
    }
    let holds: usize = report.hold_counts.values().sum();
    let fallbacks: usize = report.fallback_counts.values().sum();
    println!("held steps: {holds}, fallback steps: {fallbacks}");
    println!("violations: {}", report.violations.len());
    for violation in report.violations.iter().take(20) {
        println!("  {violation}");
    }
    if report.violations.len() > 20 {
        println!("  ... {} more", report.violations.len() - 20);
    }
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run {
            scenario,
            out,
            plot,
        } => {
            let spec = load_spec(&scenario)?;
            let (log, converged) = simulate(&spec)?;
            write_trajectory(&log, &out)?;
            if let Some(plot) = plot {
                render_plot(&log, &spec, &plot)?;
            }
            let report = audit(&log, &spec);
            print_report(&report);
            if !converged {
                println!("step budget exhausted before convergence");
                return Ok(EXIT_UNSAFE);
            }
            Ok(audit_exit_code(&report))
        }
        Command::Audit { table, spec } => {
            let spec = load_spec(&spec)?;
            let log = read_trajectory(&table)?;
            let report = audit(&log, &spec);
            print_report(&report);
            Ok(audit_exit_code(&report))
        }
        Command::Plot { table, spec, out } => {
            let spec = load_spec(&spec)?;
            let log = read_trajectory(&table)?;
            if log.ticks.is_empty() {
                bail!("{} contains no ticks", table.display());
            }
            render_plot(&log, &spec, &out)?;
            Ok(EXIT_SUCCESS)
        }
        Command::Field(args) => field(args),
    }
}

fn field(args: FieldArgs) -> Result<i32> {
    if args.resolution < 2 {
        bail!("--resolution must be at least 2");
    }
    let spec = load_spec(&args.scenario)?;
    if !spec.navigating_clusters().contains(&args.cluster) {
        bail!(
            "cluster {} does not navigate by a field in this scenario",
            args.cluster
        );
    }
    let (log, _) = simulate(&spec)?;
    let end = log.ticks.last().map_or(spec.t0, |t| t.time);
    if !(spec.t0..=end).contains(&args.time) {
        bail!(
            "--time {} is outside the run [{}, {end}]",
            args.time,
            spec.t0
        );
    }
    let field = field_at(&log, &spec, args.cluster, args.time)
        .context("no field recorded for that cluster and time")?;
    let bounds = match args.bounds.as_deref() {
        Some(&[x_min, x_max, y_min, y_max]) => {
            if !(x_min < x_max && y_min < y_max) {
                bail!("--bounds must satisfy x_min < x_max and y_min < y_max");
            }
            Bounds {
                x_min,
                x_max,
                y_min,
                y_max,
            }
        }
        _ => extent(&log, &spec),
    };
    let grid = dump_field_grid(&field, bounds, args.resolution);
    write_grid(&grid, &args.out)?;
    Ok(EXIT_SUCCESS)
}

fn extent(log: &TrajectoryLog, spec: &ScenarioSpec) -> Bounds {
    let points = log
        .ticks
        .iter()
        .flat_map(|t| t.agents.iter().map(|a| a.position))
        .chain(spec.agents.iter().filter_map(|a| a.goal));
    let (mut x_min, mut x_max, mut y_min, mut y_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for z in points.filter(|z| z.re.is_finite() && z.im.is_finite()) {
        x_min = x_min.min(z.re);
        x_max = x_max.max(z.re);
        y_min = y_min.min(z.im);
        y_max = y_max.max(z.im);
    }
    let pad = 0.5;
    Bounds {
        x_min: x_min - pad,
        x_max: x_max + pad,
        y_min: y_min - pad,
        y_max: y_max + pad,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = execute(cli.command).unwrap_or_else(|err| {
        eprintln!("error: {err:#}");
        EXIT_INVALID_INPUT
    });
    ExitCode::from(code as u8)
}
