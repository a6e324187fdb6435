//! Command line front end. Exit codes: 0 success, 1 partial success (kept
//! going past dropped features under --strict), 2 invalid input, 3
//! unreachable demand, 4 fit divergence.

mod cmds;
mod manifest;

use std::path::PathBuf;
use std::process;
use std::str::FromStr;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use walkflow::io::RunConfig;
use walkflow::pvdf::PvdfFamily;
use walkflow::{Error, Result};

#[derive(Parser)]
#[command(name = "walkflow", version, about = "Pedestrian traffic assignment with bidirectional link interaction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Random seed for stochastic assignment.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fail (exit 1) when input features had to be dropped.
    #[arg(long, global = true)]
    strict: bool,
    /// Travel time family: det_symmetric, det_asymmetric, stoch_symmetric
    /// or stoch_asymmetric.
    #[arg(long, global = true, value_parser = parse_family)]
    family: Option<PvdfFamily>,
    /// Iteration cap for the equilibrium solver.
    #[arg(long = "max-iters", global = true)]
    max_iters: Option<usize>,
    /// Relative gap below which the solver stops.
    #[arg(long = "gap-tol", global = true)]
    gap_tol: Option<f64>,
    /// Multiplier applied when converting link volumes to flows.
    #[arg(long = "flow-scale", global = true)]
    flow_scale: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Build a footpath network from road centerlines.
    Generate {
        /// Centerline geometry (.geojson/.json or .csv/.wkt).
        #[arg(long)]
        geometry: PathBuf,
    },
    /// Solve user equilibrium on a network.
    Assign {
        /// Node table CSV.
        #[arg(long)]
        nodes: PathBuf,
        /// Link table CSV.
        #[arg(long)]
        links: PathBuf,
        /// Demand table CSV.
        #[arg(long)]
        demand: PathBuf,
    },
    /// Apply closures and demand overrides to a finished run, re-solve, and
    /// write the per-link volume differences.
    Scenario {
        /// Output directory of the base assign run.
        #[arg(long = "base-run")]
        base_run: PathBuf,
        /// Scenario spec TOML.
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Fit the speed law, both deterministic travel time families, and the
    /// spread model to observations.
    Calibrate {
        /// Observations CSV.
        #[arg(long)]
        observations: PathBuf,
    },
    /// Print a digest of an existing run directory.
    Report {
        /// Run directory containing a manifest.
        #[arg(long)]
        run: PathBuf,
    },
}

fn parse_family(s: &str) -> std::result::Result<PvdfFamily, String> {
    PvdfFamily::from_str(s).map_err(|e| e.to_string())
}

fn resolve_config(common: &Common, base: Option<RunConfig>) -> Result<RunConfig> {
    let mut config = match (&common.config, base) {
        (Some(path), _) => RunConfig::load(path)?,
        (None, Some(base)) => base,
        (None, None) => RunConfig::default(),
    };
    if let Some(family) = common.family {
        config.pvdf.family = family;
    }
    if let Some(seed) = common.seed {
        config.solver.seed = seed;
    }
    if let Some(iters) = common.max_iters {
        config.solver.max_iterations = iters;
    }
    if let Some(tol) = common.gap_tol {
        config.solver.gap_tolerance = tol;
    }
    if let Some(scale) = common.flow_scale {
        config.network.flow_scale = scale;
    }
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli, started: Instant) -> Result<i32> {
    let base = match &cli.command {
        // A scenario inherits the base run's resolved config; file and
        // flags still override it.
        Command::Scenario { base_run, .. } => {
            Some(manifest::config_from_value(&manifest::read(base_run)?.config)?)
        }
        _ => None,
    };
    let mut ctx = cmds::Ctx {
        config: resolve_config(&cli.common, base)?,
        config_path: cli.common.config.clone(),
        out: cli.common.out.clone(),
        strict: cli.common.strict,
        started,
    };
    match &cli.command {
        Command::Generate { geometry } => cmds::generate(&ctx, geometry),
        Command::Assign {
            nodes,
            links,
            demand,
        } => cmds::assign(&ctx, nodes, links, demand),
        Command::Scenario { base_run, scenario } => cmds::scenario(&mut ctx, base_run, scenario),
        Command::Calibrate { observations } => cmds::calibrate(&ctx, observations),
        Command::Report { run } => cmds::report(run),
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Unreachable { .. } => 3,
        Error::FitDiverged(_) => 4,
        _ => 2,
    }
}

fn main() {
    let started = Instant::now();
    let cli = Cli::parse();
    let code = match run(cli, started) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    };
    process::exit(code);
}
