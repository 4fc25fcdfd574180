//! `teq`: randomization inference for quantiles of individual treatment
//! effects in completely randomized and stratified experiments.
//!
//! Subcommands: `test` (one hypothesis), `bounds` (simultaneous lower
//! bounds for a group's effect quantiles), `simulate` (replicated synthetic
//! comparison of methods). All output is CSV on stdout with `#` header
//! comments carrying the configuration; identical configuration and seed
//! give byte-identical output.

mod config;
mod ingest;
mod run;
mod simulate;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Direction, GroupArg, Method, NullModeArg, Solver, Weights};
use run::{Engine, EngineConfig};
use teq::intervals::{self, Group};

/// A command failure with the exit code it maps to: 2 for validation
/// problems, 3 for solver or inversion failures.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn validation(message: String) -> Self {
        Failure { code: 2, message }
    }

    pub fn from_io(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            Failure {
                code: 0,
                message: String::new(),
            }
        } else {
            Failure {
                code: 2,
                message: e.to_string(),
            }
        }
    }

    pub fn from_teq(e: teq::Error) -> Self {
        use teq::Error::*;
        let code = match e {
            InversionFailed | LinearProgram(_) | EnumerationCap { .. } => 3,
            _ => 2,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "teq",
    about = "Randomization inference for treatment effect quantiles",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StatOpts {
    /// Input CSV with header unit_id,z,y[,stratum]
    #[arg(long)]
    data: PathBuf,
    /// Significance level per group
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, value_enum, default_value_t = Method::Single)]
    method: Method,
    /// Rank transformations, e.g. stephenson:2,6,10,30 or poly:2,6,10
    #[arg(long, default_value = "stephenson:2")]
    transforms: String,
    #[arg(long, value_enum, default_value_t = Weights::Scheme1)]
    weights: Weights,
    /// Allocation solver for stratified methods (defaults: bnb for comb1,
    /// dp for single/comb2)
    #[arg(long, value_enum)]
    solver: Option<Solver>,
    /// Null distribution construction
    #[arg(long, value_enum, default_value_t = NullModeArg::Auto)]
    null: NullModeArg,
    /// Monte-Carlo draws when the null is not enumerated
    #[arg(long, default_value_t = teq::nulldist::DEFAULT_MC_DRAWS)]
    mc_draws: usize,
    /// Master seed (tie-breaking shuffle, null draws)
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Direction::Greater)]
    direction: Direction,
}

#[derive(Subcommand)]
enum Command {
    /// Test one quantile hypothesis and print k,c,method,p_value,exactness
    Test {
        #[command(flatten)]
        opts: StatOpts,
        /// Quantile index within the group
        #[arg(long)]
        k: usize,
        /// Threshold
        #[arg(long)]
        c: f64,
        #[arg(long, value_enum, default_value_t = GroupArg::Treated)]
        group: GroupArg,
    },
    /// Simultaneous lower bounds for a group's effect quantiles
    Bounds {
        #[command(flatten)]
        opts: StatOpts,
        #[arg(long, value_enum, default_value_t = GroupArg::Treated)]
        group: GroupArg,
    },
    /// Replicated synthetic comparison of methods
    Simulate {
        #[arg(long, value_enum)]
        scenario: simulate::Scenario,
        /// Treated-outcome standard deviation
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Total sample size (default: 100 for cre, 1000 for sre scenarios)
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, value_enum, default_value_t = Weights::Scheme1)]
        weights: Weights,
        #[arg(long, value_enum)]
        solver: Option<Solver>,
        #[arg(long, default_value_t = teq::nulldist::DEFAULT_MC_DRAWS)]
        mc_draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    match dispatch(cli, &mut out).and_then(|()| flush(&mut out)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) if f.code == 0 => ExitCode::SUCCESS, // downstream closed the pipe
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn flush(out: &mut impl Write) -> Result<(), Failure> {
    out.flush().map_err(Failure::from_io)
}

fn engine_config(opts: &StatOpts) -> Result<EngineConfig, Failure> {
    let transforms = config::parse_transforms(&opts.transforms).map_err(Failure::validation)?;
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Failure::validation(format!(
            "alpha must be in (0, 1), got {}",
            opts.alpha
        )));
    }
    Ok(EngineConfig {
        method: opts.method,
        transforms,
        weights: opts.weights,
        solver: opts.solver,
        null_mode: opts.null,
        mc_draws: opts.mc_draws,
        seed: opts.seed,
    })
}

/// Load the dataset and orient it for the requested group and direction:
/// control-group hypotheses flip treatment labels and outcome signs, and
/// direction=less negates outcomes (and thresholds, handled by the caller).
fn oriented_dataset(
    opts: &StatOpts,
    group: GroupArg,
    direction: Direction,
) -> Result<teq::Dataset, Failure> {
    let data = ingest::ingest(&opts.data, opts.seed)?;
    let data = match direction {
        Direction::Greater => data,
        Direction::Less => data.negated_outcomes().map_err(Failure::from_teq)?,
    };
    match group {
        GroupArg::Control => data.flipped().map_err(Failure::from_teq),
        _ => Ok(data),
    }
}

fn dispatch(cli: Cli, out: &mut impl Write) -> Result<(), Failure> {
    match cli.command {
        Command::Test { opts, k, c, group } => cmd_test(&opts, k, c, group, out),
        Command::Bounds { opts, group } => cmd_bounds(&opts, group, out),
        Command::Simulate {
            scenario,
            sigma,
            n,
            reps,
            alpha,
            weights,
            solver,
            mc_draws,
            seed,
        } => cmd_simulate(
            simulate::SimulateOpts {
                scenario,
                sigma,
                n,
                reps,
                alpha,
                weights,
                solver,
                mc_draws,
                seed,
            },
            out,
        ),
    }
}

fn cmd_test(
    opts: &StatOpts,
    k: usize,
    c: f64,
    group: GroupArg,
    out: &mut impl Write,
) -> Result<(), Failure> {
    if group == GroupArg::All {
        return Err(Failure::validation(
            "test runs on one group; use --group treated or control".to_string(),
        ));
    }
    let cfg = engine_config(opts)?;
    let data = oriented_dataset(opts, group, opts.direction)?;
    let c_oriented = match opts.direction {
        Direction::Greater => c,
        Direction::Less => -c,
    };
    let engine = Engine::build(&cfg, &data)?;
    let (p, exactness) = engine.pvalue(&data, k, c_oriented).map_err(Failure::from_teq)?;
    writeln!(out, "k,c,method,p_value,exactness").map_err(Failure::from_io)?;
    writeln!(out, "{},{},{},{},{}", k, c, opts.method.label(), p, exactness)
        .map_err(Failure::from_io)?;
    Ok(())
}

fn bounds_header(
    out: &mut impl Write,
    opts: &StatOpts,
    cfg: &EngineConfig,
    group: GroupArg,
    level: f64,
) -> Result<(), Failure> {
    writeln!(
        out,
        "# teq bounds: method={} transforms={} weights={} solver={} null={:?} mc_draws={} \
         seed={} group={:?} direction={:?} level={}",
        opts.method.label(),
        config::transforms_label(&cfg.transforms),
        match opts.weights {
            Weights::Scheme1 => "scheme1",
            Weights::Scheme2 => "scheme2",
        },
        opts.solver.map(|s| s.label()).unwrap_or("default"),
        opts.null,
        opts.mc_draws,
        opts.seed,
        group,
        opts.direction,
        level,
    )
    .map_err(Failure::from_io)
}

fn print_table(out: &mut impl Write, table: &teq::intervals::BoundsTable) -> Result<(), Failure> {
    for e in &table.entries {
        writeln!(
            out,
            "{},{},{},{},{}",
            e.k,
            table.group.label(),
            e.bound,
            if e.closed { "closed" } else { "open" },
            e.p_at_bound
        )
        .map_err(Failure::from_io)?;
    }
    Ok(())
}

fn cmd_bounds(opts: &StatOpts, group: GroupArg, out: &mut impl Write) -> Result<(), Failure> {
    let cfg = engine_config(opts)?;
    match group {
        GroupArg::Treated | GroupArg::Control => {
            let data = oriented_dataset(opts, group, opts.direction)?;
            let engine = Engine::build(&cfg, &data)?;
            let g = if group == GroupArg::Treated {
                Group::Treated
            } else {
                Group::Control
            };
            let table = engine.bounds(&data, g, opts.alpha)?;
            bounds_header(out, opts, &cfg, group, table.level)?;
            writeln!(out, "k,group,lower_bound,endpoint,p_at_bound").map_err(Failure::from_io)?;
            print_table(out, &table)?;
        }
        GroupArg::All => {
            let treated_data = oriented_dataset(opts, GroupArg::Treated, opts.direction)?;
            let control_data = oriented_dataset(opts, GroupArg::Control, opts.direction)?;
            let treated_engine = Engine::build(&cfg, &treated_data)?;
            let control_engine = Engine::build(&cfg, &control_data)?;
            let treated = treated_engine.bounds(&treated_data, Group::Treated, opts.alpha)?;
            let control = control_engine.bounds(&control_data, Group::Control, opts.alpha)?;
            let pooled = intervals::pool_confidence(&treated, &control).map_err(Failure::from_teq)?;
            bounds_header(out, opts, &cfg, group, pooled.level)?;
            writeln!(
                out,
                "# pooled treated+control prediction bounds; overall level 1-2*alpha = {}",
                pooled.level
            )
            .map_err(Failure::from_io)?;
            writeln!(out, "k,group,lower_bound,endpoint,p_at_bound").map_err(Failure::from_io)?;
            print_table(out, &pooled)?;
        }
    }
    Ok(())
}

fn cmd_simulate(opts: simulate::SimulateOpts, out: &mut impl Write) -> Result<(), Failure> {
    let rows = simulate::run(&opts)?;
    writeln!(
        out,
        "# teq simulate: scenario={} sigma={} n={} reps={} alpha={} weights={} solver={} \
         mc_draws={} seed={}",
        opts.scenario.label(),
        opts.sigma,
        opts.n.unwrap_or_else(|| opts.scenario.default_n()),
        opts.reps,
        opts.alpha,
        match opts.weights {
            Weights::Scheme1 => "scheme1",
            Weights::Scheme2 => "scheme2",
        },
        opts.solver.map(|s| s.label()).unwrap_or("default"),
        opts.mc_draws,
        opts.seed,
    )
    .map_err(Failure::from_io)?;
    writeln!(out, "scenario,method,k,median_lower_bound").map_err(Failure::from_io)?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.scenario, r.method, r.k, r.median_lower_bound)
            .map_err(Failure::from_io)?;
    }
    Ok(())
}
