//! `rruc`: scenario runner for the relax-and-round commitment engine.
//!
//! Exit codes: 0 success, 1 configuration or usage error (including failed
//! verification), 2 infeasible fleet.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rruc_core::hydro::HydroOrdering;

#[derive(Debug, Parser)]
#[command(name = "rruc", version, about = "Relax-and-round unit commitment")]
struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate fleet, hydro and load CSVs plus a scenario file.
    Synth(SynthArgs),
    /// Rolling simulation from a scenario file.
    Run(RunArgs),
    /// Hydro pre-commitment on a scenario's load.
    Hydro(HydroArgs),
    /// Cost and runtime against the number of future demand points.
    SweepFpm(SweepArgs),
    /// Runtime scaling against fleet size or hydro horizon.
    Bench(BenchArgs),
    /// Property suites: hydro gap bound, hydro runtime, dispatch optimality.
    Verify(VerifyArgs),
    /// Histogram, polynomial fits and scaling exponent from run outputs.
    Analyze(AnalyzeArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON generation spec; defaults apply to omitted fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Load periods (overrides the spec).
    #[arg(long)]
    periods: Option<usize>,
    /// Replication factor (overrides the spec).
    #[arg(long)]
    replicate: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Periods to simulate (overrides the scenario horizon).
    #[arg(long)]
    periods: Option<usize>,
    /// Write the first period's relaxation as JSON.
    #[arg(long)]
    dump_model: bool,
    /// Resample the load onto this period length, minutes.
    #[arg(long)]
    resample: Option<f64>,
}

#[derive(Debug, Args)]
pub struct HydroArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Balance only the first N periods.
    #[arg(long)]
    periods: Option<usize>,
    #[arg(long)]
    resample: Option<f64>,
    /// Placement order (only the default carries the gap guarantee).
    #[arg(long, value_enum, default_value = "kappa-sqrt-pi")]
    ordering: OrderingArg,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum OrderingArg {
    KappaSqrtPi,
    Kappa,
    Energy,
}

impl From<OrderingArg> for HydroOrdering {
    fn from(o: OrderingArg) -> Self {
        match o {
            OrderingArg::KappaSqrtPi => HydroOrdering::KappaSqrtPi,
            OrderingArg::Kappa => HydroOrdering::Kappa,
            OrderingArg::Energy => HydroOrdering::Energy,
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Future demand point counts.
    #[arg(long, value_delimiter = ',', default_value = "0,1,2,3,4,5")]
    k: Vec<usize>,
    /// Scenario to sweep; a synthetic one per seed when omitted.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Number of consecutive seeds starting at --seed (synthetic only).
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[arg(long, default_value_t = 288)]
    periods: usize,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Fleet sizes (multiples of the base fleet), or horizons with --hydro.
    #[arg(long, value_delimiter = ',', default_value = "42,84,168,336")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 288)]
    periods: usize,
    /// Time the hydro balance over horizons of --sizes periods instead.
    #[arg(long)]
    hydro: bool,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Hydro optimality-gap bound on small random instances.
    #[arg(long)]
    theorem1: bool,
    /// Hydro runtime growth under doubling horizons.
    #[arg(long)]
    theorem2: bool,
    /// Dispatch optimality certificates on random instances.
    #[arg(long)]
    dispatch: bool,
    #[arg(long, default_value_t = 200)]
    instances: usize,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Run-record CSV.
    #[arg(long)]
    records: PathBuf,
    /// Histogram bins per axis.
    #[arg(long, default_value_t = 15)]
    bins: usize,
    /// Bench CSV (`size,seconds`) for the scaling exponent.
    #[arg(long)]
    bench: Option<PathBuf>,
}

fn threads_from_env() -> anyhow::Result<usize> {
    match std::env::var("RRUC_THREADS") {
        Ok(v) => {
            let n: usize = v
                .parse()
                .map_err(|_| rruc_core::Error::Config(format!("RRUC_THREADS={v:?} is not a count")))?;
            if n == 0 {
                return Err(rruc_core::Error::Config("RRUC_THREADS must be positive".into()).into());
            }
            Ok(n)
        }
        Err(_) => Ok(1),
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    let threads = threads_from_env()?;
    rayon::ThreadPoolBuilder::new().num_threads(threads).build_global().ok();
    std::fs::create_dir_all(&cli.out_dir)?;
    let ctx = commands::Context {
        seed: cli.seed,
        out_dir: cli.out_dir,
        threads,
    };
    match cli.command {
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Run(a) => commands::run(&ctx, a),
        Command::Hydro(a) => commands::hydro(&ctx, a),
        Command::SweepFpm(a) => commands::sweep_fpm(&ctx, a),
        Command::Bench(a) => commands::bench(&ctx, a),
        Command::Verify(a) => commands::verify(&ctx, a),
        Command::Analyze(a) => commands::analyze(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<rruc_core::Error>() {
                Some(err) if err.is_infeasibility() => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
