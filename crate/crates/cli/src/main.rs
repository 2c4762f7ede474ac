//! Command-line front end: ingest decision data, test group FNMR equality,
//! compute margin-of-error intervals, and sweep simulation grids — all
//! reproducible from a single seed.
//!
//! Exit codes signal tool failure only, never a statistical outcome;
//! automation should read the JSON outputs.

mod commands;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use fnmr_audit::ftest::BootstrapConfig;
use fnmr_audit::sim::GridSpec;
use fnmr_audit::{DEFAULT_ALPHA, DEFAULT_REPLICATES};
use rand::Rng;

pub type CliError = Box<dyn std::error::Error + Send + Sync>;
pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "fnmr-audit",
    version,
    about = "Audit false non-match rate differences across demographic groups"
)]
struct Cli {
    /// Worker threads (0 = one per CPU). Results do not depend on this.
    #[arg(long, global = true, env = "FNMR_AUDIT_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct TestArgs {
    /// Decision CSV: subject_id,group_id,attempt_index,decision.
    #[arg(long)]
    input: PathBuf,

    /// Output directory for results and the run manifest.
    #[arg(long)]
    out: PathBuf,

    /// Bootstrap replicates K.
    #[arg(long, short = 'K', env = "FNMR_AUDIT_REPLICATES", default_value_t = DEFAULT_REPLICATES)]
    replicates: usize,

    /// Significance level.
    #[arg(long, env = "FNMR_AUDIT_ALPHA", default_value_t = DEFAULT_ALPHA)]
    alpha: f64,

    /// Master seed; omitted = drawn from entropy and recorded in the manifest.
    #[arg(long, env = "FNMR_AUDIT_SEED")]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Profile {
    /// Full sweep: 4000 cells, 1000 runs per cell, K = 999.
    Paper,
    /// Reduced sweep for desk-scale work: 200 runs per cell, K = 499.
    Desk,
}

#[derive(clap::Args)]
struct SimulateArgs {
    /// Output directory for grid.csv, its resume ledger, and the manifest.
    #[arg(long)]
    out: PathBuf,

    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,

    /// FNMR values, comma-separated (overrides the profile's list).
    #[arg(long, value_delimiter = ',')]
    pi: Option<Vec<f64>>,

    /// Intra-class correlation values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    rho: Option<Vec<f64>>,

    /// Subjects-per-group values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<u64>>,

    /// Attempts-per-subject values, comma-separated.
    #[arg(long, value_delimiter = ',')]
    m: Option<Vec<u64>>,

    /// Group-count values, comma-separated.
    #[arg(long = "G", value_delimiter = ',')]
    groups: Option<Vec<u64>>,

    /// Runs per cell R (overrides the profile).
    #[arg(long, short = 'R')]
    runs: Option<usize>,

    /// Bootstrap replicates K per run (overrides the profile).
    #[arg(long, short = 'K', env = "FNMR_AUDIT_REPLICATES")]
    replicates: Option<usize>,

    #[arg(long, env = "FNMR_AUDIT_ALPHA")]
    alpha: Option<f64>,

    #[arg(long, env = "FNMR_AUDIT_SEED")]
    seed: Option<u64>,

    /// Also emit series.csv of M-versus-G curves keyed by this parameter
    /// (pi, rho, n or m).
    #[arg(long)]
    series: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Bootstrap F-test of equal FNMRs across groups.
    Analyze(TestArgs),
    /// Margin-of-error interval and per-group flags.
    Moe(TestArgs),
    /// Sweep margin-of-error behavior over a parameter grid.
    Simulate(SimulateArgs),
    /// Re-run a recorded manifest; outputs reproduce byte-for-byte.
    Replay {
        /// Path to a manifest.json from an earlier run.
        #[arg(long)]
        manifest: PathBuf,
        /// Output directory for the reproduced results.
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_seed(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| rand::rng().random())
}

fn bootstrap_config(args: &TestArgs) -> CliResult<BootstrapConfig> {
    BootstrapConfig::new(args.replicates, args.alpha, resolve_seed(args.seed))
        .map_err(|e| e.to_string().into())
}

fn grid_spec(args: &SimulateArgs) -> GridSpec {
    let seed = resolve_seed(args.seed);
    let mut grid = match args.profile {
        Profile::Paper => GridSpec::paper(seed),
        Profile::Desk => GridSpec::desk(seed),
    };
    if let Some(pi) = &args.pi {
        grid.pi = pi.clone();
    }
    if let Some(rho) = &args.rho {
        grid.rho = rho.clone();
    }
    if let Some(n) = &args.n {
        grid.n = n.clone();
    }
    if let Some(m) = &args.m {
        grid.m = m.clone();
    }
    if let Some(groups) = &args.groups {
        grid.groups = groups.clone();
    }
    if let Some(runs) = args.runs {
        grid.runs = runs;
    }
    if let Some(replicates) = args.replicates {
        grid.replicates = replicates;
    }
    if let Some(alpha) = args.alpha {
        grid.alpha = alpha;
    }
    grid
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Analyze(args) => {
            let cfg = bootstrap_config(&args)?;
            commands::cmd_analyze(&args.input, cfg, &args.out)
        }
        Command::Moe(args) => {
            let cfg = bootstrap_config(&args)?;
            commands::cmd_moe(&args.input, cfg, &args.out)
        }
        Command::Simulate(args) => {
            let grid = grid_spec(&args);
            commands::cmd_simulate(grid, args.series.clone(), &args.out)
        }
        Command::Replay { manifest, out } => commands::cmd_replay(&manifest, &out),
    }
}

fn main() {
    let cli = Cli::parse();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build();
    let outcome = match pool {
        Ok(pool) => pool.install(|| run(cli)),
        Err(e) => Err(format!("cannot build thread pool: {e}").into()),
    };
    if let Err(e) = outcome {
        eprintln!("error: {e}");
        std::process::exit(2);
    }
}
