//! Command-line front end: solve flows, run cascades, pick attack sets,
//! generate instances, benchmark the two cascade engines, and export the
//! figure-data tables.
//!
//! Exit codes: 0 success, 2 input error, 3 numerical error, 4 cap exceeded.
//! Errors are printed to stderr as one JSON object per failure.

mod commands;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridcascade::Error;

#[derive(Parser)]
#[command(
    name = "gridcascade",
    version,
    about = "DC power-grid cascade simulator"
)]
struct Cli {
    /// Omit the timestamp field from JSON outputs (reruns become
    /// byte-identical).
    #[arg(long, global = true)]
    no_timestamp: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the flow equations of an instance and report feasibility.
    Solve(SolveArgs),
    /// Run a cascade from an initial failure set; writes the trace and its
    /// severity metrics.
    Cascade(CascadeArgs),
    /// Choose an initial failure set (heuristic, random, or exhaustive) and
    /// run its cascade.
    Attack(AttackArgs),
    /// Generate a synthetic instance (random ensemble or named fixture).
    Generate(GenerateArgs),
    /// Compare wall times of the two cascade engines on seeded workloads.
    Bench(BenchArgs),
    /// Export the analysis tables (distance vs resistance scatter,
    /// single-failure flow change ratios, attack yields) as CSV.
    Figdata(FigdataArgs),
    /// Recompute severity metrics for a stored trace.
    Metrics(MetricsArgs),
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    input: String,
    #[arg(long)]
    output: String,
    /// Proportionally shed imbalanced components instead of rejecting them.
    #[arg(long)]
    shed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Cfe,
    CfePb,
}

#[derive(Args)]
struct CascadeArgs {
    #[arg(long)]
    input: String,
    /// Trace output path; metrics land next to it as `<output>.metrics.json`.
    #[arg(long)]
    output: String,
    /// Initial failure set: comma-separated line ids.
    #[arg(long, value_delimiter = ',')]
    f0: Vec<usize>,
    #[arg(long, value_enum, default_value = "cfe-pb")]
    engine: EngineArg,
    /// Reject instances whose pre-failure flows already violate capacities.
    #[arg(long)]
    strict: bool,
    #[arg(long)]
    shed: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    MvesRb,
    Random,
    BruteForce,
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    input: String,
    #[arg(long)]
    output: String,
    #[arg(long, value_enum, default_value = "mves-rb")]
    method: MethodArg,
    /// Initial failure budget.
    #[arg(long, default_value_t = 1)]
    k: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Subset cap for the exhaustive method.
    #[arg(long)]
    cap: Option<u128>,
    /// Trace output path (default: `<output>.trace.json`).
    #[arg(long)]
    trace_output: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnsembleArg {
    Er,
    Ws,
    Ba,
}

#[derive(Clone, Copy, ValueEnum)]
enum DistArg {
    Normal,
    Pm1,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    output: String,
    /// Random ensemble family (mutually exclusive with --fixture).
    #[arg(long, value_enum)]
    ensemble: Option<EnsembleArg>,
    #[arg(long, default_value_t = 1374)]
    n: usize,
    /// Edge probability (er) or rewiring probability (ws).
    #[arg(long)]
    p: Option<f64>,
    /// Neighbor count (ws) or attachment count (ba).
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Supply/demand pair count for the +-1 operating point.
    #[arg(long)]
    nsd: Option<usize>,
    #[arg(long, value_enum, default_value = "normal")]
    dist: DistArg,
    /// Factor of safety: capacity = fos * initial |flow|.
    #[arg(long, default_value_t = 1.1)]
    fos: f64,
    /// Named fixture instead of an ensemble: obs51, obs61, obs62, obs63,
    /// obs64_base, obs64_c_minus, obs64_x_minus.
    #[arg(long)]
    fixture: Option<String>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    x1: Option<f64>,
    #[arg(long)]
    x2: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    output: String,
    /// Grid sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "100,200")]
    sizes: Vec<usize>,
    /// Factor-of-safety levels, comma separated.
    #[arg(long = "fos-levels", value_delimiter = ',', default_value = "1.05,1.1")]
    fos_levels: Vec<f64>,
    #[arg(long, default_value_t = 5)]
    trials: usize,
    /// Edge probability of the benchmark ensembles (default: scales with n
    /// to stay connected).
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct FigdataArgs {
    /// Directory for the CSV files (created if missing).
    #[arg(long = "output-dir")]
    output_dir: String,
    #[arg(long, value_delimiter = ',', default_value = "er,ws,ba")]
    models: Vec<EnsembleArg>,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Random single-failure events per graph.
    #[arg(long, default_value_t = 40)]
    trials: usize,
    #[arg(long, default_value_t = 10)]
    nsd: usize,
    #[arg(long, default_value_t = 1.1)]
    fos: f64,
    /// Attack budgets 1..=k-max in the yield comparison.
    #[arg(long = "k-max", default_value_t = 10)]
    k_max: usize,
    /// Random attack draws per budget.
    #[arg(long = "attack-draws", default_value_t = 20)]
    attack_draws: usize,
    /// Subset cap for the exhaustive attack column.
    #[arg(long)]
    cap: Option<u128>,
}

#[derive(Args)]
struct MetricsArgs {
    #[arg(long)]
    input: String,
    /// Stored trace (the cascade command's output or an attack trace).
    #[arg(long)]
    trace: String,
    /// Output path; a .csv suffix selects a one-row CSV instead of JSON.
    #[arg(long)]
    output: String,
}

fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Numerical(_) | Error::CutEdge { .. } | Error::Grouping { .. } => 3,
        Error::TooLarge { .. } => 4,
        _ => 2,
    }
}

fn error_kind(err: &Error) -> &'static str {
    match err {
        Error::Validation { .. } => "validation",
        Error::Imbalance { .. } => "imbalance",
        Error::Numerical(_) => "numerical",
        Error::CutEdge { .. } => "cut_edge",
        Error::StaleVersion { .. } => "stale_version",
        Error::Grouping { .. } => "grouping",
        Error::InfeasibleInitialState { .. } => "infeasible_initial_state",
        Error::TooLarge { .. } => "too_large",
        Error::ParamRange { .. } => "param_range",
        Error::DisconnectedEnsemble { .. } => "disconnected_ensemble",
        Error::NonUnitReactance { .. } => "non_unit_reactance",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
    }
}

fn main() {
    env_logger::init();
    if let Ok(threads) = std::env::var("GRIDCASCADE_THREADS") {
        if let Ok(threads) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global();
        }
    }

    let cli = Cli::parse();
    let stamp = !cli.no_timestamp;
    let result = match cli.command {
        Command::Solve(args) => commands::solve(&args, stamp),
        Command::Cascade(args) => commands::cascade(&args, stamp),
        Command::Attack(args) => commands::attack(&args, stamp),
        Command::Generate(args) => commands::generate(&args, stamp),
        Command::Bench(args) => commands::bench(&args),
        Command::Figdata(args) => commands::figdata(&args),
        Command::Metrics(args) => commands::metrics(&args, stamp),
    };
    if let Err(err) = result {
        let payload = serde_json::json!({
            "error": { "kind": error_kind(&err), "message": err.to_string() }
        });
        eprintln!("{payload}");
        std::process::exit(exit_code(&err));
    }
}
