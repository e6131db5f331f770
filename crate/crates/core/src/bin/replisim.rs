use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use replisim::accounting::{EnergyMode, RewardWeights};
use replisim::harness::{self, Mode, RunConfig};

#[derive(Parser)]
#[command(name = "replisim", version, about = "Multi-datacenter replication simulator with a DQN placement agent")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train, evaluate or run a baseline on a scenario.
    Run(RunArgs),
    /// Tabulate reports from runs on the same scenario.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// Also write the table as CSV.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum EnergyArg {
    Literal,
    Integrated,
}

#[derive(Clone, Copy, ValueEnum)]
enum StateExtra {
    Replicas,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// train, eval, baseline:never, baseline:random or baseline:nearest
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.01)]
    beta: f64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long, default_value_t = 100_000)]
    queries: u64,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum, default_value = "literal")]
    energy: EnergyArg,
    /// Queries per episode; the platform is reset between episodes.
    #[arg(long, default_value_t = harness::DEFAULT_EPISODE_QUERIES)]
    episode_queries: u64,
    /// Seconds between periodic training batches.
    #[arg(long, default_value_t = 10.0)]
    batch_period: f64,
    /// Where training saves its weights (default <out>/checkpoint.json).
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Checkpoint to evaluate.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Write the generated workload to <out>/trace.csv.
    #[arg(long)]
    trace: bool,
    /// Write every replication decision to <out>/decisions.csv.
    #[arg(long)]
    decision_log: bool,
    /// Append extra features to the agent state.
    #[arg(long, value_enum)]
    state_extra: Option<StateExtra>,
    /// Run several seeds concurrently, e.g. seeds=1..5 (inclusive).
    #[arg(long)]
    sweep: Option<String>,
}

fn run(args: RunArgs) -> replisim::Result<()> {
    let mode: Mode = args.mode.parse()?;
    let config = RunConfig {
        seed: args.seed,
        weights: RewardWeights::new(args.alpha, args.beta)?,
        energy_mode: match args.energy {
            EnergyArg::Literal => EnergyMode::Literal,
            EnergyArg::Integrated => EnergyMode::Integrated,
        },
        queries: args.queries,
        episode_queries: args.episode_queries,
        batch_period: args.batch_period,
        extra_replicas: args.state_extra.is_some(),
        checkpoint: args.checkpoint,
        load: args.load,
        trace: args.trace,
        decision_log: args.decision_log,
        ..RunConfig::new(args.scenario, mode, args.out)
    };
    match args.sweep {
        Some(spec) => {
            let seeds = harness::parse_sweep(&spec)?;
            for exp in harness::run_sweep(&config, &seeds)? {
                summary_line(&exp.report);
            }
        }
        None => summary_line(&harness::run_experiment(&config)?.report),
    }
    Ok(())
}

fn summary_line(r: &harness::ExperimentReport) {
    println!(
        "{} seed={} queries={} mean_reward={:.6} penalties={} energy_j={:.4} total_cost={:.6}",
        r.policy, r.seed, r.summary.queries, r.summary.mean_reward, r.summary.penalties, r.summary.energy_j, r.summary.total_cost
    );
}

fn error_line(message: &str, kind: &str) {
    let line = serde_json::json!({ "error": message, "kind": kind });
    eprintln!("{line}");
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("REPLISIM_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("invalid arguments").trim_start_matches("error: ");
            error_line(first, "usage");
            return ExitCode::from(2);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Compare { reports, out } => harness::compare_runs(&reports).and_then(|cmp| {
            print!("{cmp}");
            match out {
                Some(path) => harness::write_comparison(&cmp, &path),
                None => Ok(()),
            }
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error_line(&e.to_string(), e.kind());
            ExitCode::FAILURE
        }
    }
}

