use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use polyplan_cli::*;
use polyplan_core::planner::PlannerConfig;

#[derive(Parser)]
#[command(name = "polyplan", version, about = "Polytopic action-set planning for a torque-limited pendulum")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Grow the region library for a system config.
    Decompose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the config's decomposition seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build and calibrate the mode adjacency graph of a library.
    Graph {
        #[arg(long)]
        library: PathBuf,
        #[arg(long, default_value_t = 9.0)]
        lmax: f64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Search for a trajectory between two states.
    Plan {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        library: PathBuf,
        /// Initial state as "q,qdot".
        #[arg(long, allow_hyphen_values = true)]
        x0: String,
        /// Goal state as "q,qdot".
        #[arg(long, allow_hyphen_values = true)]
        xf: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        kmax: usize,
        #[arg(long, default_value_t = 12)]
        lmaxwalk: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Solve every candidate instead of skipping known-dead prefixes.
        #[arg(long)]
        no_prefix_cache: bool,
    },
    /// Re-verify a solution file from its raw parameters.
    Validate {
        solution: PathBuf,
        #[arg(long)]
        config: PathBuf,
        /// Region library for the membership check.
        #[arg(long)]
        library: Option<PathBuf>,
    },
    /// Run the full pipeline for every row of a manifest and emit CSV.
    Bench {
        manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Decompose { config, out, seed } => {
            let report = cmd_decompose(&config, &out, seed)?;
            println!(
                "regions: {}  audit pass rate: {:.6}  worst region violation rate: {:.4}",
                report.regions, report.audit_pass_rate, report.worst_region_rate
            );
        }
        Command::Graph { library, lmax, out, seed } => {
            let g = cmd_graph(&library, lmax, &out, seed)?;
            println!("edges: {}  mu: {:.6e}  sigma: {:.6e}", g.edges.len(), g.calibration.mu, g.calibration.sigma);
        }
        Command::Plan { graph, library, x0, xf, out, kmax, lmaxwalk, seed, no_prefix_cache } => {
            let cfg = PlannerConfig { k_max: kmax, l_max: lmaxwalk, prefix_cache_enabled: !no_prefix_cache, rng_seed: seed };
            let started = std::time::Instant::now();
            let sol = cmd_plan(&graph, &library, parse_state(&x0)?, parse_state(&xf)?, &out, &cfg)?;
            println!(
                "pi: {:?}  k: {}  lT: {} s  wall: {:.1} ms",
                sol.pi,
                sol.k,
                sol.total_time,
                started.elapsed().as_secs_f64() * 1e3
            );
        }
        Command::Validate { solution, config, library } => {
            let report = cmd_validate(&solution, &config, library.as_deref())?;
            for c in &report.checks {
                let status = match c.passed {
                    Some(true) => "pass",
                    Some(false) => "FAIL",
                    None => "skip",
                };
                println!("{status} {:<12} value {:.3e} limit {:.3e}", c.name, c.value, c.limit);
            }
            if !report.passed() {
                return Err(CliError::Validation("one or more checks failed".into()));
            }
        }
        Command::Bench { manifest, out } => {
            let outcome = cmd_bench(&manifest)?;
            match out {
                Some(path) => write_atomic(&path, outcome.csv.as_bytes())?,
                None => print!("{}", outcome.csv),
            }
            if let Some(code) = outcome.failure {
                eprintln!("error: some bench rows failed");
                std::process::exit(code);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(2);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
