use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use hippo::config::ExperimentConfig;
use hippo::error::AppError;
use hippo::experiment::{build_problem, run_sweep, summary_text, write_artifacts};
use hippo::graph_io::write_edge_list;
use hippo::verify::verify;
use hippo_core::graph::{generate_connected_gnp, DEFAULT_REDRAW_BUDGET};

#[derive(Parser)]
#[command(name = "hippo", version, about = "Hybrid gradient/Newton asynchronous primal-dual experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct ConfigArgs {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Replace the master seed and the seed list with a single seed.
    #[arg(long)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured sweep and write traces, aggregate, plots and summary.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads for the sweep (0 = all cores).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Run the desk-scale correctness checks.
    Verify {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Solve the centralized problem and print the optimum.
    SolveOracle {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Draw a connected random graph and print or write its edge list.
    GenGraph {
        #[arg(long)]
        agents: usize,
        #[arg(long, default_value_t = 0.1)]
        p: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REDRAW_BUDGET)]
        redraw_budget: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Validate a configuration and print the parsed result.
    InspectConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn load(args: &ConfigArgs) -> Result<(ExperimentConfig, String, PathBuf), AppError> {
    let text =
        fs::read_to_string(&args.config).map_err(|e| AppError::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = ExperimentConfig::parse(&text)?;
    if let Some(s) = args.seed_override {
        cfg.seed = s;
        cfg.seeds = vec![s];
    }
    let base = args.config.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, text, base))
}

fn execute(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run { cfg, out, threads } => {
            let (cfg, text, base) = load(&cfg)?;
            let problem = build_problem(&cfg, &base)?;
            let result = run_sweep(&cfg, &problem, threads)?;
            write_artifacts(&text, &problem, &result, &out)?;
            print!("{}", summary_text(&problem, &result));
            println!("\nartifacts written to {}", out.display());
        }
        Command::Verify { cfg } => {
            let (cfg, _, base) = load(&cfg)?;
            let problem = build_problem(&cfg, &base)?;
            let report = verify(&cfg, &problem)?;
            print!("{report}");
            if !report.passed() {
                let failed = report.checks.iter().filter(|c| !c.passed).count();
                return Err(AppError::Verification(format!("{failed} check(s) failed")));
            }
        }
        Command::SolveOracle { cfg } => {
            let (cfg, _, base) = load(&cfg)?;
            let p = build_problem(&cfg, &base)?;
            let x: Vec<String> = p.oracle.x.iter().map(|v| format!("{v:e}")).collect();
            println!("x* = [{}]", x.join(", "));
            println!("optimal value = {:e}", p.oracle.value);
            println!("fixed-point residual = {:e}", p.oracle.residual);
            println!("iterations = {}", p.oracle.iterations);
        }
        Command::GenGraph { agents, p, seed, redraw_budget, out } => {
            let topo = generate_connected_gnp(agents, p, seed, redraw_budget).map_err(AppError::from_core)?;
            let text = write_edge_list(&topo);
            match out {
                Some(path) => fs::write(path, text)?,
                None => print!("{text}"),
            }
        }
        Command::InspectConfig { cfg } => {
            let (cfg, _, _) = load(&cfg)?;
            println!("{cfg:#?}");
            let labels: Vec<String> = cfg.sweep_points().iter().map(|p| p.label()).collect();
            println!("sweep points: {}", labels.join(", "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
