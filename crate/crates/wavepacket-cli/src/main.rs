use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use wavepacket_cli::describe::{describe, list_scenarios, SHIPPED};
use wavepacket_cli::runner::run_scenario;
use wavepacket_cli::scenario::{parse_scenario, parse_scenario_str, Scenario};

/// Scenario-driven wave-packet laboratory: spectral Schroedinger evolution,
/// multipole analysis, trajectory classification, effective Newton-like
/// dynamics and phase-space / pilot-wave cross-checks.
#[derive(Parser)]
#[command(name = "wavepacket", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Output directory for `run` (default: runs/<scenario-name>)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for parallel stages (0 = library default)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Seed for randomized seeding (overrides the scenario's seed)
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Multiplier applied to all classification tolerances
    #[arg(long, global = true, default_value_t = 1.0)]
    tol_scale: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a shipped scenario by name)
    Run { scenario: String },
    /// Validate a scenario file and list every problem found
    Validate { scenario: String },
    /// List the shipped scenarios
    List,
    /// Describe one analysis kind
    Describe { analysis: String },
}

fn load(arg: &str) -> Result<Scenario, ExitCode> {
    let result = if let Some((_, text)) = SHIPPED.iter().find(|(n, _)| *n == arg) {
        parse_scenario_str(text)
    } else {
        parse_scenario(std::path::Path::new(arg))
    };
    result.map_err(|errors| {
        eprintln!("scenario validation failed with {} error(s):", errors.len());
        for e in errors {
            eprintln!("  {e}");
        }
        ExitCode::from(2)
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("warning: could not set thread count: {e}");
        }
    }
    match cli.command {
        Command::List => {
            print!("{}", list_scenarios());
            ExitCode::SUCCESS
        }
        Command::Describe { analysis } => match describe(&analysis) {
            Ok(text) => {
                println!("{text}");
                ExitCode::SUCCESS
            }
            Err(msg) => {
                eprintln!("{msg}");
                ExitCode::from(2)
            }
        },
        Command::Validate { scenario } => match load(&scenario) {
            Ok(s) => {
                println!(
                    "scenario `{}` is valid: {} axes, {} analyses",
                    s.name,
                    s.grid.points.len(),
                    s.analyses.len()
                );
                ExitCode::SUCCESS
            }
            Err(code) => code,
        },
        Command::Run { scenario } => {
            let s = match load(&scenario) {
                Ok(s) => s,
                Err(code) => return code,
            };
            let out = cli
                .out
                .unwrap_or_else(|| PathBuf::from("runs").join(&s.name));
            match run_scenario(&s, &out, cli.seed, cli.tol_scale) {
                Ok(outcome) => {
                    print!("{}", outcome.report);
                    println!("artifacts: {}", outcome.out_dir.display());
                    if outcome.failures.is_empty() {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(1)
                    }
                }
                Err(e) => {
                    eprintln!("run failed: {e}");
                    ExitCode::from(1)
                }
            }
        }
    }
}
