use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpvnet_cli::commands::write_atomic;
use lpvnet_cli::{CliError, Options, Report, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "lpvnet", version, about = "Delay-robust control of switching decomposable networks")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
    /// Scenario JSON; defaults to the built-in six-agent ring.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSVs and JSON sidecars.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Parameter grid size for certificates and sup-norms.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Fading-memory index for both loops (horizon becomes eta * delta_min).
    #[arg(long, global = true)]
    eta: Option<u32>,
}

#[derive(Subcommand, Clone, Copy)]
enum Verb {
    /// Modal eigenvalue pairs and the LPV parameter interval.
    Decompose,
    /// Verify or search Lyapunov certificates for both loops.
    Certify,
    /// Admissible delay bound and check of the configured profile.
    Bound,
    /// Network and modal simulations with consensus and fan-out checks.
    Simulate,
    /// Full pipeline on the built-in scenario, diffed against published values.
    Reproduce,
}

fn run(cli: &Cli) -> Result<Report, CliError> {
    let config = match (&cli.config, cli.verb) {
        (_, Verb::Reproduce) | (None, _) => ScenarioConfig::reference(),
        (Some(path), _) => ScenarioConfig::load(path)?,
    };
    let scenario: Scenario = config.validate()?;
    let opts = Options { out: cli.out.clone(), seed: cli.seed, grid: cli.grid, eta: cli.eta };
    let report = match cli.verb {
        Verb::Decompose => lpvnet_cli::cmd_decompose(&scenario, &opts)?,
        Verb::Certify => lpvnet_cli::cmd_certify(&scenario, &opts)?,
        Verb::Bound => lpvnet_cli::cmd_bound(&scenario, &opts)?,
        Verb::Simulate => lpvnet_cli::cmd_simulate(&scenario, &opts)?,
        Verb::Reproduce => lpvnet_cli::cmd_reproduce(&scenario, &opts)?,
    };
    if let Some(dir) = &cli.out {
        let body = serde_json::to_vec_pretty(&report.sidecar).expect("sidecar serializes");
        write_atomic(&dir.join(format!("{}.json", report.verb)), &body)?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print!("{}", report.text);
            if let Some(err) = &report.failure {
                eprintln!("error: {err}");
            }
            ExitCode::from(report.exit_code())
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
