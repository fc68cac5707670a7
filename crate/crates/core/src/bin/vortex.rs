use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stochastic_vortices::config::{parse_config, CONFIG_HELP};
use stochastic_vortices::runner::{dispatch, Command, RunError};

#[derive(Parser)]
#[command(name = "vortex", version, about = "Forced point-vortex system on the torus", after_help = CONFIG_HELP)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// TOML config file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the seed from the config
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Integrate trajectories from the invariant-law initial condition
    Simulate,
    /// Draw from the initial law
    Sample,
    /// Run the Monte Carlo checks (`all` or a list of check names)
    Verify { names: Vec<String> },
    /// Radial sweep and consistency checks of the kernel
    KernelCheck,
}

fn run(cli: Cli) -> Result<bool, RunError> {
    let text = match &cli.config {
        Some(path) => std::fs::read_to_string(path).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?,
        None => String::new(),
    };
    let mut cfg = parse_config(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(n) = cli.threads {
        // only fails if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }
    let command = match cli.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Sample => Command::Sample,
        Cmd::Verify { names } => Command::Verify(names),
        Cmd::KernelCheck => Command::KernelCheck,
    };
    let outcome = dispatch(&command, &cfg)?;
    for r in &outcome.reports {
        println!("{} {}", if r.pass { "PASS" } else { "FAIL" }, r.name);
    }
    Ok(outcome.all_passed)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(2)
        }
    }
}
