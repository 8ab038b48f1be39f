use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use macrocal::cli::{self, Options};

#[derive(Parser)]
#[command(name = "macrocal", version, about = "Blind macro-calibration of sensor networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one run and write trajectory and metric CSVs.
    Run(Common),
    /// Write the spectral report for a configuration.
    Analyze(Common),
    /// Run a Monte Carlo ensemble and fit the convergence rate.
    Ensemble(Common),
    /// List the bundled presets.
    Presets,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bundled preset instead of a file.
    #[arg(long)]
    preset: Option<String>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Override a configuration key, e.g. `--set schedule.delta=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl From<Common> for Options {
    fn from(c: Common) -> Self {
        Options { config: c.config, preset: c.preset, out: c.out, seed: c.seed, rounds: c.rounds, runs: c.runs, set: c.set }
    }
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let result = match args.command {
        Command::Run(c) => {
            let o: Options = c.into();
            cli::cmd_run(&o).map(|_| eprintln!("wrote {}", o.out.display()))
        }
        Command::Analyze(c) => cli::cmd_analyze(&c.into()).map(|(_, a)| print!("{}", a.text)),
        Command::Ensemble(c) => {
            let o: Options = c.into();
            cli::cmd_ensemble(&o).map(|_| eprintln!("wrote {}", o.out.display()))
        }
        Command::Presets => {
            for p in cli::PRESET_NAMES {
                println!("{p}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
