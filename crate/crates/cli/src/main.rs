use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pettis_cli::{exit_code, run, Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "pettis",
    version,
    about = "Weak vector stochastic integrals: simulation and certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write paths.csv and process.csv.
    Simulate(Args),
    /// Certify drift removal under the reweighted measure.
    Girsanov(Args),
    /// Bridge regression, N-kernel check and the alpha sweep.
    Bridge(Args),
    /// Exact algebraic gates, no Monte Carlo.
    Validate(Args),
}

#[derive(clap::Args)]
struct Args {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let (command, args) = match cli.command {
        Cmd::Simulate(a) => (Command::Simulate, a),
        Cmd::Girsanov(a) => (Command::Girsanov, a),
        Cmd::Bridge(a) => (Command::Bridge, a),
        Cmd::Validate(a) => (Command::Validate, a),
    };
    let result = ExperimentConfig::load(&args.config).and_then(|cfg| run(command, &cfg));
    match &result {
        Ok(outcome) => {
            for line in &outcome.lines {
                println!("{line}");
            }
            for f in &outcome.files {
                println!("wrote {}", f.display());
            }
            println!("{}", if outcome.pass { "PASS" } else { "FAIL" });
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
