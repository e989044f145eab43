use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gfc_cli::{cmd_compare, cmd_linearize, cmd_run, CliError, Options, EXIT_CONFIG};
use gfc_core::benchmark::BenchmarkEvent;
use gfc_core::controllers::ControllerVariant;

#[derive(Parser)]
#[command(name = "gfcbench", version, about = "Grid-forming converter control benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one controller under one event, write trace and metrics
    Run(Flags),
    /// Run all five controllers on one event and tabulate their metrics
    Compare(Flags),
    /// Write the eigenvalues of the pre-event operating point
    Linearize(Flags),
}

#[derive(Args)]
struct Flags {
    /// Scenario configuration (TOML); defaults to the benchmark
    #[arg(long)]
    config: Option<PathBuf>,
    /// droop, vsm-outer, vsm-inner, vadm or pr
    #[arg(long)]
    controller: Option<String>,
    /// none, load-step or phase-jump
    #[arg(long)]
    scenario: Option<String>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Integration step (s)
    #[arg(long)]
    dt: Option<f64>,
    /// Simulated time (s)
    #[arg(long)]
    duration: Option<f64>,
}

impl Flags {
    fn options(self) -> Result<Options, CliError> {
        let usage = |e: gfc_core::GfcError| CliError::Usage(e.to_string());
        Ok(Options {
            config: self.config,
            controller: self.controller.map(|c| c.parse::<ControllerVariant>()).transpose().map_err(usage)?,
            scenario: self.scenario.map(|s| s.parse::<BenchmarkEvent>()).transpose().map_err(usage)?,
            out: self.out,
            dt: self.dt,
            duration: self.duration,
        })
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    let mut msg = String::new();
    match command {
        Command::Run(flags) => {
            for path in cmd_run(&flags.options()?)? {
                msg += &format!("wrote {}\n", path.display());
            }
        }
        Command::Compare(flags) => {
            let c = cmd_compare(&flags.options()?)?;
            msg += &c.table;
            msg += &format!("wrote {}\nwrote {}\n", c.table_path.display(), c.json_path.display());
        }
        Command::Linearize(flags) => {
            let path = cmd_linearize(&flags.options()?)?;
            msg += &format!("wrote {}\n", path.display());
        }
    }
    // a closed pipe on stdout is not a failure of the run
    let _ = std::io::stdout().lock().write_all(msg.as_bytes());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
