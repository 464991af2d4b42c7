//! `dzpbc` — simulate and analyze dead-zone-compensating passivity-based
//! setpoint control on port-Hamiltonian mechanical systems.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dzpbc_cli::commands::{self, SimulateOverrides};

#[derive(Parser)]
#[command(
    name = "dzpbc",
    version,
    about = "Dead-zone compensating passivity-based control: simulation and tuning analysis",
    long_about = "Runs scenario files (TOML) or builtin experiment labels through the \
                  fixed-step simulator, checks the real-spectrum tuning rule of the \
                  linearized closed loop, and renders comparison reports.\n\n\
                  A scenario source is either a path to a .toml file or a builtin label \
                  such as `case_i`, `case_ii`, `case_iii`, or `setpoint_a_pi`."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate a scenario; writes `<label>.csv` and `<label>.metrics.txt`
    Simulate {
        /// Scenario file path or builtin label
        scenario: String,
        /// Directory for the CSV and metrics output
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
        /// Override the integration step (s)
        #[arg(long)]
        dt: Option<f64>,
        /// Override the final time (s)
        #[arg(long)]
        horizon: Option<f64>,
        /// Controller to run; repeat the flag to compare several in one call
        #[arg(long = "controller", value_name = "pi|pidz|none")]
        controllers: Vec<String>,
        /// Override the wiring
        #[arg(long, value_name = "ideal|physical")]
        wiring: Option<String>,
        /// Reserved; the pipeline is deterministic
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Spectral analysis of the linearized loop at the scenario setpoint
    Analyze {
        /// Scenario file path or builtin label
        scenario: String,
        /// Also write `<label>.analysis.csv` here
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Summarize a directory of metrics files into a table and CSV
    Report {
        /// Directory containing `*.metrics.txt` files
        suite_dir: PathBuf,
        /// Where to write `report.txt` / `report.csv` (default: the suite dir)
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    // Behave like a standard filter when the output pipe closes early
    // (`dzpbc analyze ... | head` must not panic).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }

    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate {
            scenario,
            output_dir,
            dt,
            horizon,
            controllers,
            wiring,
            seed,
        } => commands::cmd_simulate(
            scenario,
            output_dir,
            &SimulateOverrides {
                dt: *dt,
                horizon: *horizon,
                wiring: wiring.clone(),
                controllers: controllers.clone(),
                seed: *seed,
            },
        ),
        Command::Analyze {
            scenario,
            output_dir,
        } => commands::cmd_analyze(scenario, output_dir.as_deref()),
        Command::Report {
            suite_dir,
            output_dir,
        } => commands::cmd_report(suite_dir, output_dir.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
