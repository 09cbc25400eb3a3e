use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lodempc_cli::commands::{dump_algebra, dump_samples, run_experiment};
use lodempc_cli::{CliError, ExperimentConfig};

/// Model predictive control by conditioning an ODE-constrained Gaussian process.
#[derive(Parser)]
#[command(name = "lodempc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit hyperparameters, run the closed loop, write trajectory and metrics.
    Run { config: PathBuf },
    /// Draw posterior samples on the query grid.
    Samples {
        config: PathBuf,
        #[arg(long, default_value_t = 50)]
        count: usize,
        /// Defaults to the config's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Print the operator matrix, its Smith form, nullspace and kernel.
    Algebra { config: PathBuf },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = run_experiment(&cfg)?;
            let s = &r.summary;
            println!(
                "{}: constraint error {:.4}, control error {:.4}, final |x| {:.4} ({:.2}s)",
                s.name, s.constraint_error, s.control_error, s.final_state_norm, s.wall_time_s
            );
            println!("wrote {}", r.trajectory_path.display());
            println!("wrote {}", r.metrics_path.display());
        }
        Command::Samples { config, count, seed } => {
            let cfg = ExperimentConfig::load(&config)?;
            let (path, rows) = dump_samples(&cfg, count, seed.unwrap_or(cfg.seed))?;
            println!("wrote {} ({rows} rows)", path.display());
        }
        Command::Algebra { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            dump_algebra(&cfg, &mut std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // usage errors count as configuration errors; help and version are not errors
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
