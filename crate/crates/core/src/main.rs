use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use halfline_ie::config::RunConfig;
use halfline_ie::runner::{run_subcommand, Subcommand};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    Validate,
    SolveQuasilinear,
    SolveNonlinear,
    Report,
}

/// Solvers for nonlinear integral equations with sum-difference kernels on
/// the half-line.
#[derive(Debug, Parser)]
#[command(name = "halfline-ie", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// TOML run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides `output` in the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for operator application
    #[arg(long)]
    threads: Option<usize>,
    /// Also compute chi with the denominator A(1 + mu2 Phi)
    #[arg(long)]
    debug_chi_both_readings: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            return error_exit(&e.to_string());
        }
    }
    let mut cfg = match RunConfig::from_path(&cli.config) {
        Ok(c) => c,
        Err(e) => return error_exit(&e.to_string()),
    };
    if let Some(out) = cli.out {
        cfg.output = out;
    }
    cfg.chi_both_readings |= cli.debug_chi_both_readings;
    let cmd = match cli.command {
        Command::Validate => Subcommand::Validate,
        Command::SolveQuasilinear => Subcommand::SolveQuasilinear,
        Command::SolveNonlinear => Subcommand::SolveNonlinear,
        Command::Report => Subcommand::Report,
    };
    match run_subcommand(cmd, &cfg) {
        Ok(report) => {
            let failed = report.failures();
            if failed.is_empty() {
                println!(
                    "all {} checks passed; output in {}",
                    report.checks.len(),
                    cfg.output.display()
                );
                ExitCode::SUCCESS
            } else {
                let list = serde_json::json!({ "failed": failed });
                eprintln!("{list}");
                ExitCode::from(1)
            }
        }
        Err(e) => error_exit(&e.to_string()),
    }
}

fn error_exit(message: &str) -> ExitCode {
    eprintln!("{}", serde_json::json!({ "error": message }));
    ExitCode::from(2)
}
