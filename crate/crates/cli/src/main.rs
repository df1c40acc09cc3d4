use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedvsr_core::config::{parse_config, ExperimentConfig};
use fedvsr_core::runner::{self, SEED_ENV_VAR};
use fedvsr_core::verify::run_verify;
use fedvsr_core::FedVsrError;

const EXIT_CONFIG: u8 = 2;
const EXIT_VERIFY: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "fedvsr", version, about = "Federated video super-resolution simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one experiment.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the built-in property checks; exits 3 on any failure.
    Verify,
    /// Run one experiment per value of a numeric config key.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        key: String,
        /// Comma-separated values, e.g. `0,0.25,0.5,0.75`.
        #[arg(long, value_delimiter = ',')]
        values: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn exit_code(err: &FedVsrError) -> u8 {
    match err {
        FedVsrError::Config { .. } => EXIT_CONFIG,
        FedVsrError::Io { .. } => EXIT_IO,
        _ => 1,
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig, FedVsrError> {
    let text = std::fs::read_to_string(path).map_err(|e| FedVsrError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut cfg = parse_config(&text)?;
    runner::apply_seed_override(&mut cfg, std::env::var(SEED_ENV_VAR).ok().as_deref())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out } => load_config(&config).and_then(|cfg| {
            let art = runner::run(&cfg, &out)?;
            let last = art.result.final_record();
            println!(
                "{} rounds, final eval PSNR {:.4} dB, SSIM {:.4}; metrics in {}",
                art.result.records.len(),
                last.eval_psnr,
                last.eval_ssim,
                art.metrics_path.display()
            );
            Ok(())
        }),
        Command::Sweep {
            config,
            key,
            values,
            out,
        } => load_config(&config).and_then(|cfg| {
            let sweep = runner::sweep(&cfg, &key, &values, &out)?;
            println!("{} runs; summary in {}", sweep.runs.len(), sweep.summary_path.display());
            Ok(())
        }),
        Command::Verify => match run_verify() {
            Ok(report) => {
                for c in &report.checks {
                    println!(
                        "{} {:<32} observed {:.3e} (limit {:.1e})",
                        if c.passed { "PASS" } else { "FAIL" },
                        c.name,
                        c.observed,
                        c.threshold
                    );
                }
                if !report.all_passed() {
                    return ExitCode::from(EXIT_VERIFY);
                }
                Ok(())
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_VERIFY);
            }
        },
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
