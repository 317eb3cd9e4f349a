use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use multitime_core::runner::{self, LoadOptions, ReportFormat, EXIT_CHECK_FAILED, EXIT_LOAD_ERROR, EXIT_PASS};

#[derive(Parser)]
#[command(name = "multitime", version, about = "Run multi-time Schrödinger scenarios and report residuals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario file and emit its report.
    Run {
        #[arg(long, value_name = "FILE")]
        scenario: PathBuf,
        /// Write the report here instead of standard output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        #[arg(long, default_value = "json", value_parser = ["json", "csv"])]
        format: String,
        /// Run unitary-picture checks even on non-Hermitian inputs.
        #[arg(long)]
        allow_non_hermitian: bool,
        /// Override the scenario's seed.
        #[arg(long, value_name = "N")]
        seed: Option<u64>,
    },
    /// Run every *.json scenario in a directory.
    Suite {
        #[arg(long, value_name = "PATH")]
        dir: PathBuf,
        #[arg(long, value_name = "N", default_value_t = default_jobs(), value_parser = clap::value_parser!(u64).range(1..))]
        jobs: u64,
    },
}

fn default_jobs() -> u64 {
    std::thread::available_parallelism().map_or(1, |n| n.get() as u64)
}

fn exit(code: i32) -> ExitCode {
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Run {
            scenario,
            out,
            format,
            allow_non_hermitian,
            seed,
        } => {
            let options = LoadOptions { allow_non_hermitian, seed };
            let scenario = match runner::load_scenario(&scenario, options) {
                Ok(s) => s,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_LOAD_ERROR);
                }
            };
            let report = runner::run_scenario(&scenario);
            let format: ReportFormat = format.parse().expect("clap restricts the value");
            if let Err(e) = runner::emit_report(&report, format, out.as_deref()) {
                eprintln!("error: {e}");
                return exit(EXIT_LOAD_ERROR);
            }
            for c in report.checks.iter().filter(|c| !c.passed) {
                log::warn!("{}: check {} failed ({})", report.scenario_name, c.name, c.detail);
            }
            exit(if report.overall_passed { EXIT_PASS } else { EXIT_CHECK_FAILED })
        }
        Command::Suite { dir, jobs } => {
            let outcome = match runner::run_suite(&dir, jobs as usize, LoadOptions::default()) {
                Ok(o) => o,
                Err(e) => {
                    eprintln!("error: {e}");
                    return exit(EXIT_LOAD_ERROR);
                }
            };
            for w in &outcome.warnings {
                eprintln!("warning: {w}");
            }
            print!("{}", runner::render_reports(&outcome.reports));
            for r in &outcome.reports {
                eprintln!("{} {}", if r.overall_passed { "PASS" } else { "FAIL" }, r.scenario_name);
            }
            exit(outcome.exit_code)
        }
    }
}
