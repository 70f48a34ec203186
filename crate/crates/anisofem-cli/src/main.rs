//! `anisofem` command line: runs configured studies, lists them, and runs the
//! invariant suite.
//!
//! Exit codes: 0 success, 1 configuration error, 2 a SINGULAR solve in a study
//! with `forbid_failures = true`, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use anisofem::check::run_all;
use anisofem::schemes::SolveStatus;
use anisofem::studies::{parse_run_config, run_study, write_outputs, StudyConfig, StudyKind, StudyOutput};
use anisofem::Exec;
use clap::{Parser, Subcommand};

const EXIT_CONFIG: u8 = 1;
const EXIT_SINGULAR: u8 = 2;
const EXIT_IO: u8 = 3;

#[derive(Parser)]
#[command(name = "anisofem", version, about = "Asymptotic-preserving solvers for strongly anisotropic diffusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every study section of a config file and write CSV and gnuplot files.
    Run {
        config: PathBuf,
        /// Overrides the config's output_dir.
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Only run the named sections.
        #[arg(long = "only", value_name = "SECTION", num_args = 1..)]
        only: Vec<String>,
    },
    /// List the available study kinds.
    ListStudies,
    /// Run the invariant suite.
    Check {
        /// Disable the data-parallel loops.
        #[arg(long)]
        sequential: bool,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run { config, output_dir, only } => run(config, output_dir, only),
        Command::ListStudies => {
            for k in StudyKind::ALL {
                println!("{:<18} {}", k.name(), k.summary());
            }
            ExitCode::SUCCESS
        }
        Command::Check { sequential } => {
            let exec = if sequential { Exec::Sequential } else { Exec::Parallel };
            let results = run_all(exec);
            let failed = results.iter().filter(|r| !r.passed).count();
            for r in &results {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            println!("{} checks, {failed} failed", results.len());
            if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

fn singular_count(out: &StudyOutput) -> usize {
    out.records().iter().filter(|r| r.solve_status == SolveStatus::Singular).count()
}

fn run(config: PathBuf, output_dir: Option<PathBuf>, only: Vec<String>) -> ExitCode {
    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", config.display());
            return ExitCode::from(EXIT_IO);
        }
    };
    let run_cfg = match parse_run_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(name) = only.iter().find(|n| !run_cfg.studies.iter().any(|s| &s.name == *n)) {
        eprintln!("error: no section named [{name}]");
        return ExitCode::from(EXIT_CONFIG);
    }
    let dir = output_dir.unwrap_or(run_cfg.output_dir);
    let selected: Vec<&StudyConfig> = run_cfg.studies.iter().filter(|s| only.is_empty() || only.contains(&s.name)).collect();
    let mut forbidden_failure = false;
    for study in selected {
        eprintln!("running [{}] ({})", study.name, study.kind.name());
        let out = match run_study(study) {
            Ok(o) => o,
            Err(e) => {
                eprintln!("error: [{}]: {e}", study.name);
                return ExitCode::from(EXIT_CONFIG);
            }
        };
        if let Err(e) = write_outputs(study, &out, &dir) {
            eprintln!("error: writing [{}] under {}: {e}", study.name, dir.display());
            return ExitCode::from(EXIT_IO);
        }
        let bad = singular_count(&out);
        if bad > 0 {
            eprintln!("warning: [{}]: {bad} singular solves", study.name);
            forbidden_failure |= study.forbid_failures;
        }
        eprintln!("wrote {}", dir.join(&study.output).display());
    }
    if forbidden_failure {
        return ExitCode::from(EXIT_SINGULAR);
    }
    ExitCode::SUCCESS
}
