use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use editgate_cli::commands::{cmd_replay, cmd_report, cmd_run, cmd_validate, Exit};
use editgate_cli::experiment::Hypothesis;

/// Certified acceptance gate for configuration edits.
///
/// Output directories are created under $EDITGATE_OUTPUT_ROOT (default ./runs).
#[derive(Parser)]
#[command(name = "editgate", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the gated outer loop and write transcript.jsonl, summary.csv and final.json.
    Run {
        config: PathBuf,
        /// Write into this directory instead of the configured one.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Recompute every decision in a transcript and compare byte-for-byte.
    Replay { transcript: PathBuf },
    /// Estimate the familywise accept rate over independent runs.
    Validate {
        config: PathBuf,
        #[arg(long)]
        trials: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate summary.csv and final.json from a run directory.
    Report { rundir: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(Exit::Usage as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Run { config, out } => cmd_run(&config, out.as_deref()).map(|a| {
            println!(
                "{}: accepts={} confirmations={} total_spend={:.6} incumbent={}",
                a.dir.display(),
                a.report.accepts,
                a.report.confirmations,
                a.report.total_spend,
                a.report.incumbent_id
            );
            Exit::Ok
        }),
        Command::Replay { transcript } => cmd_replay(&transcript).map(|id| {
            println!("replay ok: final incumbent {id}");
            Exit::Ok
        }),
        Command::Validate { config, trials, out } => cmd_validate(&config, trials, out.as_deref()).map(|r| {
            let what = match r.hypothesis {
                Hypothesis::Null => "familywise false-accept rate",
                Hypothesis::Alternative => "power",
            };
            println!(
                "{what}: {}/{} = {:.4} (se {:.4}), limit {}",
                r.runs_with_accept,
                r.trials,
                r.rate,
                r.standard_error,
                r.limit.map_or("none".to_string(), |l| format!("{l:.4}"))
            );
            if r.passed {
                println!("PASS");
                Exit::Ok
            } else {
                println!("FAIL");
                Exit::Validation
            }
        }),
        Command::Report { rundir } => cmd_report(&rundir).map(|digest| {
            print!("{digest}");
            Exit::Ok
        }),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.exit as u8)
        }
    }
}
