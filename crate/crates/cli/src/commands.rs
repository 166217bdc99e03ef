use std::path::{Path, PathBuf};

use editgate::gate::{run_outer_loop, GateOutcome};
use editgate::harness::mix_key;
use rayon::prelude::*;
use serde::Serialize;

use crate::experiment::{Diagnostic, ExperimentConfig, Hypothesis};
use crate::report::{render_digest, summary_rows, write_final, write_summary, FinalReport};
use crate::transcript::{
    parse_registry, read_lines, render_transcript, replay_lines, write_transcript, FinalRecord, TranscriptError,
};

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    Usage = 1,
    Validation = 2,
    Divergence = 3,
}

#[derive(Debug)]
pub struct CommandError {
    pub exit: Exit,
    pub message: String,
}

impl CommandError {
    fn usage(message: impl ToString) -> Self {
        Self {
            exit: Exit::Usage,
            message: message.to_string(),
        }
    }
}

impl From<Diagnostic> for CommandError {
    fn from(d: Diagnostic) -> Self {
        Self::usage(d)
    }
}

impl From<TranscriptError> for CommandError {
    fn from(e: TranscriptError) -> Self {
        let exit = match e {
            TranscriptError::Io(_) => Exit::Usage,
            _ => Exit::Divergence,
        };
        Self {
            exit,
            message: e.to_string(),
        }
    }
}

pub type CmdResult<T> = Result<T, CommandError>;

/// Runs the outer loop for `cfg` with an explicit master seed.
pub fn execute(cfg: &ExperimentConfig, master_seed: u64) -> CmdResult<GateOutcome> {
    let harness = cfg.build_harness().map_err(CommandError::usage)?;
    let proposer = cfg.build_proposer().map_err(CommandError::usage)?;
    let initial = cfg.initial_config().map_err(CommandError::usage)?;
    run_outer_loop(&cfg.gate, initial, &*proposer, &*harness, master_seed).map_err(CommandError::usage)
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub dir: PathBuf,
    pub report: FinalReport,
    pub outcome: GateOutcome,
}

pub fn cmd_run(config_path: &Path, out_dir: Option<&Path>) -> CmdResult<RunArtifacts> {
    let cfg = ExperimentConfig::load(config_path)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => cfg.run_dir(&crate::experiment::output_root(), config_path),
    };
    let outcome = execute(&cfg, cfg.master_seed)?;
    std::fs::create_dir_all(&dir).map_err(|e| CommandError::usage(format!("{}: {e}", dir.display())))?;
    let lines = render_transcript(&outcome, &cfg.gate, cfg.master_seed)?;
    write_transcript(&dir.join("transcript.jsonl"), &lines)?;
    let report = emit_reports(&dir, &outcome.registry, &FinalRecord::from_outcome(&outcome, 0))?;
    Ok(RunArtifacts { dir, report, outcome })
}

fn emit_reports(dir: &Path, registry: &editgate::Registry, fin: &FinalRecord) -> CmdResult<FinalReport> {
    let rows = summary_rows(registry);
    write_summary(&dir.join("summary.csv"), &rows).map_err(CommandError::usage)?;
    let report = FinalReport::from(fin);
    write_final(&dir.join("final.json"), &report).map_err(CommandError::usage)?;
    Ok(report)
}

/// Verifies a transcript by recomputation; returns the final incumbent id.
pub fn cmd_replay(transcript: &Path) -> CmdResult<String> {
    let lines = read_lines(transcript)?;
    let replay = replay_lines(&lines)?;
    Ok(replay.outcome.incumbent.id().to_string())
}

/// Regenerates `summary.csv` and `final.json` from a run directory's
/// transcript and returns a digest.
pub fn cmd_report(run_dir: &Path) -> CmdResult<String> {
    let lines = read_lines(&run_dir.join("transcript.jsonl"))?;
    let (_, registry, fin) = parse_registry(&lines)?;
    let fin = fin.ok_or(TranscriptError::Truncated { lines: lines.len() })?;
    let report = emit_reports(run_dir, &registry, &fin)?;
    Ok(render_digest(&report, &summary_rows(&registry)))
}

pub const MIN_TRIALS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    pub hypothesis: Hypothesis,
    pub trials: usize,
    /// Runs with at least one accept.
    pub runs_with_accept: usize,
    pub rate: f64,
    pub standard_error: f64,
    pub global_delta: f64,
    /// Null: `δ + 3·sqrt(δ(1−δ)/n)`. Alternative: the declared `min_power`.
    pub limit: Option<f64>,
    pub passed: bool,
}

/// Master seed of validation trial `i`.
pub fn trial_seed(master_seed: u64, i: usize) -> u64 {
    mix_key(&[master_seed, 0x7a1d, i as u64])
}

pub fn validate_config(cfg: &ExperimentConfig, trials: usize) -> CmdResult<ValidationReport> {
    if trials < MIN_TRIALS {
        return Err(CommandError::usage(format!(
            "refusing to validate with {trials} trials; at least {MIN_TRIALS} are needed"
        )));
    }
    let section = cfg.validate.as_ref().ok_or_else(|| {
        CommandError::usage("config has no [validate] section declaring hypothesis = \"null\" or \"alternative\"")
    })?;
    let harness = cfg.build_harness().map_err(CommandError::usage)?;
    let proposer = cfg.build_proposer().map_err(CommandError::usage)?;
    let initial = cfg.initial_config().map_err(CommandError::usage)?;

    let accepted: Vec<bool> = (0..trials)
        .into_par_iter()
        .map(|i| {
            run_outer_loop(&cfg.gate, initial.clone(), &*proposer, &*harness, trial_seed(cfg.master_seed, i))
                .map(|out| out.accepts > 0)
                .map_err(CommandError::usage)
        })
        .collect::<CmdResult<_>>()?;

    let hits = accepted.iter().filter(|a| **a).count();
    let n = trials as f64;
    let rate = hits as f64 / n;
    let delta = cfg.gate.global_delta;
    let (limit, passed) = match section.hypothesis {
        Hypothesis::Null => {
            let limit = delta + 3.0 * (delta * (1.0 - delta) / n).sqrt();
            (Some(limit), rate <= limit)
        }
        Hypothesis::Alternative => (section.min_power, section.min_power.is_none_or(|p| rate >= p)),
    };
    Ok(ValidationReport {
        hypothesis: section.hypothesis,
        trials,
        runs_with_accept: hits,
        rate,
        standard_error: (rate * (1.0 - rate) / n).sqrt(),
        global_delta: delta,
        limit,
        passed,
    })
}

pub fn cmd_validate(config_path: &Path, trials: usize, out_dir: Option<&Path>) -> CmdResult<ValidationReport> {
    let cfg = ExperimentConfig::load(config_path)?;
    let report = validate_config(&cfg, trials)?;
    let dir = match out_dir {
        Some(d) => d.to_path_buf(),
        None => cfg.run_dir(&crate::experiment::output_root(), config_path),
    };
    std::fs::create_dir_all(&dir).map_err(|e| CommandError::usage(format!("{}: {e}", dir.display())))?;
    let text = editgate::canonical::to_canonical_string(&report).map_err(CommandError::usage)?;
    std::fs::write(dir.join("validation.json"), text + "\n").map_err(CommandError::usage)?;
    Ok(report)
}
