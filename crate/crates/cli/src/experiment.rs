//! Declarative experiment files.
//!
//! An experiment is a single TOML document holding the gate parameters, the
//! harness description, the proposer, the initial incumbent and the master
//! seed. Everything a run depends on lives in this file.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use editgate::gate::GateConfig;
use editgate::harness::{make_synthetic, CmaesHarness, SyntheticFamily, SyntheticSpec};
use editgate::propose::{MutationProposer, ParamSpace, PresetProposer, Proposer};
use editgate::{Configuration, Harness, ParamValue};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Hypothesis {
    /// Proposals are no better than the incumbent.
    Null,
    /// Proposals carry a positive effect.
    Alternative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HarnessConfig {
    Synthetic {
        family: SyntheticFamily,
        #[serde(default)]
        base_mean: f64,
        base_sd: f64,
        #[serde(default)]
        seed_sd: f64,
        #[serde(default)]
        proposal_effect: BTreeMap<String, f64>,
        #[serde(default)]
        confirm_offset: f64,
    },
    Cmaes {
        budget_evals: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProposerConfig {
    Preset {
        #[serde(default)]
        per_round: bool,
        #[serde(default)]
        presets: Vec<BTreeMap<String, ParamValue>>,
    },
    Mutate {
        #[serde(default = "one")]
        candidates: usize,
        space: ParamSpace,
    },
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSection {
    pub hypothesis: Hypothesis,
    /// Minimum acceptable power for alternative configs.
    #[serde(default)]
    pub min_power: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub master_seed: u64,
    /// Run directory, relative to the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub gate: GateConfig,
    pub harness: HarnessConfig,
    pub proposer: ProposerConfig,
    pub initial: BTreeMap<String, ParamValue>,
    #[serde(default)]
    pub validate: Option<ValidateSection>,
}

/// A configuration problem pinned to a line of the source file when possible.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub path: PathBuf,
    pub line: Option<usize>,
    pub column: Option<usize>,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.path.display())?;
        if let Some(line) = self.line {
            write!(f, ":{line}")?;
            if let Some(col) = self.column {
                write!(f, ":{col}")?;
            }
        }
        write!(f, ": {}", self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Field names searched for when attaching a line to a semantic error.
const LOCATABLE_KEYS: &[&str] = &[
    "global_delta",
    "screen_seeds",
    "confirm_seeds",
    "screen_threshold",
    "max_rounds",
    "proposal_period",
    "stagnation_window",
    "stagnation_epsilon",
    "horizon",
    "r_lo",
    "r_hi",
    "lambda",
    "epsilon",
    "base_sd",
    "seed_sd",
    "confirm_offset",
    "budget_evals",
    "candidates",
    "min_power",
];

fn line_of_offset(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |p| before.len() - p - 1) + 1;
    (line, col)
}

/// First line assigning `key` (as `key = ...`).
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let t = l.trim_start();
        t.strip_prefix(key)
            .is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, Diagnostic> {
        let text = std::fs::read_to_string(path).map_err(|e| Diagnostic {
            path: path.to_path_buf(),
            line: None,
            column: None,
            message: format!("cannot read config: {e}"),
        })?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self, Diagnostic> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_of_offset(text, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            Diagnostic {
                path: path.to_path_buf(),
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        cfg.check().map_err(|message| {
            let line = LOCATABLE_KEYS
                .iter()
                .filter(|k| message.contains(*k))
                .find_map(|k| line_of_key(text, k));
            Diagnostic {
                path: path.to_path_buf(),
                line,
                column: None,
                message,
            }
        })?;
        Ok(cfg)
    }

    /// Semantic validation beyond what deserialization enforces.
    pub fn check(&self) -> Result<(), String> {
        self.gate.validate().map_err(|e| e.to_string())?;
        self.initial_config().map_err(|e| format!("initial: {e}"))?;
        self.build_harness().map_err(|e| format!("harness: {e}"))?;
        self.build_proposer().map_err(|e| format!("proposer: {e}"))?;
        if let Some(v) = &self.validate {
            if let Some(p) = v.min_power {
                if !(0.0..=1.0).contains(&p) {
                    return Err(format!("min_power must lie in [0, 1], got {p}"));
                }
            }
        }
        Ok(())
    }

    pub fn initial_config(&self) -> Result<Configuration, String> {
        Configuration::new(self.initial.clone()).map_err(|e| e.to_string())
    }

    pub fn build_harness(&self) -> Result<Box<dyn Harness>, String> {
        let (lo, hi) = (self.gate.r_lo, self.gate.r_hi);
        match &self.harness {
            HarnessConfig::Synthetic {
                family,
                base_mean,
                base_sd,
                seed_sd,
                proposal_effect,
                confirm_offset,
            } => {
                let spec = SyntheticSpec {
                    family: *family,
                    base_mean: *base_mean,
                    base_sd: *base_sd,
                    seed_sd: *seed_sd,
                    proposal_effect: proposal_effect.clone(),
                    confirm_offset: *confirm_offset,
                    lo,
                    hi,
                };
                Ok(Box::new(make_synthetic(spec).map_err(|e| e.to_string())?))
            }
            HarnessConfig::Cmaes { budget_evals } => {
                let h = CmaesHarness {
                    budget_evals: *budget_evals,
                    lo,
                    hi,
                };
                h.validate().map_err(|e| e.to_string())?;
                Ok(Box::new(h))
            }
        }
    }

    pub fn build_proposer(&self) -> Result<Box<dyn Proposer + Sync>, String> {
        match &self.proposer {
            ProposerConfig::Preset { per_round, presets } => {
                let list = presets
                    .iter()
                    .map(|p| Configuration::new(p.clone()).map_err(|e| e.to_string()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(Box::new(PresetProposer {
                    list,
                    per_round: *per_round,
                }))
            }
            ProposerConfig::Mutate { candidates, space } => {
                space.validate().map_err(|e| e.to_string())?;
                Ok(Box::new(MutationProposer {
                    space: space.clone(),
                    candidates: *candidates,
                }))
            }
        }
    }

    /// Directory a run writes to: `<root>/<output_dir>` or `<root>/<stem>`.
    pub fn run_dir(&self, root: &Path, config_path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) => root.join(dir),
            None => root.join(
                config_path
                    .file_stem()
                    .map(PathBuf::from)
                    .unwrap_or_else(|| PathBuf::from("run")),
            ),
        }
    }
}

/// Output root from `EDITGATE_OUTPUT_ROOT`, else `./runs`.
pub fn output_root() -> PathBuf {
    std::env::var_os("EDITGATE_OUTPUT_ROOT")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("runs"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = r#"
master_seed = 3

[gate]
global_delta = 0.1
mode = "hoeffding"
schedule = "uniform"
r_lo = -1.0
r_hi = 1.0
screen_seeds = 4
confirm_seeds = 20
screen_threshold = 0.4
max_rounds = 10

[harness]
kind = "synthetic"
family = "gaussian"
base_sd = 0.2

[proposer]
kind = "preset"
presets = [{ wd = 0.001 }]

[initial]
wd = 0.01
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::parse(GOOD, Path::new("x.toml")).unwrap();
        assert_eq!(cfg.master_seed, 3);
        assert_eq!(cfg.gate.proposal_period, 1);
        assert!(cfg.build_harness().is_ok());
        assert_eq!(cfg.run_dir(Path::new("/o"), Path::new("a/x.toml")), PathBuf::from("/o/x"));
    }

    #[test]
    fn syntax_error_reports_line() {
        let bad = GOOD.replace("max_rounds = 10", "max_rounds = = 10");
        let d = ExperimentConfig::parse(&bad, Path::new("x.toml")).unwrap_err();
        assert_eq!(d.line, line_of_key(GOOD, "max_rounds"));
    }

    #[test]
    fn type_error_reports_line() {
        let bad = GOOD.replace("screen_seeds = 4", "screen_seeds = \"four\"");
        let d = ExperimentConfig::parse(&bad, Path::new("x.toml")).unwrap_err();
        assert_eq!(d.line, line_of_key(GOOD, "screen_seeds"));
    }

    #[test]
    fn semantic_error_reports_line() {
        let bad = GOOD.replace("screen_seeds = 4", "screen_seeds = 40");
        let d = ExperimentConfig::parse(&bad, Path::new("x.toml")).unwrap_err();
        assert_eq!(d.line, line_of_key(GOOD, "screen_seeds"));
        assert!(d.to_string().starts_with("x.toml:"));
    }

    #[test]
    fn unknown_field_is_rejected() {
        let bad = GOOD.replace("max_rounds = 10", "max_rounds = 10\nmax_round = 3");
        assert!(ExperimentConfig::parse(&bad, Path::new("x.toml")).is_err());
    }
}
