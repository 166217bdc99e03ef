//! Per-event summary table and final report.

use std::path::Path;

use editgate::canonical::to_canonical_string;
use editgate::gate::{Registry, RegistryEntry, ScreenDecision};
use editgate::Decision;
use serde::Serialize;

use crate::transcript::FinalRecord;

/// One row of `summary.csv`. Screening rows leave `lcb` and `delta_spent`
/// empty; cumulative spend and wealth carry forward between confirmations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub round: u64,
    pub stage: &'static str,
    pub proposal_id: String,
    pub mean_delta: Option<f64>,
    pub lcb: Option<f64>,
    pub delta_spent: Option<f64>,
    pub cumulative_spend: f64,
    pub wealth: f64,
    pub decision: String,
}

pub fn summary_rows(registry: &Registry) -> Vec<SummaryRow> {
    let mut spent = 0.0;
    let mut wealth = 1.0;
    let mut rows = Vec::new();
    for entry in registry.entries() {
        let row = match entry {
            RegistryEntry::Baseline { .. } => continue,
            RegistryEntry::Screen(s) => SummaryRow {
                round: s.round,
                stage: "screen",
                proposal_id: s.proposal.id().to_string(),
                mean_delta: Some(s.mean),
                lcb: None,
                delta_spent: None,
                cumulative_spend: spent,
                wealth,
                decision: match (s.decision, s.budget_exhausted) {
                    (ScreenDecision::Escalate, true) => "budget_exhausted".into(),
                    (ScreenDecision::Escalate, false) => "escalate".into(),
                    (ScreenDecision::NoEscalate, _) => "no_escalate".into(),
                },
            },
            RegistryEntry::Confirm(c) => {
                if let Some(b) = &c.budget_event {
                    spent = b.spent_after;
                }
                wealth = c.certificate.wealth_after;
                SummaryRow {
                    round: c.round,
                    stage: "confirm",
                    proposal_id: c.proposal.id().to_string(),
                    mean_delta: Some(c.certificate.mean),
                    lcb: Some(c.certificate.lcb),
                    delta_spent: Some(c.certificate.delta_spent),
                    cumulative_spend: spent,
                    wealth,
                    decision: match c.decision {
                        Decision::Accept => "accept".into(),
                        Decision::Reject => "reject".into(),
                    },
                }
            }
            RegistryEntry::Commit(c) => SummaryRow {
                round: c.round,
                stage: "commit",
                proposal_id: c.incumbent.id().to_string(),
                mean_delta: None,
                lcb: None,
                delta_spent: None,
                cumulative_spend: spent,
                wealth,
                decision: "commit".into(),
            },
            RegistryEntry::Aborted(a) => SummaryRow {
                round: a.round,
                stage: "aborted",
                proposal_id: a.proposal_id.clone().unwrap_or_default(),
                mean_delta: None,
                lcb: None,
                delta_spent: None,
                cumulative_spend: spent,
                wealth,
                decision: format!("aborted_{}", a.stage),
            },
        };
        rows.push(row);
    }
    rows
}

pub fn write_summary(path: &Path, rows: &[SummaryRow]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FinalReport {
    pub incumbent: editgate::Configuration,
    pub incumbent_id: String,
    pub accepts: usize,
    pub confirmations: usize,
    pub total_spend: f64,
    pub global_delta: f64,
}

impl From<&FinalRecord> for FinalReport {
    fn from(f: &FinalRecord) -> Self {
        Self {
            incumbent: f.incumbent.clone(),
            incumbent_id: f.incumbent_id.clone(),
            accepts: f.accepts,
            confirmations: f.confirmations,
            total_spend: f.total_spend,
            global_delta: f.global_delta,
        }
    }
}

pub fn write_final(path: &Path, report: &FinalReport) -> anyhow::Result<()> {
    let mut text = to_canonical_string(report)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Short human-readable digest of a run.
pub fn render_digest(report: &FinalReport, rows: &[SummaryRow]) -> String {
    let screens = rows.iter().filter(|r| r.stage == "screen").count();
    let rounds = rows.iter().map(|r| r.round).max().unwrap_or(0);
    let mut out = format!(
        "rounds with events: {rounds}\nscreens: {screens}\nconfirmations: {}\naccepts: {}\ntotal spend: {:.6} of {}\nincumbent: {} {}\n",
        report.confirmations, report.accepts, report.total_spend, report.global_delta, report.incumbent_id, report.incumbent
    );
    for r in rows.iter().filter(|r| r.stage == "confirm") {
        out.push_str(&format!(
            "  round {:>3} confirm {} mean {:+.4} lcb {:+.4} delta_t {:.6} -> {}\n",
            r.round,
            r.proposal_id,
            r.mean_delta.unwrap_or(f64::NAN),
            r.lcb.unwrap_or(f64::NAN),
            r.delta_spent.unwrap_or(f64::NAN),
            r.decision
        ));
    }
    out
}
