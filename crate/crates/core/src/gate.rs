//! The acceptance gate and its outer loop.
//!
//! Each round the proposer offers candidate edits of the incumbent. Every
//! candidate is first *screened* on a few seeds (free, heuristic); candidates
//! whose mean paired improvement reaches the screening threshold are
//! *escalated* to a budgeted confirmation test on a disjoint seed pool. Only a
//! confirmation certificate can commit an edit, and commits are irreversible.
//!
//! [`GateState`] holds everything a decision depends on (incumbent, budget,
//! wealth, registry) and is driven both by [`run_outer_loop`] and by transcript
//! replay, so recorded and recomputed decisions share one code path.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::{BudgetError, BudgetEvent, BudgetState, ScheduleKind};
use crate::certify::{certify, Certificate, CertifyError, Decision, LambdaRule, PairedDeltas, TestMode, WealthState};
use crate::config::Configuration;
use crate::harness::{mix_key, paired_evaluate, Harness, HarnessError, Stage};
use crate::propose::{rank_candidates, Proposer};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GateError {
    #[error("invalid gate configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Budget(#[from] BudgetError),
    #[error(transparent)]
    Certify(#[from] CertifyError),
    #[error("commit refused: {0}")]
    CommitRefused(String),
    #[error("registry out of sequence: {0}")]
    Sequence(String),
}

pub type Result<T> = std::result::Result<T, GateError>;

fn default_one() -> u64 {
    1
}

/// Static parameters of one gated run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateConfig {
    pub global_delta: f64,
    pub mode: TestMode,
    pub schedule: ScheduleKind,
    /// Budget horizon (`T` for uniform, `B` for harmonic/cths); defaults to
    /// `max_rounds`.
    #[serde(default)]
    pub horizon: Option<u64>,
    pub r_lo: f64,
    pub r_hi: f64,
    pub screen_seeds: usize,
    pub confirm_seeds: usize,
    pub screen_threshold: f64,
    pub max_rounds: u64,
    #[serde(default = "default_one")]
    pub proposal_period: u64,
    #[serde(default)]
    pub stagnation_window: Option<usize>,
    #[serde(default)]
    pub stagnation_epsilon: f64,
    #[serde(default)]
    pub wealth_reset_on_commit: bool,
    #[serde(default)]
    pub lambda: LambdaRule,
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(GateError::Config(msg));
        if !(self.global_delta > 0.0 && self.global_delta < 1.0) {
            return bad(format!("global_delta {} outside (0, 1)", self.global_delta));
        }
        if !(self.r_lo < self.r_hi) || !self.r_lo.is_finite() || !self.r_hi.is_finite() {
            return bad(format!("need finite r_lo < r_hi, got [{}, {}]", self.r_lo, self.r_hi));
        }
        if self.screen_seeds == 0 {
            return bad("screen_seeds must be at least 1".into());
        }
        if self.screen_seeds > self.confirm_seeds {
            return bad(format!(
                "screen_seeds ({}) exceeds confirm_seeds ({})",
                self.screen_seeds, self.confirm_seeds
            ));
        }
        if self.mode == TestMode::Bernstein && self.confirm_seeds < 2 {
            return bad("bernstein mode needs confirm_seeds >= 2".into());
        }
        if !self.screen_threshold.is_finite() {
            return bad("screen_threshold must be finite".into());
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1".into());
        }
        if self.proposal_period == 0 {
            return bad("proposal_period must be at least 1".into());
        }
        if matches!(self.horizon, Some(0)) {
            return bad("horizon must be at least 1".into());
        }
        if let Some(w) = self.stagnation_window {
            if w < 2 {
                return bad(format!("stagnation_window must be >= 2, got {w}"));
            }
        }
        if !(self.stagnation_epsilon >= 0.0) {
            return bad("stagnation_epsilon must be >= 0".into());
        }
        self.lambda.validate().map_err(|e| GateError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn budget_horizon(&self) -> u64 {
        self.horizon.unwrap_or(self.max_rounds)
    }

    pub fn new_budget(&self) -> Result<BudgetState<f64>> {
        Ok(BudgetState::new(self.schedule, self.global_delta, self.budget_horizon())?)
    }

    fn tracks_metrics(&self) -> bool {
        self.proposal_period > 1 || self.stagnation_window.is_some()
    }

    fn proposal_due(&self, round: u64, metrics: &[f64]) -> bool {
        round.is_multiple_of(self.proposal_period)
            || self
                .stagnation_window
                .is_some_and(|w| stagnant(metrics, w, self.stagnation_epsilon))
    }
}

/// Plateau test over the trailing `window` metrics: their range is at most
/// `epsilon * max(1, |last|)`. False while fewer than `window` metrics exist.
pub fn stagnant(metrics: &[f64], window: usize, epsilon: f64) -> bool {
    if window < 2 || metrics.len() < window {
        return false;
    }
    let tail = &metrics[metrics.len() - window..];
    let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
    let last = tail[window - 1];
    max - min <= epsilon * last.abs().max(1.0)
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreenDecision {
    Escalate,
    NoEscalate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScreenEntry {
    pub round: u64,
    pub incumbent_id: String,
    pub proposal: Configuration,
    pub deltas: PairedDeltas<f64>,
    pub mean: f64,
    pub threshold: f64,
    pub decision: ScreenDecision,
    /// Escalation was warranted but no confirmation budget was available.
    pub budget_exhausted: bool,
    /// Proposal identical to the incumbent; screened with zero deltas.
    pub degenerate: bool,
}

impl ScreenEntry {
    pub fn wants_confirmation(&self) -> bool {
        self.decision == ScreenDecision::Escalate && !self.budget_exhausted
    }
}

/// Reference to the ledger entry booked by a confirmation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BudgetRef {
    pub ledger_index: usize,
    pub confirm_index: u64,
    pub amount: f64,
    pub spent_after: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfirmEntry {
    pub round: u64,
    pub incumbent_id: String,
    pub proposal: Configuration,
    pub deltas: PairedDeltas<f64>,
    pub certificate: Certificate<f64>,
    pub budget_event: Option<BudgetRef>,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommitEntry {
    pub round: u64,
    pub previous_id: String,
    pub incumbent: Configuration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbortEntry {
    pub round: u64,
    pub proposal_id: Option<String>,
    pub stage: Stage,
    pub reason: String,
}

/// One event in the append-only history of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegistryEntry {
    Baseline { incumbent: Configuration },
    Screen(ScreenEntry),
    Confirm(ConfirmEntry),
    Commit(CommitEntry),
    Aborted(AbortEntry),
}

impl RegistryEntry {
    pub fn round(&self) -> u64 {
        match self {
            RegistryEntry::Baseline { .. } => 0,
            RegistryEntry::Screen(e) => e.round,
            RegistryEntry::Confirm(e) => e.round,
            RegistryEntry::Commit(e) => e.round,
            RegistryEntry::Aborted(e) => e.round,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(transparent)]
pub struct Registry {
    entries: Vec<RegistryEntry>,
}

impl Registry {
    pub fn entries(&self) -> &[RegistryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn last(&self) -> Option<&RegistryEntry> {
        self.entries.last()
    }

    pub fn push(&mut self, entry: RegistryEntry) {
        self.entries.push(entry);
    }

    /// Average screening mean over every past screen of `id`.
    pub fn screening_mean(&self, id: &str) -> Option<f64> {
        let (sum, count) = self
            .entries
            .iter()
            .filter_map(|e| match e {
                RegistryEntry::Screen(s) if s.proposal.id() == id => Some(s.mean),
                _ => None,
            })
            .fold((0.0, 0usize), |(s, c), m| (s + m, c + 1));
        (count > 0).then(|| sum / count as f64)
    }

    pub fn screening_means(&self) -> HashMap<String, f64> {
        let mut acc: HashMap<String, (f64, usize)> = HashMap::new();
        for e in &self.entries {
            if let RegistryEntry::Screen(s) = e {
                let slot = acc.entry(s.proposal.id().to_string()).or_default();
                slot.0 += s.mean;
                slot.1 += 1;
            }
        }
        acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
    }

    pub fn commits(&self) -> impl Iterator<Item = &CommitEntry> {
        self.entries.iter().filter_map(|e| match e {
            RegistryEntry::Commit(c) => Some(c),
            _ => None,
        })
    }

    pub fn confirmations(&self) -> impl Iterator<Item = &ConfirmEntry> {
        self.entries.iter().filter_map(|e| match e {
            RegistryEntry::Confirm(c) => Some(c),
            _ => None,
        })
    }

    /// Incumbent reached by applying every recorded commit to the baseline.
    pub fn final_incumbent(&self) -> Option<&Configuration> {
        let baseline = match self.entries.first()? {
            RegistryEntry::Baseline { incumbent } => incumbent,
            _ => return None,
        };
        Some(self.commits().last().map_or(baseline, |c| &c.incumbent))
    }
}

// ---------------------------------------------------------------------------
// Stage operations
// ---------------------------------------------------------------------------

/// Paired screening evaluation; escalate iff the mean reaches the threshold.
pub fn screen<H: Harness + ?Sized>(
    incumbent: &Configuration,
    proposal: &Configuration,
    harness: &H,
    cfg: &GateConfig,
    seeds: &[u64],
) -> Result<(PairedDeltas<f64>, bool)> {
    let deltas = paired_evaluate(harness, incumbent, proposal, seeds, Stage::Screen)?;
    let escalate = deltas.mean() >= cfg.screen_threshold;
    Ok((deltas, escalate))
}

/// Certificate plus the post-confirmation budget and wealth.
pub type Certified = (Certificate<f64>, BudgetState<f64>, WealthState<f64>, Option<BudgetRef>);

/// Books a confirmation against the budget (fixed-n modes) and certifies the
/// deltas. Inputs are left untouched on error.
pub fn certify_confirmation(
    cfg: &GateConfig,
    deltas: &PairedDeltas<f64>,
    budget: &BudgetState<f64>,
    wealth: &WealthState<f64>,
) -> Result<Certified> {
    let mut budget = budget.clone();
    let (delta_t, budget_ref) = match cfg.mode {
        TestMode::Evalue => (cfg.global_delta, None),
        TestMode::Hoeffding | TestMode::Bernstein => {
            let amount = budget.apply(BudgetEvent::Confirmation)?;
            let reference = BudgetRef {
                ledger_index: budget.ledger().len() - 1,
                confirm_index: budget.confirm_index(),
                amount,
                spent_after: *budget.spent(),
            };
            (amount, Some(reference))
        }
    };
    let (cert, wealth) = certify(
        deltas,
        delta_t,
        wealth.clone(),
        cfg.mode,
        cfg.global_delta,
        &cfg.lambda,
    )?;
    Ok((cert, budget, wealth, budget_ref))
}

/// Evaluates the proposal on the confirmation seeds and certifies it.
#[allow(clippy::too_many_arguments)]
pub fn confirm<H: Harness + ?Sized>(
    incumbent: &Configuration,
    proposal: &Configuration,
    harness: &H,
    cfg: &GateConfig,
    seeds: &[u64],
    budget: &BudgetState<f64>,
    wealth: &WealthState<f64>,
) -> Result<(Certificate<f64>, BudgetState<f64>, WealthState<f64>)> {
    if !budget.can_confirm() && cfg.mode != TestMode::Evalue {
        return Err(GateError::Budget(BudgetError::Exhausted(
            "no confirmation budget left".into(),
        )));
    }
    let deltas = paired_evaluate(harness, incumbent, proposal, seeds, Stage::Confirm)?;
    let (cert, budget, wealth, _) = certify_confirmation(cfg, &deltas, budget, wealth)?;
    Ok((cert, budget, wealth))
}

/// Adopts `proposal` given an accepting certificate and records the commit.
pub fn commit(
    incumbent: &Configuration,
    proposal: Configuration,
    certificate: &Certificate<f64>,
    registry: &mut Registry,
    round: u64,
) -> Result<Configuration> {
    if certificate.decision != Decision::Accept {
        return Err(GateError::CommitRefused(format!(
            "certificate for {} rejects the edit",
            proposal.id()
        )));
    }
    registry.push(RegistryEntry::Commit(CommitEntry {
        round,
        previous_id: incumbent.id().to_string(),
        incumbent: proposal.clone(),
    }));
    Ok(proposal)
}

// ---------------------------------------------------------------------------
// Gate state machine
// ---------------------------------------------------------------------------

/// Mutable state of one run: incumbent, budget, wealth and registry.
#[derive(Debug, Clone)]
pub struct GateState {
    cfg: GateConfig,
    incumbent: Configuration,
    budget: BudgetState<f64>,
    wealth: WealthState<f64>,
    registry: Registry,
    round: u64,
    pending: Option<(Configuration, Certificate<f64>)>,
}

impl GateState {
    pub fn new(cfg: GateConfig, initial: Configuration) -> Result<Self> {
        cfg.validate()?;
        let budget = cfg.new_budget()?;
        let mut registry = Registry::default();
        registry.push(RegistryEntry::Baseline {
            incumbent: initial.clone(),
        });
        Ok(Self {
            cfg,
            incumbent: initial,
            budget,
            wealth: WealthState::new(),
            registry,
            round: 0,
            pending: None,
        })
    }

    pub fn config(&self) -> &GateConfig {
        &self.cfg
    }

    pub fn incumbent(&self) -> &Configuration {
        &self.incumbent
    }

    pub fn budget(&self) -> &BudgetState<f64> {
        &self.budget
    }

    pub fn wealth(&self) -> &WealthState<f64> {
        &self.wealth
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn round(&self) -> u64 {
        self.round
    }

    pub fn begin_round(&mut self) -> Result<u64> {
        self.budget.apply(BudgetEvent::RoundAdvance)?;
        self.round += 1;
        self.pending = None;
        Ok(self.round)
    }

    /// Whether a confirmation could be granted right now.
    pub fn can_confirm(&self) -> bool {
        self.cfg.mode == TestMode::Evalue || self.budget.can_confirm()
    }

    pub fn record_screen(&mut self, proposal: Configuration, deltas: PairedDeltas<f64>) -> Result<&ScreenEntry> {
        self.check_round()?;
        let degenerate = proposal.id() == self.incumbent.id();
        let mean = deltas.mean();
        let decision = if !degenerate && mean >= self.cfg.screen_threshold {
            ScreenDecision::Escalate
        } else {
            ScreenDecision::NoEscalate
        };
        let budget_exhausted = decision == ScreenDecision::Escalate && !self.can_confirm();
        self.registry.push(RegistryEntry::Screen(ScreenEntry {
            round: self.round,
            incumbent_id: self.incumbent.id().to_string(),
            proposal,
            deltas,
            mean,
            threshold: self.cfg.screen_threshold,
            decision,
            budget_exhausted,
            degenerate,
        }));
        match self.registry.last() {
            Some(RegistryEntry::Screen(s)) => Ok(s),
            _ => unreachable!(),
        }
    }

    /// Certifies confirmation deltas, threading budget and wealth.
    pub fn record_confirm(&mut self, proposal: Configuration, deltas: PairedDeltas<f64>) -> Result<&ConfirmEntry> {
        self.check_round()?;
        let escalated = matches!(
            self.registry.last(),
            Some(RegistryEntry::Screen(s)) if s.proposal.id() == proposal.id() && s.wants_confirmation()
        );
        if !escalated {
            return Err(GateError::Sequence(format!(
                "confirmation of {} without a granted escalation",
                proposal.id()
            )));
        }
        let (cert, budget, wealth, budget_ref) =
            certify_confirmation(&self.cfg, &deltas, &self.budget, &self.wealth)?;
        self.budget = budget;
        self.wealth = wealth;
        self.pending = Some((proposal.clone(), cert.clone()));
        self.registry.push(RegistryEntry::Confirm(ConfirmEntry {
            round: self.round,
            incumbent_id: self.incumbent.id().to_string(),
            proposal,
            decision: cert.decision,
            certificate: cert,
            deltas,
            budget_event: budget_ref,
        }));
        match self.registry.last() {
            Some(RegistryEntry::Confirm(c)) => Ok(c),
            _ => unreachable!(),
        }
    }

    /// Commits the most recently confirmed proposal.
    pub fn commit(&mut self) -> Result<&Configuration> {
        let (proposal, cert) = self
            .pending
            .take()
            .ok_or_else(|| GateError::CommitRefused("no confirmed proposal pending".into()))?;
        self.incumbent = commit(&self.incumbent, proposal, &cert, &mut self.registry, self.round)?;
        if self.cfg.wealth_reset_on_commit {
            self.wealth = WealthState::new();
        }
        Ok(&self.incumbent)
    }

    pub fn record_abort(&mut self, proposal_id: Option<String>, stage: Stage, reason: String) {
        self.pending = None;
        self.registry.push(RegistryEntry::Aborted(AbortEntry {
            round: self.round,
            proposal_id,
            stage,
            reason,
        }));
    }

    /// Recomputes `recorded` from its inputs (round, proposal, deltas) and
    /// returns the entry this state would have written. Used by replay.
    pub fn reproduce(&mut self, recorded: &RegistryEntry) -> Result<RegistryEntry> {
        let target = recorded.round();
        if target < self.round {
            return Err(GateError::Sequence(format!(
                "entry for round {target} after round {}",
                self.round
            )));
        }
        while self.round < target {
            self.begin_round()?;
        }
        let produced = match recorded {
            RegistryEntry::Baseline { .. } => {
                return Err(GateError::Sequence("second baseline entry".into()))
            }
            RegistryEntry::Screen(s) => {
                RegistryEntry::Screen(self.record_screen(s.proposal.clone(), s.deltas.clone())?.clone())
            }
            RegistryEntry::Confirm(c) => {
                RegistryEntry::Confirm(self.record_confirm(c.proposal.clone(), c.deltas.clone())?.clone())
            }
            RegistryEntry::Commit(_) => {
                self.commit()?;
                self.registry.last().cloned().expect("commit recorded")
            }
            RegistryEntry::Aborted(a) => {
                self.record_abort(a.proposal_id.clone(), a.stage, a.reason.clone());
                recorded.clone()
            }
        };
        Ok(produced)
    }

    /// Advances through any remaining rounds and returns the outcome.
    pub fn finish(mut self) -> Result<GateOutcome> {
        while self.round < self.cfg.max_rounds {
            self.begin_round()?;
        }
        let accepts = self.registry.commits().count();
        Ok(GateOutcome {
            incumbent: self.incumbent,
            registry: self.registry,
            budget: self.budget,
            wealth: self.wealth,
            accepts,
        })
    }

    fn check_round(&self) -> Result<()> {
        if self.round == 0 {
            Err(GateError::Sequence("no round in progress".into()))
        } else {
            Ok(())
        }
    }
}

#[derive(Debug, Clone)]
pub struct GateOutcome {
    pub incumbent: Configuration,
    pub registry: Registry,
    pub budget: BudgetState<f64>,
    pub wealth: WealthState<f64>,
    pub accepts: usize,
}

// ---------------------------------------------------------------------------
// Seed pools
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedPool {
    Screen,
    Confirm,
    /// Incumbent metric used by the stagnation trigger.
    Inner,
}

/// Disjoint seed ranges for screening, confirmation and inner-loop metrics.
///
/// All three share an offset below `2^60` derived from the master seed and are
/// separated by the top two bits, so no seed is ever reused across pools or
/// within a run.
#[derive(Debug, Clone)]
pub struct SeedPools {
    base: u64,
    cursors: [u64; 3],
}

impl SeedPools {
    const TAGS: [u64; 3] = [0, 1 << 62, 1 << 63];

    pub fn new(master_seed: u64) -> Self {
        Self {
            base: mix_key(&[master_seed, 0x5eed]) >> 4,
            cursors: [0; 3],
        }
    }

    pub fn take(&mut self, pool: SeedPool, n: usize) -> Vec<u64> {
        let slot = pool as usize;
        let start = self.cursors[slot];
        self.cursors[slot] += n as u64;
        (start..start + n as u64)
            .map(|i| Self::TAGS[slot] | (self.base + i))
            .collect()
    }

    pub fn pool_of(seed: u64) -> SeedPool {
        match seed >> 62 {
            0 => SeedPool::Screen,
            1 => SeedPool::Confirm,
            _ => SeedPool::Inner,
        }
    }
}

// ---------------------------------------------------------------------------
// Outer loop
// ---------------------------------------------------------------------------

/// Runs `max_rounds` rounds of propose → screen → confirm → commit.
///
/// Harness failures abort the current round (logged, incumbent unchanged);
/// an exhausted budget disables confirmations but screening continues.
pub fn run_outer_loop<P: Proposer + ?Sized, H: Harness + ?Sized>(
    cfg: &GateConfig,
    initial: Configuration,
    proposer: &P,
    harness: &H,
    master_seed: u64,
) -> Result<GateOutcome> {
    cfg.validate()?;
    let (lo, hi) = harness.range();
    if lo != cfg.r_lo || hi != cfg.r_hi {
        return Err(GateError::Config(format!(
            "harness range [{lo}, {hi}] differs from declared [{}, {}]",
            cfg.r_lo, cfg.r_hi
        )));
    }
    let mut state = GateState::new(cfg.clone(), initial)?;
    let mut pools = SeedPools::new(master_seed);
    let mut metrics = Vec::new();

    for round in 1..=cfg.max_rounds {
        state.begin_round()?;
        if cfg.tracks_metrics() {
            let seed = pools.take(SeedPool::Inner, 1)[0];
            match harness.evaluate(state.incumbent(), seed, Stage::Screen) {
                Ok(m) => metrics.push(m),
                Err(e) => {
                    state.record_abort(None, Stage::Screen, e.to_string());
                    continue;
                }
            }
        }
        if !cfg.proposal_due(round, &metrics) {
            continue;
        }
        let proposals = proposer.propose(
            state.incumbent(),
            state.registry(),
            round,
            mix_key(&[master_seed, round]),
        );
        let candidates = rank_candidates(proposals, state.registry());

        for cand in candidates {
            let seeds = pools.take(SeedPool::Screen, cfg.screen_seeds);
            if cand.id() == state.incumbent().id() {
                let zeros = PairedDeltas::new(vec![0.0; seeds.len()], cfg.r_lo, cfg.r_hi, seeds)?;
                state.record_screen(cand, zeros)?;
                continue;
            }
            let deltas = match screen(state.incumbent(), &cand, harness, cfg, &seeds) {
                Ok((d, _)) => d,
                Err(e) => {
                    state.record_abort(Some(cand.id().to_string()), Stage::Screen, e.to_string());
                    break;
                }
            };
            if !state.record_screen(cand.clone(), deltas)?.wants_confirmation() {
                continue;
            }
            let seeds = pools.take(SeedPool::Confirm, cfg.confirm_seeds);
            let deltas = match paired_evaluate(harness, state.incumbent(), &cand, &seeds, Stage::Confirm) {
                Ok(d) => d,
                Err(e) => {
                    state.record_abort(Some(cand.id().to_string()), Stage::Confirm, e.to_string());
                    break;
                }
            };
            let accepted = match state.record_confirm(cand.clone(), deltas) {
                Ok(entry) => entry.decision == Decision::Accept,
                Err(GateError::Budget(e)) => {
                    state.record_abort(Some(cand.id().to_string()), Stage::Confirm, e.to_string());
                    continue;
                }
                Err(e) => return Err(e),
            };
            if accepted {
                state.commit()?;
                break;
            }
        }
    }
    state.finish()
}
