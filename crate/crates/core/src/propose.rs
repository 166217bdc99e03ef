//! Candidate generators and ranking.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{Configuration, ParamValue};
use crate::gate::Registry;
use crate::harness::mix_key;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProposeError {
    #[error("parameter `{name}`: {reason}")]
    Domain { name: String, reason: String },
}

/// Domain of a single hyperparameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ParamDomain {
    /// Real interval. With `log = true` mutation multiplies by a log-uniform
    /// factor in `[1/3, 3]`; otherwise it adds a uniform step in `[-scale, scale]`
    /// (default scale: a tenth of the interval).
    Continuous {
        lo: f64,
        hi: f64,
        #[serde(default)]
        log: bool,
        #[serde(default)]
        scale: Option<f64>,
    },
    /// Integer interval; mutation adds a non-zero step in `[-scale, scale]`.
    Integer {
        lo: i64,
        hi: i64,
        #[serde(default = "default_int_scale")]
        scale: i64,
    },
    /// Finite set of values (numbers or tokens); mutation resamples another.
    Categorical { values: Vec<ParamValue> },
}

fn default_int_scale() -> i64 {
    1
}

/// Multiplicative range of a log-scale mutation.
pub const LOG_FACTOR: f64 = 3.0;

impl ParamDomain {
    pub fn validate(&self, name: &str) -> Result<(), ProposeError> {
        let bad = |reason: &str| {
            Err(ProposeError::Domain {
                name: name.to_string(),
                reason: reason.to_string(),
            })
        };
        match self {
            ParamDomain::Continuous { lo, hi, log, scale } => {
                if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                    return bad("need finite lo <= hi");
                }
                if *log && !(*lo > 0.0) {
                    return bad("log-scale domain must be strictly positive");
                }
                if let Some(s) = scale {
                    if !(*s > 0.0) {
                        return bad("scale must be positive");
                    }
                }
            }
            ParamDomain::Integer { lo, hi, scale } => {
                if lo > hi {
                    return bad("need lo <= hi");
                }
                if *scale < 1 {
                    return bad("scale must be >= 1");
                }
            }
            ParamDomain::Categorical { values } => {
                if values.is_empty() {
                    return bad("categorical domain is empty");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (ParamDomain::Continuous { lo, hi, .. }, ParamValue::Real(x)) => *lo <= *x && *x <= *hi,
            (ParamDomain::Continuous { lo, hi, .. }, ParamValue::Int(i)) => {
                *lo <= *i as f64 && *i as f64 <= *hi
            }
            (ParamDomain::Integer { lo, hi, .. }, ParamValue::Int(i)) => lo <= i && i <= hi,
            (ParamDomain::Categorical { values }, v) => values.contains(v),
            _ => false,
        }
    }

    /// True when the domain holds a single value, so mutation is impossible.
    pub fn is_point(&self) -> bool {
        match self {
            ParamDomain::Continuous { lo, hi, .. } => lo == hi,
            ParamDomain::Integer { lo, hi, .. } => lo == hi,
            ParamDomain::Categorical { values } => {
                values.iter().all(|v| *v == values[0])
            }
        }
    }

    /// A new in-domain value near `current`; may coincide with it after
    /// clamping, which the caller handles.
    fn mutate<R: Rng + ?Sized>(&self, current: &ParamValue, rng: &mut R) -> ParamValue {
        match self {
            ParamDomain::Continuous { lo, hi, log, scale } => {
                let x = current.as_f64().unwrap_or((lo + hi) / 2.0).clamp(*lo, *hi);
                let next = if *log {
                    let ln_f = LOG_FACTOR.ln();
                    x * rng.random_range(-ln_f..=ln_f).exp()
                } else {
                    let s = scale.unwrap_or(0.1 * (hi - lo));
                    x + rng.random_range(-s..=s)
                };
                ParamValue::Real(next.clamp(*lo, *hi))
            }
            ParamDomain::Integer { lo, hi, scale } => {
                let i = match current {
                    ParamValue::Int(i) => *i,
                    other => other.as_f64().map(|x| x.round() as i64).unwrap_or(*lo),
                };
                let mut step = rng.random_range(-*scale..=*scale - 1);
                if step >= 0 {
                    step += 1;
                }
                ParamValue::Int(i.saturating_add(step).clamp(*lo, *hi))
            }
            ParamDomain::Categorical { values } => {
                let others: Vec<&ParamValue> = values.iter().filter(|v| *v != current).collect();
                match others.choose(rng) {
                    Some(v) => (*v).clone(),
                    None => current.clone(),
                }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ParamValue {
        match self {
            ParamDomain::Continuous { lo, hi, log, .. } => {
                if lo == hi {
                    ParamValue::Real(*lo)
                } else if *log {
                    ParamValue::Real(rng.random_range(lo.ln()..=hi.ln()).exp().clamp(*lo, *hi))
                } else {
                    ParamValue::Real(rng.random_range(*lo..=*hi))
                }
            }
            ParamDomain::Integer { lo, hi, .. } => ParamValue::Int(rng.random_range(*lo..=*hi)),
            ParamDomain::Categorical { values } => {
                values.choose(rng).expect("non-empty").clone()
            }
        }
    }
}

/// Per-parameter domains for mutation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamSpace {
    pub domains: BTreeMap<String, ParamDomain>,
}

impl ParamSpace {
    pub fn validate(&self) -> Result<(), ProposeError> {
        self.domains.iter().try_for_each(|(k, d)| d.validate(k))
    }

    pub fn contains(&self, config: &Configuration) -> bool {
        self.domains
            .iter()
            .all(|(k, d)| config.get(k).is_none_or(|v| d.contains(v)))
    }
}

/// Produces candidate edits of the incumbent.
pub trait Proposer {
    fn propose(
        &self,
        incumbent: &Configuration,
        registry: &Registry,
        round: u64,
        rng_seed: u64,
    ) -> Vec<Configuration>;
}

/// Replays a fixed list. With `per_round`, round `t` yields only entry
/// `(t - 1) mod len`; otherwise every round yields the whole list.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetProposer {
    pub list: Vec<Configuration>,
    pub per_round: bool,
}

impl Proposer for PresetProposer {
    fn propose(&self, _: &Configuration, _: &Registry, round: u64, _: u64) -> Vec<Configuration> {
        if self.list.is_empty() {
            return Vec::new();
        }
        if self.per_round {
            let i = (round.max(1) - 1) as usize % self.list.len();
            vec![self.list[i].clone()]
        } else {
            self.list.clone()
        }
    }
}

/// Perturbs one or two uniformly chosen parameters of the incumbent.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationProposer {
    pub space: ParamSpace,
    pub candidates: usize,
}

/// Attempts per candidate before giving up on producing a distinct edit.
const MAX_MUTATION_ATTEMPTS: usize = 32;

impl MutationProposer {
    fn mutate_once<R: Rng + ?Sized>(&self, incumbent: &Configuration, rng: &mut R) -> Option<Configuration> {
        let movable: Vec<(&String, &ParamDomain)> = self
            .space
            .domains
            .iter()
            .filter(|(k, d)| !d.is_point() && incumbent.get(k).is_some())
            .collect();
        if movable.is_empty() {
            return None;
        }
        for _ in 0..MAX_MUTATION_ATTEMPTS {
            let count = if movable.len() >= 2 { rng.random_range(1..=2) } else { 1 };
            let chosen: Vec<_> = movable.choose_multiple(rng, count).collect();
            let mut params = incumbent.params().clone();
            for (name, domain) in chosen {
                let current = &incumbent.params()[*name];
                params.insert((*name).clone(), domain.mutate(current, rng));
            }
            let cand = Configuration::new(params).ok()?;
            if cand.id() != incumbent.id() {
                return Some(cand);
            }
        }
        None
    }
}

impl Proposer for MutationProposer {
    fn propose(&self, incumbent: &Configuration, _: &Registry, round: u64, rng_seed: u64) -> Vec<Configuration> {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_key(&[rng_seed, round, incumbent.fingerprint()]));
        (0..self.candidates)
            .filter_map(|_| self.mutate_once(incumbent, &mut rng))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProposalKind {
    Preset,
    Mutate,
}

/// One-shot proposal: `preset` returns `presets` in order, `mutate` returns a
/// single mutation of the incumbent (or nothing if the space is degenerate).
pub fn propose(
    kind: ProposalKind,
    incumbent: &Configuration,
    space: &ParamSpace,
    presets: &[Configuration],
    registry: &Registry,
    rng_seed: u64,
) -> Vec<Configuration> {
    match kind {
        ProposalKind::Preset => PresetProposer {
            list: presets.to_vec(),
            per_round: false,
        }
        .propose(incumbent, registry, 1, rng_seed),
        ProposalKind::Mutate => MutationProposer {
            space: space.clone(),
            candidates: 1,
        }
        .propose(incumbent, registry, 1, rng_seed),
    }
}

/// Orders candidates by descending mean of their past screening results.
///
/// Candidates never screened before count as neutral (mean 0). The sort is
/// stable, so ties keep their input order.
pub fn rank_candidates(cands: Vec<Configuration>, registry: &Registry) -> Vec<Configuration> {
    let mut keyed: Vec<(f64, Configuration)> = cands
        .into_iter()
        .map(|c| (registry.screening_mean(c.id()).unwrap_or(0.0), c))
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
    keyed.into_iter().map(|(_, c)| c).collect()
}
