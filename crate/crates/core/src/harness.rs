//! Paired-evaluation backends.
//!
//! A [`Harness`] scores a configuration on a seed. Scores are oriented so that
//! higher is better; minimization tasks negate. [`paired_evaluate`] turns two
//! configurations and a seed list into clipped [`PairedDeltas`].
//!
//! Synthetic harnesses generate scores with a counter-based construction: the
//! generator for each draw is seeded from a hash of (spec, config, seed, stage),
//! so a score never depends on call order or on any shared RNG state.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::certify::PairedDeltas;
use crate::cmaes::{cmaes_run, CmaesError};
use crate::config::{Configuration, ParamValue};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("evaluation failed for config {config} on seed {seed}: {reason}")]
    Evaluation {
        config: String,
        seed: u64,
        reason: String,
    },
    #[error("invalid harness specification: {0}")]
    Spec(String),
    #[error("seed list must be non-empty and free of duplicates")]
    Seeds,
}

/// Evaluation stage; harnesses may treat screening and confirmation differently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Screen,
    Confirm,
}

impl Stage {
    fn tag(self) -> u64 {
        match self {
            Stage::Screen => 0x5c,
            Stage::Confirm => 0xc0,
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Screen => "screen",
            Stage::Confirm => "confirm",
        })
    }
}

pub trait Harness: Sync {
    /// Score of `config` on `seed`. Must be a pure function of its arguments.
    fn evaluate(&self, config: &Configuration, seed: u64, stage: Stage) -> Result<f64, HarnessError>;

    /// Declared support `[lo, hi]` of paired differences.
    fn range(&self) -> (f64, f64);

    /// Fixed amount added to every proposal score at `stage`.
    fn proposal_offset(&self, _stage: Stage) -> f64 {
        0.0
    }
}

/// `Δ_i = score(proposal) + offset - score(incumbent)` on each seed, clipped to
/// the harness range and returned in ascending seed order. Any failing seed
/// fails the whole batch.
pub fn paired_evaluate<H: Harness + ?Sized>(
    harness: &H,
    incumbent: &Configuration,
    proposal: &Configuration,
    seeds: &[u64],
    stage: Stage,
) -> Result<PairedDeltas<f64>, HarnessError> {
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    if sorted.is_empty() || sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(HarnessError::Seeds);
    }
    let (lo, hi) = harness.range();
    let offset = harness.proposal_offset(stage);
    let mut values = Vec::with_capacity(sorted.len());
    for &seed in &sorted {
        let delta = if incumbent.id() == proposal.id() {
            offset
        } else {
            let p = harness.evaluate(proposal, seed, stage)?;
            let i = harness.evaluate(incumbent, seed, stage)?;
            p + offset - i
        };
        if !delta.is_finite() {
            return Err(HarnessError::Evaluation {
                config: proposal.id().to_string(),
                seed,
                reason: "non-finite score".into(),
            });
        }
        values.push(delta.clamp(lo, hi));
    }
    PairedDeltas::new(values, lo, hi, sorted).map_err(|e| HarnessError::Spec(e.to_string()))
}

// ---------------------------------------------------------------------------
// Counter-based generation
// ---------------------------------------------------------------------------

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one well-mixed 64-bit key.
pub fn mix_key(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6a09_e667_f3bc_c909, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

fn keyed_rng(words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_key(words))
}

// ---------------------------------------------------------------------------
// Synthetic harness
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticFamily {
    /// Gaussian per-config noise.
    Gaussian,
    /// Symmetric `±base_sd` per-config noise.
    BernoulliScaled,
    /// Gaussian noise plus `confirm_offset` on proposals at confirmation only.
    OffsetInjection,
}

/// Declarative description of a synthetic score generator.
///
/// `score(c, s, stage) = base_mean + effect(c) + seed_sd·ξ(s, stage) + base_sd·ε(c, s, stage)`
/// where `ξ` is shared by every configuration on the same seed (this is what
/// pairing cancels) and `ε` is specific to the configuration.
///
/// `proposal_effect` maps selectors of the form `name=value` to mean shifts; a
/// configuration receives the sum of the shifts whose selector it matches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub family: SyntheticFamily,
    #[serde(default)]
    pub base_mean: f64,
    pub base_sd: f64,
    #[serde(default)]
    pub seed_sd: f64,
    #[serde(default)]
    pub proposal_effect: BTreeMap<String, f64>,
    #[serde(default)]
    pub confirm_offset: f64,
    pub lo: f64,
    pub hi: f64,
}

impl SyntheticSpec {
    pub fn gaussian(base_sd: f64, lo: f64, hi: f64) -> Self {
        Self {
            family: SyntheticFamily::Gaussian,
            base_mean: 0.0,
            base_sd,
            seed_sd: 0.0,
            proposal_effect: BTreeMap::new(),
            confirm_offset: 0.0,
            lo,
            hi,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.lo < self.hi) || !self.lo.is_finite() || !self.hi.is_finite() {
            return Err(HarnessError::Spec(format!(
                "need finite lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if !(self.base_sd >= 0.0) || !(self.seed_sd >= 0.0) {
            return Err(HarnessError::Spec("standard deviations must be >= 0".into()));
        }
        if !self.base_mean.is_finite() || !self.confirm_offset.is_finite() {
            return Err(HarnessError::Spec("base_mean and confirm_offset must be finite".into()));
        }
        if self.confirm_offset != 0.0 && self.family != SyntheticFamily::OffsetInjection {
            return Err(HarnessError::Spec(
                "confirm_offset is only meaningful for the offset_injection family".into(),
            ));
        }
        for (selector, shift) in &self.proposal_effect {
            if !selector.contains('=') {
                return Err(HarnessError::Spec(format!(
                    "effect selector `{selector}` must look like name=value"
                )));
            }
            if !shift.is_finite() {
                return Err(HarnessError::Spec(format!("effect for `{selector}` is not finite")));
            }
        }
        Ok(())
    }

    fn hash(&self) -> u64 {
        let json = serde_json::to_string(self).expect("spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        u64::from_be_bytes(digest[..8].try_into().unwrap())
    }
}

pub struct SyntheticHarness {
    spec: SyntheticSpec,
    spec_hash: u64,
    effects: Vec<(String, ParamValue, f64)>,
}

pub fn make_synthetic(spec: SyntheticSpec) -> Result<SyntheticHarness, HarnessError> {
    spec.validate()?;
    let effects = spec
        .proposal_effect
        .iter()
        .map(|(sel, &shift)| {
            let (name, value) = sel.split_once('=').expect("validated");
            (name.trim().to_string(), ParamValue::parse_loose(value.trim()), shift)
        })
        .collect();
    Ok(SyntheticHarness {
        spec_hash: spec.hash(),
        spec,
        effects,
    })
}

impl SyntheticHarness {
    pub fn spec(&self) -> &SyntheticSpec {
        &self.spec
    }

    /// Mean shift attached to `config` by the effect selectors.
    pub fn effect(&self, config: &Configuration) -> f64 {
        self.effects
            .iter()
            .filter(|(name, value, _)| config.get(name).is_some_and(|v| v.loosely_equals(value)))
            .map(|(_, _, shift)| shift)
            .sum()
    }

    fn idiosyncratic(&self, config: &Configuration, seed: u64, stage: Stage) -> f64 {
        let mut rng = keyed_rng(&[self.spec_hash, config.fingerprint(), seed, stage.tag(), 1]);
        match self.spec.family {
            SyntheticFamily::BernoulliScaled => {
                if rng.random::<bool>() {
                    self.spec.base_sd
                } else {
                    -self.spec.base_sd
                }
            }
            _ => {
                let z: f64 = rng.sample(StandardNormal);
                self.spec.base_sd * z
            }
        }
    }

    fn shared(&self, seed: u64, stage: Stage) -> f64 {
        if self.spec.seed_sd == 0.0 {
            return 0.0;
        }
        let mut rng = keyed_rng(&[self.spec_hash, seed, stage.tag(), 2]);
        let z: f64 = rng.sample(StandardNormal);
        self.spec.seed_sd * z
    }
}

impl Harness for SyntheticHarness {
    fn evaluate(&self, config: &Configuration, seed: u64, stage: Stage) -> Result<f64, HarnessError> {
        Ok(self.spec.base_mean
            + self.effect(config)
            + self.shared(seed, stage)
            + self.idiosyncratic(config, seed, stage))
    }

    fn range(&self) -> (f64, f64) {
        (self.spec.lo, self.spec.hi)
    }

    fn proposal_offset(&self, stage: Stage) -> f64 {
        match (self.spec.family, stage) {
            (SyntheticFamily::OffsetInjection, Stage::Confirm) => self.spec.confirm_offset,
            _ => 0.0,
        }
    }
}

// ---------------------------------------------------------------------------
// Rastrigin + CMA-ES harness
// ---------------------------------------------------------------------------

/// Rastrigin function `10 d + Σ (x_i² - 10 cos(2π x_i))`, with `d = x.len()`.
///
/// Evaluated as `Σ (x_i² + 10 (1 - cos 2π x_i))`, which is the same sum but
/// cannot round below zero.
pub fn rastrigin<T: Real>(x: &[T]) -> T {
    let ten = T::lit(10.0);
    let two_pi = T::lit(std::f64::consts::TAU);
    x.iter().fold(T::zero(), |acc, &xi| {
        acc + xi * xi + ten * (T::one() - (two_pi * xi).cos())
    })
}

/// Harness whose score is the negated best Rastrigin value found by a seeded
/// CMA-ES run with the configuration's `sigma0`, `popsize`, and `dim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmaesHarness {
    pub budget_evals: usize,
    pub lo: f64,
    pub hi: f64,
}

impl CmaesHarness {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if !(self.lo < self.hi) {
            return Err(HarnessError::Spec("need lo < hi".into()));
        }
        if self.budget_evals < 2 {
            return Err(HarnessError::Spec("budget_evals must be at least 2".into()));
        }
        Ok(())
    }
}

impl Harness for CmaesHarness {
    fn evaluate(&self, config: &Configuration, seed: u64, _stage: Stage) -> Result<f64, HarnessError> {
        cmaes_run(config, self.budget_evals, seed)
            .map(|best| -best)
            .map_err(|e: CmaesError| HarnessError::Evaluation {
                config: config.id().to_string(),
                seed,
                reason: e.to_string(),
            })
    }

    fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, f64)]) -> Configuration {
        Configuration::from_pairs(pairs.iter().map(|(k, v)| (*k, ParamValue::Real(*v)))).unwrap()
    }

    struct Constant;

    impl Harness for Constant {
        fn evaluate(&self, config: &Configuration, _seed: u64, _stage: Stage) -> Result<f64, HarnessError> {
            Ok(config.get("score").and_then(|v| v.as_f64()).unwrap_or(0.0))
        }

        fn range(&self) -> (f64, f64) {
            (-10.0, 10.0)
        }
    }

    struct FailsOn(u64);

    impl Harness for FailsOn {
        fn evaluate(&self, config: &Configuration, seed: u64, _stage: Stage) -> Result<f64, HarnessError> {
            if seed == self.0 {
                Err(HarnessError::Evaluation {
                    config: config.id().into(),
                    seed,
                    reason: "boom".into(),
                })
            } else {
                Ok(1.0)
            }
        }

        fn range(&self) -> (f64, f64) {
            (-1.0, 1.0)
        }
    }

    #[test]
    fn identical_configs_give_zero_deltas() {
        let h = make_synthetic(SyntheticSpec::gaussian(3.0, -10.0, 10.0)).unwrap();
        let c = cfg(&[("lr", 0.1)]);
        let d = paired_evaluate(&h, &c, &c, &[5, 1, 3], Stage::Screen).unwrap();
        assert_eq!(d.values(), &[0.0; 3]);
        assert_eq!(d.seed_ids(), &[1, 3, 5]);
    }

    #[test]
    fn constant_harness_gives_constant_difference() {
        let a = cfg(&[("score", 1.5)]);
        let b = cfg(&[("score", 4.0)]);
        let d = paired_evaluate(&Constant, &a, &b, &[1, 2, 3, 4], Stage::Confirm).unwrap();
        assert_eq!(d.values(), &[2.5; 4]);
        let d = paired_evaluate(&Constant, &b, &cfg(&[("score", 40.0)]), &[1], Stage::Confirm).unwrap();
        assert_eq!(d.values(), &[10.0], "clipped to the declared range");
    }

    #[test]
    fn degenerate_gaussian_shift() {
        let mut spec = SyntheticSpec::gaussian(0.0, -10.0, 10.0);
        spec.proposal_effect.insert("lr=0.2".into(), 0.5);
        let h = make_synthetic(spec).unwrap();
        let d = paired_evaluate(&h, &cfg(&[("lr", 0.1)]), &cfg(&[("lr", 0.2)]), &[1, 2, 3, 4, 5], Stage::Screen)
            .unwrap();
        assert_eq!(d.values(), &[0.5; 5]);
    }

    #[test]
    fn seed_validation_and_failure_propagation() {
        let c = cfg(&[("a", 1.0)]);
        let p = cfg(&[("a", 2.0)]);
        assert_eq!(paired_evaluate(&Constant, &c, &p, &[], Stage::Screen), Err(HarnessError::Seeds));
        assert_eq!(paired_evaluate(&Constant, &c, &p, &[1, 1], Stage::Screen), Err(HarnessError::Seeds));
        assert!(matches!(
            paired_evaluate(&FailsOn(7), &c, &p, &[1, 7, 9], Stage::Screen),
            Err(HarnessError::Evaluation { seed: 7, .. })
        ));
    }

    #[test]
    fn synthetic_is_pure() {
        let mut spec = SyntheticSpec::gaussian(1.0, -5.0, 5.0);
        spec.seed_sd = 2.0;
        let h1 = make_synthetic(spec.clone()).unwrap();
        let h2 = make_synthetic(spec).unwrap();
        let c = cfg(&[("x", 0.3)]);
        for seed in [0, 1, u64::MAX] {
            for stage in [Stage::Screen, Stage::Confirm] {
                let a = h1.evaluate(&c, seed, stage).unwrap();
                let b = h2.evaluate(&c, seed, stage).unwrap();
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
        assert_ne!(
            h1.evaluate(&c, 3, Stage::Screen).unwrap(),
            h1.evaluate(&c, 3, Stage::Confirm).unwrap()
        );
    }

    #[test]
    fn offset_injection_only_at_confirmation() {
        let mut spec = SyntheticSpec::gaussian(1.0, -100.0, 100.0);
        spec.family = SyntheticFamily::OffsetInjection;
        spec.confirm_offset = 4.0;
        let h = make_synthetic(spec).unwrap();
        let inc = cfg(&[("wd", 1e-3)]);
        let prop = cfg(&[("wd", 2e-3)]);
        let seeds: Vec<u64> = (0..50).collect();
        let screen = paired_evaluate(&h, &inc, &prop, &seeds, Stage::Screen).unwrap();
        let confirm = paired_evaluate(&h, &inc, &prop, &seeds, Stage::Confirm).unwrap();
        for (s, &seed) in confirm.values().iter().zip(&seeds) {
            let raw = h.evaluate(&prop, seed, Stage::Confirm).unwrap()
                - h.evaluate(&inc, seed, Stage::Confirm).unwrap();
            assert!((s - (raw + 4.0)).abs() < 1e-12);
        }
        for (s, &seed) in screen.values().iter().zip(&seeds) {
            let raw = h.evaluate(&prop, seed, Stage::Screen).unwrap()
                - h.evaluate(&inc, seed, Stage::Screen).unwrap();
            assert_eq!(*s, raw);
        }
        assert_eq!(h.proposal_offset(Stage::Screen), 0.0);
    }

    #[test]
    fn bernoulli_scores_are_two_valued() {
        let mut spec = SyntheticSpec::gaussian(2.0, -5.0, 5.0);
        spec.family = SyntheticFamily::BernoulliScaled;
        let h = make_synthetic(spec).unwrap();
        let c = cfg(&[("x", 1.0)]);
        for seed in 0..100 {
            let s = h.evaluate(&c, seed, Stage::Screen).unwrap();
            assert!(s == 2.0 || s == -2.0);
        }
    }

    #[test]
    fn spec_validation() {
        let mut spec = SyntheticSpec::gaussian(1.0, 1.0, -1.0);
        assert!(spec.validate().is_err());
        spec = SyntheticSpec::gaussian(-1.0, -1.0, 1.0);
        assert!(spec.validate().is_err());
        spec = SyntheticSpec::gaussian(1.0, -1.0, 1.0);
        spec.confirm_offset = 4.0;
        assert!(spec.validate().is_err());
        spec = SyntheticSpec::gaussian(1.0, -1.0, 1.0);
        spec.proposal_effect.insert("nonsense".into(), 1.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn rastrigin_examples() {
        assert_eq!(rastrigin(&[0.0f64; 20]), 0.0);
        let mut x = [0.0f64; 20];
        x[0] = 1.0;
        assert!((rastrigin(&x) - 1.0).abs() < 1e-12);
        assert!((rastrigin(&[0.5f64]) - 20.25).abs() < 1e-12);
        assert!((rastrigin(&[0.5f32]) - 20.25).abs() < 1e-4);
    }
}
