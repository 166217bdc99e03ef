//! Acceptance tests over bounded paired differences.
//!
//! Three independent certification channels are provided:
//!
//! * a fixed-level Hoeffding lower confidence bound,
//! * a variance-adaptive empirical Bernstein lower confidence bound,
//! * a test-by-betting wealth process whose crossing of `1/δ` certifies an
//!   improvement at any stopping time (Ville's inequality).
//!
//! All three operate on [`PairedDeltas`]: per-seed improvements of a proposal
//! over the incumbent, with a declared support `[lo, hi]`. Positive values mean
//! improvement.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CertifyError {
    #[error("invalid paired deltas: {0}")]
    InvalidDeltas(String),
    #[error("degenerate range: max(|lo|, |hi|) is zero")]
    DegenerateRange,
    #[error("parameter `{name}` = {value} outside its valid range {valid}")]
    Parameter {
        name: &'static str,
        value: f64,
        valid: &'static str,
    },
    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("normalized sample {value} outside [-1, 1]: bounded-difference contract breached")]
    RangeViolation { value: f64 },
}

pub type Result<T> = std::result::Result<T, CertifyError>;

fn as_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

fn check_open_unit<T: Real>(name: &'static str, delta: T) -> Result<()> {
    if delta > T::zero() && delta < T::one() {
        Ok(())
    } else {
        Err(CertifyError::Parameter {
            name,
            value: as_f64(delta),
            valid: "(0, 1)",
        })
    }
}

/// Which acceptance test a certificate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMode {
    Hoeffding,
    Bernstein,
    Evalue,
}

impl fmt::Display for TestMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestMode::Hoeffding => "hoeffding",
            TestMode::Bernstein => "bernstein",
            TestMode::Evalue => "evalue",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
}

// ---------------------------------------------------------------------------
// Paired deltas
// ---------------------------------------------------------------------------

/// Per-seed improvements `Δ_i` with their declared support `[lo, hi]`.
///
/// Values are kept in ascending seed order; the constructor enforces that the
/// support is non-degenerate, every value lies in it, and seed ids are unique.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPairedDeltas<T>", bound(deserialize = "T: Real + Deserialize<'de>"))]
pub struct PairedDeltas<T> {
    values: Vec<T>,
    lo: T,
    hi: T,
    seed_ids: Vec<u64>,
}

#[derive(Deserialize)]
struct RawPairedDeltas<T> {
    values: Vec<T>,
    lo: T,
    hi: T,
    seed_ids: Vec<u64>,
}

impl<T: Real> TryFrom<RawPairedDeltas<T>> for PairedDeltas<T> {
    type Error = CertifyError;

    fn try_from(raw: RawPairedDeltas<T>) -> Result<Self> {
        PairedDeltas::new(raw.values, raw.lo, raw.hi, raw.seed_ids)
    }
}

impl<T: Real> PairedDeltas<T> {
    pub fn new(values: Vec<T>, lo: T, hi: T, seed_ids: Vec<u64>) -> Result<Self> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(CertifyError::InvalidDeltas(format!(
                "need finite lo < hi, got [{}, {}]",
                as_f64(lo),
                as_f64(hi)
            )));
        }
        if values.is_empty() {
            return Err(CertifyError::InvalidDeltas("no values".into()));
        }
        if seed_ids.len() != values.len() {
            return Err(CertifyError::InvalidDeltas(format!(
                "{} values but {} seed ids",
                values.len(),
                seed_ids.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= lo && **v <= hi)) {
            return Err(CertifyError::InvalidDeltas(format!(
                "value {} outside [{}, {}]",
                as_f64(*v),
                as_f64(lo),
                as_f64(hi)
            )));
        }
        let mut sorted = seed_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(CertifyError::InvalidDeltas("duplicate seed id".into()));
        }
        Ok(Self {
            values,
            lo,
            hi,
            seed_ids,
        })
    }

    /// Builds deltas with sequential seed ids `0..n`.
    pub fn from_values(values: Vec<T>, lo: T, hi: T) -> Result<Self> {
        let ids = (0..values.len() as u64).collect();
        Self::new(values, lo, hi, ids)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn lo(&self) -> T {
        self.lo
    }

    pub fn hi(&self) -> T {
        self.hi
    }

    pub fn seed_ids(&self) -> &[u64] {
        &self.seed_ids
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> T {
        self.hi - self.lo
    }

    /// Sample mean, accumulated as offsets from the first value so that a
    /// constant sample returns that constant exactly.
    pub fn mean(&self) -> T {
        let pivot = self.values[0];
        let n = T::from_count(self.values.len() as u64);
        let offset = self
            .values
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - pivot));
        pivot + offset / n
    }

    /// Unbiased sample variance (divisor `n - 1`). Requires `n >= 2`.
    pub fn sample_variance(&self) -> Result<T> {
        let n = self.values.len();
        if n < 2 {
            return Err(CertifyError::InsufficientSamples { needed: 2, got: n });
        }
        let mean = self.mean();
        let ss = self
            .values
            .iter()
            .fold(T::zero(), |acc, &v| acc + (v - mean) * (v - mean));
        Ok(ss / T::from_count(n as u64 - 1))
    }
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Deltas divided by `R = max(|lo|, |hi|)`, so every entry lies in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedDeltas<T> {
    xs: Vec<T>,
    scale: T,
}

impl<T: Real> NormalizedDeltas<T> {
    pub fn new(xs: Vec<T>, scale: T) -> Result<Self> {
        if !(scale > T::zero()) {
            return Err(CertifyError::DegenerateRange);
        }
        if let Some(x) = xs.iter().find(|x| !(x.abs() <= T::one())) {
            return Err(CertifyError::RangeViolation { value: as_f64(*x) });
        }
        Ok(Self { xs, scale })
    }

    pub fn xs(&self) -> &[T] {
        &self.xs
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn mean(&self) -> T {
        let sum = self.xs.iter().fold(T::zero(), |acc, &x| acc + x);
        sum / T::from_count(self.xs.len() as u64)
    }
}

pub fn normalize<T: Real>(d: &PairedDeltas<T>) -> Result<NormalizedDeltas<T>> {
    let scale = d.lo.abs().max(d.hi.abs());
    if scale == T::zero() {
        return Err(CertifyError::DegenerateRange);
    }
    // |v| <= R holds for every v in [lo, hi]; the min/max guards the last ulp.
    let xs = d
        .values
        .iter()
        .map(|&v| (v / scale).max(-T::one()).min(T::one()))
        .collect();
    Ok(NormalizedDeltas { xs, scale })
}

// ---------------------------------------------------------------------------
// Fixed-n lower confidence bounds
// ---------------------------------------------------------------------------

/// Hoeffding half-width `(b - a) * sqrt(ln(1/δ) / (2n))`.
pub fn hoeffding_radius<T: Real>(width: T, n: usize, delta: T) -> T {
    let two_n = T::from_count(2 * n as u64);
    width * ((T::one() / delta).ln() / two_n).sqrt()
}

/// One-sided `1 - δ` Hoeffding lower confidence bound on the mean difference.
pub fn hoeffding_lcb<T: Real>(d: &PairedDeltas<T>, delta: T) -> Result<T> {
    check_open_unit("delta", delta)?;
    Ok(d.mean() - hoeffding_radius(d.width(), d.len(), delta))
}

/// One-sided `1 - δ` empirical Bernstein lower confidence bound:
/// `μ̂ - sqrt(2 σ̂² ln(3/δ) / n) - 3 (b - a) ln(3/δ) / n`.
pub fn bernstein_lcb<T: Real>(d: &PairedDeltas<T>, delta: T) -> Result<T> {
    check_open_unit("delta", delta)?;
    let n = d.len();
    let var = d.sample_variance()?;
    let nn = T::from_count(n as u64);
    let log_term = (T::lit(3.0) / delta).ln();
    let variance_term = if var == T::zero() {
        T::zero()
    } else {
        (T::lit(2.0) * var * log_term / nn).sqrt()
    };
    let range_term = T::lit(3.0) * d.width() * log_term / nn;
    Ok(d.mean() - variance_term - range_term)
}

// ---------------------------------------------------------------------------
// Wealth process
// ---------------------------------------------------------------------------

/// Running wealth `W` of the betting process, `W_0 = 1`.
///
/// Stored as `ln W` plus an absorbed flag for `W = 0`; [`WealthState::wealth`]
/// exponentiates on read.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthState<T> {
    log_wealth: T,
    absorbed: bool,
    factors: Vec<T>,
}

impl<T: Real> Default for WealthState<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> WealthState<T> {
    pub fn new() -> Self {
        Self {
            log_wealth: T::zero(),
            absorbed: false,
            factors: Vec::new(),
        }
    }

    pub fn wealth(&self) -> T {
        if self.absorbed {
            T::zero()
        } else {
            self.log_wealth.exp()
        }
    }

    /// `ln W`, or `-inf` once absorbed at zero.
    pub fn log_wealth(&self) -> T {
        if self.absorbed {
            T::neg_infinity()
        } else {
            self.log_wealth
        }
    }

    pub fn is_absorbed(&self) -> bool {
        self.absorbed
    }

    /// Every per-sample factor `1 + λx` applied so far.
    pub fn factors(&self) -> &[T] {
        &self.factors
    }

    /// Applies one factor `1 + λx`. The state is untouched on error.
    pub fn step(&mut self, x: T, lambda: T) -> Result<T> {
        if !(x.abs() <= T::one()) {
            return Err(CertifyError::RangeViolation { value: as_f64(x) });
        }
        if !(lambda >= T::zero() && lambda <= T::one()) {
            return Err(CertifyError::Parameter {
                name: "lambda",
                value: as_f64(lambda),
                valid: "[0, 1]",
            });
        }
        let factor = T::one() + lambda * x;
        self.factors.push(factor);
        if factor <= T::zero() {
            self.absorbed = true;
        } else if !self.absorbed {
            self.log_wealth = self.log_wealth + factor.ln();
        }
        Ok(factor)
    }
}

/// Betting fraction chosen before each sample is observed.
pub trait LambdaPolicy<T> {
    fn next_lambda(&self, state: &WealthState<T>) -> T;
}

/// Built-in betting rules.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum LambdaRule {
    /// Fixed fraction; `1.0` stakes everything on each observation.
    Constant { lambda: f64 },
    /// `λ = 1 - ε`, which can never be ruined by a single `x = -1`.
    Capped { epsilon: f64 },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Constant { lambda: 1.0 }
    }
}

impl LambdaRule {
    pub fn capped() -> Self {
        LambdaRule::Capped { epsilon: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        let (name, v) = match *self {
            LambdaRule::Constant { lambda } => ("lambda", lambda),
            LambdaRule::Capped { epsilon } => ("epsilon", epsilon),
        };
        if (0.0..=1.0).contains(&v) {
            Ok(())
        } else {
            Err(CertifyError::Parameter {
                name,
                value: v,
                valid: "[0, 1]",
            })
        }
    }
}

impl<T: Real> LambdaPolicy<T> for LambdaRule {
    fn next_lambda(&self, _state: &WealthState<T>) -> T {
        match *self {
            LambdaRule::Constant { lambda } => T::lit(lambda),
            LambdaRule::Capped { epsilon } => T::one() - T::lit(epsilon),
        }
    }
}

/// Applies a single betting step; consumes and returns the state.
pub fn evalue_step<T: Real>(mut w: WealthState<T>, x: T, lambda: T) -> Result<WealthState<T>> {
    w.step(x, lambda)?;
    Ok(w)
}

/// Applies one round of betting over `xs` in order and returns the round
/// factor `E_t = Π (1 + λ_i x_i)`.
///
/// All samples are range-checked before the first step, so on error the
/// wealth stream is left untouched.
pub fn evalue_round<T: Real, P: LambdaPolicy<T> + ?Sized>(
    mut w: WealthState<T>,
    xs: &NormalizedDeltas<T>,
    policy: &P,
) -> Result<(WealthState<T>, T)> {
    if let Some(x) = xs.xs.iter().find(|x| !(x.abs() <= T::one())) {
        return Err(CertifyError::RangeViolation { value: as_f64(*x) });
    }
    let mut log_round = T::zero();
    let mut ruined = false;
    for &x in &xs.xs {
        let lambda = policy.next_lambda(&w);
        let factor = w.step(x, lambda)?;
        if factor <= T::zero() {
            ruined = true;
        } else {
            log_round = log_round + factor.ln();
        }
    }
    let round_factor = if ruined { T::zero() } else { log_round.exp() };
    Ok((w, round_factor))
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Full statistical record of one confirmation test.
///
/// For the fixed-n modes `threshold` is zero and the decision is `lcb > 0`.
/// For the wealth mode `threshold` is `1/δ` and the decision is
/// `wealth_after >= threshold`; `lcb` then carries the Hoeffding bound at the
/// same level for reference only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Certificate<T> {
    pub mode: TestMode,
    pub n: usize,
    pub mean: T,
    pub lcb: T,
    pub delta_spent: T,
    pub wealth_before: T,
    pub wealth_after: T,
    pub threshold: T,
    pub decision: Decision,
}

impl<T: Real> Certificate<T> {
    /// Whether the decision agrees with the bound/wealth it records.
    pub fn is_consistent(&self) -> bool {
        let accept = match self.mode {
            TestMode::Hoeffding | TestMode::Bernstein => self.lcb > T::zero(),
            TestMode::Evalue => self.wealth_after >= self.threshold,
        };
        let bounded = match self.mode {
            TestMode::Evalue => true,
            _ => self.lcb <= self.mean,
        };
        bounded && accept == (self.decision == Decision::Accept)
    }
}

/// Runs the chosen test at level `delta_t` and returns the certificate with the
/// (possibly advanced) wealth stream. Fixed-n modes leave the wealth untouched.
pub fn certify<T: Real, P: LambdaPolicy<T> + ?Sized>(
    d: &PairedDeltas<T>,
    delta_t: T,
    wealth: WealthState<T>,
    mode: TestMode,
    global_delta: T,
    policy: &P,
) -> Result<(Certificate<T>, WealthState<T>)> {
    check_open_unit("delta_t", delta_t)?;
    let mean = d.mean();
    let wealth_before = wealth.wealth();
    match mode {
        TestMode::Hoeffding | TestMode::Bernstein => {
            let lcb = if mode == TestMode::Hoeffding {
                hoeffding_lcb(d, delta_t)?
            } else {
                bernstein_lcb(d, delta_t)?
            };
            let decision = if lcb > T::zero() {
                Decision::Accept
            } else {
                Decision::Reject
            };
            let cert = Certificate {
                mode,
                n: d.len(),
                mean,
                lcb,
                delta_spent: delta_t,
                wealth_before,
                wealth_after: wealth_before,
                threshold: T::zero(),
                decision,
            };
            Ok((cert, wealth))
        }
        TestMode::Evalue => {
            check_open_unit("global_delta", global_delta)?;
            let lcb = hoeffding_lcb(d, delta_t)?;
            let xs = normalize(d)?;
            let (wealth, _) = evalue_round(wealth, &xs, policy)?;
            let wealth_after = wealth.wealth();
            let threshold = T::one() / global_delta;
            let decision = if wealth_after >= threshold {
                Decision::Accept
            } else {
                Decision::Reject
            };
            let cert = Certificate {
                mode,
                n: d.len(),
                mean,
                lcb,
                delta_spent: delta_t,
                wealth_before,
                wealth_after,
                threshold,
                decision,
            };
            Ok((cert, wealth))
        }
    }
}
