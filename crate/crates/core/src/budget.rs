//! Familywise error budget: splits a global level `δ` across confirmation tests.
//!
//! Three schedules are supported:
//!
//! * `uniform`: `δ_t = δ / T` for rounds `t = 1..T`,
//! * `harmonic`: `δ_t = δ / (t H_B)` indexed by the round at which a
//!   confirmation happens,
//! * `cths`: `δ_k = δ / (k H_B)` indexed by the `k`-th confirmation event, so
//!   rounds that never escalate cost nothing.
//!
//! Screening is free under every schedule: only confirmation events append a
//! non-zero amount to the ledger. All arithmetic is generic over [`Scalar`], so
//! the same code runs in `f64` and in exact rational arithmetic.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BudgetError {
    #[error("index {index} outside 1..={horizon}")]
    OutOfRange { index: u64, horizon: u64 },
    #[error("error budget exhausted: {0}")]
    Exhausted(String),
    #[error("round {0} already spent its single confirmation test")]
    RoundAlreadySpent(u64),
    #[error("no round has started yet")]
    NoRound,
    #[error("invalid budget parameter: {0}")]
    Parameter(String),
}

pub type Result<T> = std::result::Result<T, BudgetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    Uniform,
    Harmonic,
    Cths,
}

impl fmt::Display for ScheduleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleKind::Uniform => "uniform",
            ScheduleKind::Harmonic => "harmonic",
            ScheduleKind::Cths => "cths",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BudgetEvent {
    RoundAdvance,
    Confirmation,
}

/// `H_B = Σ_{i=1..B} 1/i` by direct summation.
pub fn harmonic_number<T: Scalar>(b: u64) -> T {
    (1..=b).fold(T::zero(), |acc, i| acc + T::one() / T::from_count(i))
}

fn check_index(index: u64, horizon: u64) -> Result<()> {
    if index >= 1 && index <= horizon {
        Ok(())
    } else {
        Err(BudgetError::OutOfRange { index, horizon })
    }
}

/// `δ / T`, the same for every round `1 <= t <= T`.
pub fn uniform_allocation<T: Scalar>(delta: &T, horizon: u64, t: u64) -> Result<T> {
    check_index(t, horizon)?;
    Ok(delta.clone() / T::from_count(horizon))
}

/// `δ / (t H_B)`.
pub fn harmonic_allocation<T: Scalar>(delta: &T, b: u64, t: u64) -> Result<T> {
    check_index(t, b)?;
    Ok(delta.clone() / (T::from_count(t) * harmonic_number::<T>(b)))
}

/// `δ / (k H_B)` for the `k`-th confirmation event; `k > B` means the budget
/// is gone.
pub fn cths_allocation<T: Scalar>(delta: &T, b: u64, k: u64) -> Result<T> {
    if k > b {
        return Err(BudgetError::Exhausted(format!(
            "confirmation {k} exceeds the {b} budgeted events"
        )));
    }
    check_index(k, b)?;
    Ok(delta.clone() / (T::from_count(k) * harmonic_number::<T>(b)))
}

/// One ledger line: what happened and how much it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry<T> {
    pub event: BudgetEvent,
    pub round: u64,
    pub confirm: u64,
    pub amount: T,
}

impl<T> LedgerEntry<T> {
    pub fn label(&self) -> String {
        match self.event {
            BudgetEvent::RoundAdvance => format!("round {}", self.round),
            BudgetEvent::Confirmation => {
                format!("confirm k={} t={}", self.confirm, self.round)
            }
        }
    }
}

/// Single budget authority for one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetState<T> {
    kind: ScheduleKind,
    global_delta: T,
    horizon: u64,
    round_index: u64,
    confirm_index: u64,
    spent: T,
    ledger: Vec<LedgerEntry<T>>,
    round_spent: bool,
    /// `H_B`, computed once.
    harmonic: T,
}

impl<T: Scalar> BudgetState<T> {
    pub fn new(kind: ScheduleKind, global_delta: T, horizon: u64) -> Result<Self> {
        if !(global_delta > T::zero() && global_delta < T::one()) {
            return Err(BudgetError::Parameter(format!(
                "global delta {:?} outside (0, 1)",
                global_delta
            )));
        }
        if horizon == 0 {
            return Err(BudgetError::Parameter("horizon must be at least 1".into()));
        }
        Ok(Self {
            kind,
            global_delta,
            horizon,
            round_index: 0,
            confirm_index: 0,
            spent: T::zero(),
            ledger: Vec::new(),
            round_spent: false,
            harmonic: harmonic_number(horizon),
        })
    }

    pub fn kind(&self) -> ScheduleKind {
        self.kind
    }

    pub fn global_delta(&self) -> &T {
        &self.global_delta
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn round_index(&self) -> u64 {
        self.round_index
    }

    pub fn confirm_index(&self) -> u64 {
        self.confirm_index
    }

    pub fn spent(&self) -> &T {
        &self.spent
    }

    pub fn remaining(&self) -> T {
        self.global_delta.clone() - self.spent.clone()
    }

    pub fn ledger(&self) -> &[LedgerEntry<T>] {
        &self.ledger
    }

    /// Allocation for the current round (uniform/harmonic) or next
    /// confirmation (cths), without spending it.
    pub fn allocation_for(&self, event: BudgetEvent) -> Result<T> {
        match (self.kind, event) {
            (ScheduleKind::Cths, BudgetEvent::RoundAdvance) => Ok(T::zero()),
            (ScheduleKind::Cths, BudgetEvent::Confirmation) => {
                let k = self.confirm_index + 1;
                if k > self.horizon {
                    return Err(BudgetError::Exhausted(format!(
                        "confirmation {k} exceeds the {} budgeted events",
                        self.horizon
                    )));
                }
                Ok(self.harmonic_share(k))
            }
            (kind, BudgetEvent::RoundAdvance) => {
                let t = self.round_index + 1;
                if t > self.horizon {
                    // rounds past the horizon carry no budget
                    Ok(T::zero())
                } else {
                    self.round_allocation(kind, t)
                }
            }
            (kind, BudgetEvent::Confirmation) => {
                if self.round_index == 0 {
                    return Err(BudgetError::NoRound);
                }
                self.round_allocation(kind, self.round_index)
            }
        }
    }

    fn round_allocation(&self, kind: ScheduleKind, t: u64) -> Result<T> {
        match kind {
            ScheduleKind::Uniform => uniform_allocation(&self.global_delta, self.horizon, t),
            ScheduleKind::Harmonic => {
                check_index(t, self.horizon)?;
                Ok(self.harmonic_share(t))
            }
            ScheduleKind::Cths => unreachable!("cths is indexed by confirmations"),
        }
    }

    /// `δ / (i H_B)`.
    fn harmonic_share(&self, i: u64) -> T {
        self.global_delta.clone() / (T::from_count(i) * self.harmonic.clone())
    }

    /// Whether a confirmation event would currently be granted.
    pub fn can_confirm(&self) -> bool {
        match self.kind {
            ScheduleKind::Cths => self.confirm_index < self.horizon,
            _ => {
                self.round_index >= 1 && self.round_index <= self.horizon && !self.round_spent
            }
        }
    }

    /// Applies `event` in place and returns the allocation it carries.
    ///
    /// For uniform/harmonic a round advance returns the level available to
    /// that round's single confirmation but records zero spend; the spend is
    /// booked when the confirmation happens. On error the state is unchanged.
    pub fn apply(&mut self, event: BudgetEvent) -> Result<T> {
        match event {
            BudgetEvent::RoundAdvance => {
                let available = self.allocation_for(event)?;
                self.round_index += 1;
                self.round_spent = false;
                self.ledger.push(LedgerEntry {
                    event,
                    round: self.round_index,
                    confirm: self.confirm_index,
                    amount: T::zero(),
                });
                Ok(available)
            }
            BudgetEvent::Confirmation => {
                if self.kind != ScheduleKind::Cths && self.round_spent {
                    return Err(BudgetError::RoundAlreadySpent(self.round_index));
                }
                let amount = self.allocation_for(event)?;
                let after = self.spent.clone() + amount.clone();
                if after > self.global_delta.clone() + T::budget_slack() {
                    return Err(BudgetError::Exhausted(format!(
                        "spending {:?} would exceed global delta {:?}",
                        amount, self.global_delta
                    )));
                }
                self.spent = after;
                self.confirm_index += 1;
                self.round_spent = true;
                self.ledger.push(LedgerEntry {
                    event,
                    round: self.round_index,
                    confirm: self.confirm_index,
                    amount: amount.clone(),
                });
                Ok(amount)
            }
        }
    }

    /// Functional form of [`BudgetState::apply`].
    pub fn next_delta(&self, event: BudgetEvent) -> Result<(T, BudgetState<T>)> {
        let mut next = self.clone();
        let amount = next.apply(event)?;
        Ok((amount, next))
    }

    /// Rebuilds a state by re-applying every ledger event from scratch, and
    /// checks that each recorded amount matches the recomputed one.
    pub fn replay(
        kind: ScheduleKind,
        global_delta: T,
        horizon: u64,
        ledger: &[LedgerEntry<T>],
    ) -> Result<Self> {
        let mut state = Self::new(kind, global_delta, horizon)?;
        for (i, entry) in ledger.iter().enumerate() {
            let amount = state.apply(entry.event)?;
            let booked = &state.ledger[i];
            let expected_amount = match entry.event {
                BudgetEvent::RoundAdvance => T::zero(),
                BudgetEvent::Confirmation => amount,
            };
            if booked.round != entry.round
                || booked.confirm != entry.confirm
                || expected_amount != entry.amount
            {
                return Err(BudgetError::Parameter(format!(
                    "ledger entry {i} ({}) does not match replay",
                    entry.label()
                )));
            }
        }
        Ok(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::ratio;
    use num_rational::BigRational;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn harmonic_number_small() {
        assert_eq!(harmonic_number::<BigRational>(6), ratio(49, 20));
        assert!(close(harmonic_number::<f64>(6), 2.45, 1e-15));
        assert_eq!(harmonic_number::<f64>(1), 1.0);
    }

    #[test]
    fn uniform_examples() {
        assert!(close(uniform_allocation(&0.1, 10, 4).unwrap(), 0.01, 1e-17));
        assert_eq!(uniform_allocation(&0.1, 1, 1).unwrap(), 0.1);
        let total: BigRational = (1..=10)
            .map(|t| uniform_allocation(&ratio(1, 10), 10, t).unwrap())
            .fold(ratio(0, 1), |a, b| a + b);
        assert_eq!(total, ratio(1, 10));
        assert!(matches!(
            uniform_allocation(&0.1, 10, 11),
            Err(BudgetError::OutOfRange { .. })
        ));
        assert!(uniform_allocation(&0.1, 10, 0).is_err());
    }

    #[test]
    fn harmonic_examples() {
        let d = harmonic_allocation(&0.1, 6, 3).unwrap();
        assert!(close(d, 0.013605, 1e-6), "{d}");
        let total: f64 = (3..=6).map(|t| harmonic_allocation(&0.1, 6, t).unwrap()).sum();
        assert!(close(total, 0.038840, 1e-4), "{total}");
        assert_eq!(harmonic_allocation(&0.1, 1, 1).unwrap(), 0.1);
        assert!(harmonic_allocation(&0.1, 6, 7).is_err());
    }

    #[test]
    fn cths_examples() {
        let spends: Vec<f64> = (1..=3).map(|k| cths_allocation(&0.1, 6, k).unwrap()).collect();
        for (got, want) in spends.iter().zip([0.040816, 0.020408, 0.013605]) {
            assert!(close(*got, want, 1e-6), "{got} vs {want}");
        }
        let total: f64 = spends.iter().sum();
        assert!(close(total, 0.0748, 5e-5), "{total}");
        assert_eq!(cths_allocation(&0.1, 1, 1).unwrap(), 0.1);
        let full: BigRational = (1..=6)
            .map(|k| cths_allocation(&ratio(1, 10), 6, k).unwrap())
            .fold(ratio(0, 1), |a, b| a + b);
        assert_eq!(full, ratio(1, 10));
        assert!(matches!(
            cths_allocation(&0.1, 6, 7),
            Err(BudgetError::Exhausted(_))
        ));
    }

    #[test]
    fn next_delta_examples() {
        let s = BudgetState::new(ScheduleKind::Cths, 0.1, 6).unwrap();
        let (amount, s2) = s.next_delta(BudgetEvent::Confirmation).unwrap();
        assert!(close(amount, 0.040816, 1e-6));
        assert_eq!(s2.confirm_index(), 1);
        assert_eq!(s.confirm_index(), 0);

        let s = BudgetState::new(ScheduleKind::Uniform, 0.1, 10).unwrap();
        let (amount, s2) = s.next_delta(BudgetEvent::RoundAdvance).unwrap();
        assert!(close(amount, 0.01, 1e-17));
        assert_eq!(s2.round_index(), 1);
        assert_eq!(*s2.spent(), 0.0);

        let mut s = BudgetState::new(ScheduleKind::Cths, 0.1, 6).unwrap();
        for _ in 0..6 {
            s.apply(BudgetEvent::Confirmation).unwrap();
        }
        assert!(!s.can_confirm());
        assert!(matches!(
            s.next_delta(BudgetEvent::Confirmation),
            Err(BudgetError::Exhausted(_))
        ));
        assert!(close(*s.spent(), 0.1, 1e-12));
    }

    #[test]
    fn cths_rounds_are_free() {
        let mut s = BudgetState::new(ScheduleKind::Cths, 0.1, 6).unwrap();
        for _ in 0..20 {
            assert_eq!(s.apply(BudgetEvent::RoundAdvance).unwrap(), 0.0);
        }
        assert_eq!(*s.spent(), 0.0);
        assert_eq!(s.round_index(), 20);
        assert!(s.can_confirm());
    }

    #[test]
    fn harmonic_confirmation_uses_round_index() {
        let mut s = BudgetState::new(ScheduleKind::Harmonic, 0.1, 6).unwrap();
        assert_eq!(s.apply(BudgetEvent::Confirmation), Err(BudgetError::NoRound));
        for _ in 0..3 {
            s.apply(BudgetEvent::RoundAdvance).unwrap();
        }
        let d = s.apply(BudgetEvent::Confirmation).unwrap();
        assert!(close(d, 0.1 / (3.0 * 2.45), 1e-15));
        assert_eq!(
            s.apply(BudgetEvent::Confirmation),
            Err(BudgetError::RoundAlreadySpent(3))
        );
        assert!(!s.can_confirm());
        s.apply(BudgetEvent::RoundAdvance).unwrap();
        assert!(s.can_confirm());
    }

    #[test]
    fn rounds_past_horizon_carry_no_budget() {
        let mut s = BudgetState::new(ScheduleKind::Uniform, 0.1, 2).unwrap();
        s.apply(BudgetEvent::RoundAdvance).unwrap();
        s.apply(BudgetEvent::RoundAdvance).unwrap();
        assert_eq!(s.apply(BudgetEvent::RoundAdvance).unwrap(), 0.0);
        assert!(!s.can_confirm());
        let before = s.clone();
        assert!(matches!(
            s.apply(BudgetEvent::Confirmation),
            Err(BudgetError::OutOfRange { .. })
        ));
        assert_eq!(s, before);
    }

    #[test]
    fn replay_reconstructs_state() {
        let mut s = BudgetState::new(ScheduleKind::Harmonic, 0.1, 6).unwrap();
        for t in 1..=6 {
            s.apply(BudgetEvent::RoundAdvance).unwrap();
            if t >= 3 {
                s.apply(BudgetEvent::Confirmation).unwrap();
            }
        }
        let r = BudgetState::replay(ScheduleKind::Harmonic, 0.1, 6, s.ledger()).unwrap();
        assert_eq!(r, s);

        let mut tampered = s.ledger().to_vec();
        let last = tampered.len() - 1;
        tampered[last].amount *= 1.0 + 1e-9;
        assert!(BudgetState::replay(ScheduleKind::Harmonic, 0.1, 6, &tampered).is_err());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(BudgetState::new(ScheduleKind::Uniform, 0.0, 5).is_err());
        assert!(BudgetState::new(ScheduleKind::Uniform, 1.0, 5).is_err());
        assert!(BudgetState::new(ScheduleKind::Uniform, 0.1, 0).is_err());
    }
}
