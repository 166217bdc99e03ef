use editgate::certify::{evalue_round, LambdaRule, NormalizedDeltas, WealthState};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn wealth_is_never_negative(
        steps in prop::collection::vec((-1.0f64..=1.0, 0.0f64..=1.0), 0..200)
    ) {
        let mut w = WealthState::<f64>::new();
        for (x, lambda) in steps {
            w.step(x, lambda).unwrap();
            prop_assert!(w.wealth() >= 0.0);
            prop_assert!(w.wealth().is_finite());
        }
    }

    #[test]
    fn ruin_is_absorbing(
        before in prop::collection::vec(-0.9f64..=1.0, 0..20),
        after in prop::collection::vec(-1.0f64..=1.0, 1..20),
    ) {
        let mut w = WealthState::<f64>::new();
        for x in before {
            w.step(x, 1.0).unwrap();
        }
        w.step(-1.0, 1.0).unwrap();
        prop_assert!(w.is_absorbed());
        for x in after {
            w.step(x, 1.0).unwrap();
            prop_assert_eq!(w.wealth(), 0.0);
        }
    }

    #[test]
    fn capped_policy_never_ruins(xs in prop::collection::vec(-1.0f64..=1.0, 1..300)) {
        let policy = LambdaRule::capped();
        let batch = NormalizedDeltas::new(xs, 1.0).unwrap();
        let (w, factor) = evalue_round(WealthState::new(), &batch, &policy).unwrap();
        prop_assert!(!w.is_absorbed());
        prop_assert!(factor > 0.0);
    }

    #[test]
    fn round_factor_is_wealth_ratio(
        first in prop::collection::vec(-0.5f64..=1.0, 1..30),
        second in prop::collection::vec(-0.5f64..=1.0, 1..30),
    ) {
        let policy = LambdaRule::default();
        let (w1, _) = evalue_round(WealthState::new(), &NormalizedDeltas::new(first, 1.0).unwrap(), &policy).unwrap();
        let (w2, e2) = evalue_round(w1.clone(), &NormalizedDeltas::new(second, 1.0).unwrap(), &policy).unwrap();
        prop_assert!((w2.wealth() - w1.wealth() * e2).abs() <= 1e-9 * w2.wealth().max(1.0));
    }
}

/// Under a mean-zero bounded stream each factor has expectation one and the
/// wealth process has expectation at most one.
#[test]
fn wealth_is_a_supermartingale_under_the_null() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let draws = 1_000_000;
    let lambda = 1.0;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..draws {
        let e = 1.0 + lambda * rng.random_range(-1.0f64..=1.0);
        sum += e;
        sum_sq += e * e;
    }
    let mean = sum / draws as f64;
    let se = ((sum_sq / draws as f64 - mean * mean) / draws as f64).sqrt();
    assert!(mean <= 1.0 + 3.0 * se, "mean factor {mean}, se {se}");

    let paths = 100_000;
    let horizon = 10;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..paths {
        let mut w = WealthState::<f64>::new();
        for _ in 0..horizon {
            w.step(rng.random_range(-1.0f64..=1.0), lambda).unwrap();
        }
        sum += w.wealth();
        sum_sq += w.wealth() * w.wealth();
    }
    let mean = sum / paths as f64;
    let se = ((sum_sq / paths as f64 - mean * mean) / paths as f64).sqrt();
    assert!(mean <= 1.0 + 3.0 * se, "mean wealth {mean}, se {se}");
}

/// Ville: Pr(sup_t W_t ≥ 1/δ) ≤ δ for a nonnegative supermartingale.
#[test]
fn crossing_probability_respects_ville() {
    let runs = 2000;
    let horizon = 200;
    let delta = 0.1;
    for (label, sample) in [
        ("uniform", (|r: &mut ChaCha8Rng| r.random_range(-1.0f64..=1.0)) as fn(&mut ChaCha8Rng) -> f64),
        ("scaled_sign", |r: &mut ChaCha8Rng| if r.random::<bool>() { 0.5 } else { -0.5 }),
    ] {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let crossed = (0..runs)
            .filter(|_| {
                let mut w = WealthState::<f64>::new();
                (0..horizon).any(|_| {
                    w.step(sample(&mut rng), 1.0).unwrap();
                    w.wealth() >= 1.0 / delta
                })
            })
            .count();
        let rate = crossed as f64 / runs as f64;
        let limit = delta + 3.0 * (delta * (1.0 - delta) / runs as f64).sqrt();
        assert!(rate <= limit, "{label}: {rate} > {limit}");
    }
}
