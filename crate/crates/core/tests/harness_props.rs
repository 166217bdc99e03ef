use editgate::harness::{make_synthetic, paired_evaluate, rastrigin, Harness, SyntheticFamily, SyntheticSpec};
use editgate::{Configuration, ParamValue, Stage};
use proptest::prelude::*;

fn conf(name: &str, v: f64) -> Configuration {
    Configuration::from_pairs([(name, ParamValue::Real(v))]).unwrap()
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

#[test]
fn zero_noise_shift_gives_constant_deltas() {
    let mut spec = SyntheticSpec::gaussian(0.0, -1.0, 1.0);
    spec.proposal_effect.insert("lr=0.1".into(), 0.5);
    let h = make_synthetic(spec).unwrap();
    let d = paired_evaluate(&h, &conf("lr", 0.3), &conf("lr", 0.1), &[9, 3, 5, 1, 7], Stage::Screen).unwrap();
    assert_eq!(d.values(), &[0.5; 5]);
    assert_eq!(d.seed_ids(), &[1, 3, 5, 7, 9]);
}

#[test]
fn null_deltas_average_out() {
    let sd = 1.0;
    let h = make_synthetic(SyntheticSpec::gaussian(sd, -100.0, 100.0)).unwrap();
    let n = 100_000u64;
    let seeds: Vec<u64> = (0..n).collect();
    let d = paired_evaluate(&h, &conf("a", 0.0), &conf("a", 1.0), &seeds, Stage::Screen).unwrap();
    let delta_sd = sd * 2f64.sqrt();
    assert!(d.mean().abs() < 5.0 * delta_sd / (n as f64).sqrt(), "{}", d.mean());
}

#[test]
fn pairing_removes_shared_seed_noise() {
    let mut spec = SyntheticSpec::gaussian(0.3, -100.0, 100.0);
    spec.seed_sd = 1.0;
    let h = make_synthetic(spec).unwrap();
    let (inc, prop) = (conf("a", 0.0), conf("a", 1.0));
    let seeds: Vec<u64> = (0..10_000).collect();
    let d = paired_evaluate(&h, &inc, &prop, &seeds, Stage::Screen).unwrap();
    let scores: Vec<f64> = seeds.iter().map(|s| h.evaluate(&prop, *s, Stage::Screen).unwrap()).collect();
    let m = scores.iter().sum::<f64>() / scores.len() as f64;
    let var_scores = scores.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (scores.len() - 1) as f64;
    assert!(d.sample_variance().unwrap() < var_scores);
}

#[test]
fn offset_injection_only_at_confirmation() {
    let spec = SyntheticSpec {
        family: SyntheticFamily::OffsetInjection,
        confirm_offset: 4.0,
        ..SyntheticSpec::gaussian(1.0, -100.0, 100.0)
    };
    let h = make_synthetic(spec).unwrap();
    let (inc, prop) = (conf("a", 0.0), conf("a", 1.0));
    let seeds: Vec<u64> = (0..20_000).collect();
    let screen = paired_evaluate(&h, &inc, &prop, &seeds, Stage::Screen).unwrap();
    let se = 2f64.sqrt() / (seeds.len() as f64).sqrt();
    assert!(screen.mean().abs() < 5.0 * se);
    for &s in &seeds[..500] {
        let p = h.evaluate(&prop, s, Stage::Confirm).unwrap();
        let i = h.evaluate(&inc, s, Stage::Confirm).unwrap();
        let d = paired_evaluate(&h, &inc, &prop, &[s], Stage::Confirm).unwrap();
        assert_eq!(d.values()[0], p + 4.0 - i);
    }
    let confirm = paired_evaluate(&h, &inc, &prop, &seeds, Stage::Confirm).unwrap();
    assert!((confirm.mean() - 4.0).abs() < 5.0 * se);
}

/// Guards against silent changes to the score generator.
#[test]
fn synthetic_scores_are_stable() {
    let mut spec = SyntheticSpec::gaussian(1.0, -10.0, 10.0);
    spec.seed_sd = 0.5;
    let h = make_synthetic(spec).unwrap();
    let v = h.evaluate(&conf("wd", 0.001), 12345, Stage::Confirm).unwrap();
    assert_eq!(v, h.evaluate(&conf("wd", 0.001), 12345, Stage::Confirm).unwrap());
    assert_eq!(v.to_bits(), GOLDEN_SCORE_BITS, "score {v:e}");
}

const GOLDEN_SCORE_BITS: u64 = 13826523472751554401;

proptest! {
    #[test]
    fn rastrigin_is_nonnegative_and_even(x in prop::collection::vec(-6.0f64..6.0, 1..25)) {
        let f = rastrigin(&x);
        prop_assert!(f >= 0.0);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(f, rastrigin(&neg));
    }

    #[test]
    fn deltas_stay_in_declared_range(
        sd in 0.0f64..20.0,
        effect in -30.0f64..30.0,
        seeds in prop::collection::btree_set(any::<u64>(), 1..40),
        confirm in any::<bool>(),
    ) {
        let mut spec = SyntheticSpec::gaussian(sd, -2.0, 3.0);
        spec.proposal_effect.insert("a=1".into(), effect);
        let h = make_synthetic(spec).unwrap();
        let stage = if confirm { Stage::Confirm } else { Stage::Screen };
        let seeds: Vec<u64> = seeds.into_iter().collect();
        let d = paired_evaluate(&h, &conf("a", 0.0), &conf("a", 1.0), &seeds, stage).unwrap();
        prop_assert!(d.values().iter().all(|v| (-2.0..=3.0).contains(v)));
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>(), v in -1.0f64..1.0, confirm in any::<bool>()) {
        let mut spec = SyntheticSpec::gaussian(1.0, -1.0, 1.0);
        spec.seed_sd = 0.7;
        let h = make_synthetic(spec.clone()).unwrap();
        let h2 = make_synthetic(spec).unwrap();
        let stage = if confirm { Stage::Confirm } else { Stage::Screen };
        let c = conf("x", v);
        prop_assert_eq!(h.evaluate(&c, seed, stage).unwrap().to_bits(), h2.evaluate(&c, seed, stage).unwrap().to_bits());
    }

    #[test]
    fn identical_configs_give_zero_deltas(seeds in prop::collection::btree_set(any::<u64>(), 1..20)) {
        let h = make_synthetic(SyntheticSpec::gaussian(1.0, -1.0, 1.0)).unwrap();
        let c = conf("x", 0.5);
        let seeds: Vec<u64> = seeds.into_iter().collect();
        let d = paired_evaluate(&h, &c, &c, &seeds, Stage::Screen).unwrap();
        prop_assert!(d.values().iter().all(|v| *v == 0.0));
    }
}
