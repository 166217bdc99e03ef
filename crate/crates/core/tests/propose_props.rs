use editgate::gate::Registry;
use editgate::propose::{propose, MutationProposer, ParamDomain, ParamSpace, ProposalKind, Proposer};
use editgate::{Configuration, ParamValue};
use proptest::prelude::*;

fn wd_space() -> ParamSpace {
    let mut space = ParamSpace::default();
    space.domains.insert(
        "wd".into(),
        ParamDomain::Continuous { lo: 1e-6, hi: 1.0, log: true, scale: None },
    );
    space
}

#[test]
fn log_mutation_stays_within_factor_three() {
    let inc = Configuration::from_pairs([("wd", ParamValue::Real(0.001))]).unwrap();
    for seed in 0..500 {
        let out = propose(ProposalKind::Mutate, &inc, &wd_space(), &[], &Registry::default(), seed);
        assert_eq!(out.len(), 1);
        let v = out[0].get("wd").unwrap().as_f64().unwrap();
        assert!((0.001 / 3.0..=0.003).contains(&v), "{v}");
        assert_ne!(v, 0.001);
    }
}

#[test]
fn point_space_yields_nothing() {
    let mut space = ParamSpace::default();
    space.domains.insert(
        "wd".into(),
        ParamDomain::Continuous { lo: 0.01, hi: 0.01, log: false, scale: None },
    );
    let inc = Configuration::from_pairs([("wd", ParamValue::Real(0.01))]).unwrap();
    assert!(propose(ProposalKind::Mutate, &inc, &space, &[], &Registry::default(), 1).is_empty());
}

#[test]
fn presets_come_back_in_order() {
    let inc = Configuration::from_pairs([("a", ParamValue::Int(0))]).unwrap();
    let presets: Vec<Configuration> = (1..=3)
        .map(|i| Configuration::from_pairs([("a", ParamValue::Int(i))]).unwrap())
        .collect();
    let out = propose(ProposalKind::Preset, &inc, &ParamSpace::default(), &presets, &Registry::default(), 0);
    assert_eq!(out, presets);
}

#[derive(Debug, Clone)]
struct Case {
    space: ParamSpace,
    incumbent: Configuration,
}

fn domain() -> impl Strategy<Value = ParamDomain> {
    prop_oneof![
        (1e-6f64..1.0, 1.0f64..1e3, any::<bool>()).prop_map(|(lo, span, log)| ParamDomain::Continuous {
            lo,
            hi: lo * span,
            log,
            scale: None,
        }),
        (-50i64..50, 0i64..20, 1i64..5).prop_map(|(lo, w, scale)| ParamDomain::Integer { lo, hi: lo + w, scale }),
        prop::collection::btree_set("[a-e]{1,2}", 1..5).prop_map(|s| ParamDomain::Categorical {
            values: s.into_iter().map(ParamValue::Token).collect(),
        }),
    ]
}

fn case() -> impl Strategy<Value = Case> {
    prop::collection::btree_map("[p-t]", domain(), 1..5).prop_flat_map(|domains| {
        let space = ParamSpace { domains };
        let picks: Vec<_> = space.domains.values().cloned().collect();
        (Just(space), any::<u64>()).prop_map(move |(space, seed)| {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let params = space
                .domains
                .keys()
                .zip(&picks)
                .map(|(k, d)| (k.clone(), d.sample(&mut rng)))
                .collect();
            Case {
                incumbent: Configuration::new(params).unwrap(),
                space,
            }
        })
    })
}

proptest! {
    #[test]
    fn candidates_stay_in_domain_and_differ(c in case(), seed in any::<u64>(), round in 1u64..50, k in 1usize..6) {
        prop_assert!(c.space.contains(&c.incumbent));
        let p = MutationProposer { space: c.space.clone(), candidates: k };
        let out = p.propose(&c.incumbent, &Registry::default(), round, seed);
        prop_assert!(out.len() <= k);
        for cand in &out {
            prop_assert!(c.space.contains(cand), "{} outside space", cand.id());
            prop_assert_ne!(cand.id(), c.incumbent.id());
            prop_assert_eq!(cand.params().keys().collect::<Vec<_>>(), c.incumbent.params().keys().collect::<Vec<_>>());
        }
    }

    #[test]
    fn proposals_are_deterministic(c in case(), seed in any::<u64>(), round in 1u64..50) {
        let p = MutationProposer { space: c.space.clone(), candidates: 3 };
        let a = p.propose(&c.incumbent, &Registry::default(), round, seed);
        let b = p.propose(&c.incumbent, &Registry::default(), round, seed);
        prop_assert_eq!(a, b);
    }
}
