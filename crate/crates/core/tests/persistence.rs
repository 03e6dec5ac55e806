use miml_core::dataio::{parse_dataset, serialize_dataset, Config, ModelEnvelope};
use miml_core::harness::{generate, SynthSpec};
use miml_core::{train, Algorithm, Bag, Example, LabelSet, MimlDataset, TrainedModel};
use proptest::prelude::*;

fn finite_real() -> impl Strategy<Value = f64> {
    prop_oneof![
        -10.0f64..10.0,
        prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO,
    ]
}

prop_compose! {
    fn random_dataset()(t in 2usize..6, d in 1usize..4, m in 1usize..7)
        (labels in prop::collection::vec(prop::collection::btree_set(0..t, 1..t), m),
         sizes in prop::collection::vec(1usize..4, m),
         values in prop::collection::vec(finite_real(), m * 3 * d),
         t in Just(t), d in Just(d))
        -> MimlDataset
    {
        let mut next = values.into_iter();
        let examples = labels
            .into_iter()
            .zip(sizes)
            .enumerate()
            .map(|(i, (ls, n))| Example {
                bag: Bag::new(
                    format!("bag-{i}"),
                    (0..n).map(|_| (0..d).map(|_| next.next().unwrap()).collect()).collect(),
                ),
                labels: LabelSet::new(ls),
            })
            .collect();
        MimlDataset::new(examples, t, d).unwrap()
    }
}

proptest! {
    #[test]
    fn datasets_round_trip_exactly(ds in random_dataset()) {
        let text = serialize_dataset(&ds).unwrap();
        let back = parse_dataset(&text).unwrap();
        for (a, b) in ds.examples().iter().zip(back.examples()) {
            for (x, y) in a.bag.instances.iter().flatten().zip(b.bag.instances.iter().flatten()) {
                prop_assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        prop_assert_eq!(&back, &ds);
        prop_assert_eq!(serialize_dataset(&back).unwrap(), text);
    }
}

/// Training data each learner accepts.
fn data_for(algo: Algorithm, seed: u64) -> MimlDataset {
    let mut spec = SynthSpec {
        n_bags: 24,
        dim: 3,
        seed,
        ..SynthSpec::default()
    };
    match algo {
        Algorithm::InsDif => spec.single_instance = true,
        Algorithm::SubCod => spec.target = Some(0),
        _ => {}
    }
    generate(&spec).unwrap().dataset
}

fn fitted(algo: Algorithm, seed: u64) -> (TrainedModel, MimlDataset) {
    let ds = data_for(algo, seed);
    let mut cfg = Config::default();
    match algo {
        Algorithm::MimlBoost => cfg.set("boost.rounds", "3"),
        Algorithm::SubCod => cfg.set("subcod.M", "3"),
        _ => {}
    }
    if let Some(k) = algo.seed_key() {
        cfg.set(k, seed.to_string());
    }
    (train(algo, &ds, &cfg).unwrap(), ds)
}

#[test]
fn every_model_payload_round_trips_byte_for_byte() {
    for algo in Algorithm::ALL {
        for seed in 0..2u64 {
            let (model, ds) = fitted(algo, seed);
            let text = model.to_text().unwrap();
            let back = TrainedModel::from_text(&text).unwrap();
            assert_eq!(back, model, "{algo}");
            assert_eq!(back.to_text().unwrap(), text, "{algo}");
            for bag in ds.bags() {
                let (a, b) = (
                    model.model.predict(bag).unwrap(),
                    back.model.predict(bag).unwrap(),
                );
                assert_eq!(a.predicted, b.predicted);
                for (x, y) in a.scores.iter().zip(&b.scores) {
                    assert_eq!(x.to_bits(), y.to_bits());
                }
            }
        }
    }
}

#[test]
fn training_twice_gives_identical_files() {
    for algo in Algorithm::ALL {
        let a = fitted(algo, 7).0.to_text().unwrap();
        let b = fitted(algo, 7).0.to_text().unwrap();
        assert_eq!(a, b, "{algo}");
    }
}

#[test]
fn envelopes_with_bad_tag_or_version_are_rejected() {
    let (model, _) = fitted(Algorithm::MimlSvm, 1);
    let env = model.to_envelope().unwrap();
    let mut wrong_tag = env.clone();
    wrong_tag.algorithm = "xyz".into();
    assert!(ModelEnvelope::from_text(&wrong_tag.to_text()).is_err());
    assert!(TrainedModel::from_envelope(&wrong_tag).is_err());
    let mut wrong_version = env.clone();
    wrong_version.format = "miml-model/0".into();
    assert!(ModelEnvelope::from_text(&wrong_version.to_text()).is_err());
    // A payload of the wrong learner does not load either.
    let mut swapped = env;
    swapped.algorithm = "insdif".into();
    assert!(TrainedModel::from_envelope(&swapped).is_err());
}
