//! Shared fixtures for the benchmarks.

use miml_core::harness::{generate, SynthSpec};
use miml_core::MimlDataset;

/// Bench-generator data with `n_bags` bags.
pub fn dataset(n_bags: usize, seed: u64) -> MimlDataset {
    generate(&SynthSpec {
        n_bags,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .dataset
}

/// Dataset variant each learner accepts.
pub fn dataset_for(algo: miml_core::Algorithm, n_bags: usize, seed: u64) -> MimlDataset {
    let mut spec = SynthSpec {
        n_bags,
        seed,
        ..SynthSpec::default()
    };
    match algo {
        miml_core::Algorithm::InsDif => spec.single_instance = true,
        miml_core::Algorithm::SubCod => spec.target = Some(0),
        _ => {}
    }
    generate(&spec).unwrap().dataset
}

/// `n` labelled points for a binary SVM: the first instances of a two-class
/// view, so both classes are present.
pub fn labelled_points(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
    let data = generate(&SynthSpec {
        n_bags: n,
        n_min: 1,
        n_max: 1,
        noise: 0.3,
        target: Some(0),
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .dataset;
    let points = data
        .bags()
        .map(|b| b.iter().next().unwrap().to_vec())
        .collect();
    let labels = data
        .label_sets()
        .map(|s| if s.contains(1) { 1.0 } else { -1.0 })
        .collect();
    (points, labels)
}
