use miml_core::harness::{generate, SynthSpec};
use miml_core::kernels::*;
use miml_core::Bag;
use proptest::prelude::*;

/// Kernel between two Gram objects, each given as a set of points: a bag is
/// its instances, an instance is itself.
fn object_kernel(spec: &KernelSpec, a: &[&[f64]], b: &[&[f64]]) -> f64 {
    let mut s = 0.0;
    for u in a {
        for v in b {
            s += spec.eval(u, v);
        }
    }
    s / (a.len() * b.len()) as f64
}

#[test]
fn gram_layout_is_bags_then_instances() {
    for seed in 0..5u64 {
        let ds = generate(&SynthSpec {
            n_bags: 8,
            dim: 2,
            seed,
            ..SynthSpec::default()
        })
        .unwrap()
        .dataset;
        let spec = KernelSpec::rbf(0.4).unwrap();
        let g = build_gram(&spec, &ds);
        let mut objects: Vec<Vec<&[f64]>> = ds.bags().map(|b| b.iter().collect()).collect();
        for b in ds.bags() {
            objects.extend(b.iter().map(|x| vec![x]));
        }
        assert_eq!(g.n_objects(), objects.len());
        for p in 0..objects.len() {
            for q in 0..objects.len() {
                let want = object_kernel(&spec, &objects[p], &objects[q]);
                assert!((g.get(p, q) - want).abs() <= 1e-12, "({p}, {q})");
            }
        }
        for (i, b) in ds.bags().enumerate() {
            for j in 0..b.len() {
                let p = g.instance_index(i, j);
                assert_eq!(g.get(p, p), 1.0);
            }
        }
    }
}

#[test]
fn gram_is_positive_semidefinite() {
    for seed in 0..5u64 {
        let ds = generate(&SynthSpec {
            n_bags: 10,
            dim: 3,
            seed,
            ..SynthSpec::default()
        })
        .unwrap()
        .dataset;
        for spec in [KernelSpec::rbf(0.7).unwrap(), KernelSpec::Linear] {
            let g = build_gram(&spec, &ds);
            assert_eq!(g.matrix, g.matrix.transpose());
            let eig = g.matrix.clone().symmetric_eigenvalues();
            assert!(eig.min() >= -1e-10 * eig.max().max(1.0), "{}", eig.min());
        }
    }
}

proptest! {
    #[test]
    fn set_kernel_is_symmetric_and_bounded(
        a in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..5),
        b in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..5),
        gamma in 0.01f64..5.0,
    ) {
        let spec = KernelSpec::rbf(gamma).unwrap();
        let (ba, bb) = (Bag::new("a", a), Bag::new("b", b));
        let k = set_kernel(&spec, &ba, &bb).unwrap();
        // Swapping the bags only reorders the sum.
        prop_assert!((k - set_kernel(&spec, &bb, &ba).unwrap()).abs() <= 1e-14);
        prop_assert!(k > 0.0 && k <= 1.0);
        let cross = cross_kernel(&spec, &ba, std::slice::from_ref(&bb));
        prop_assert!((cross[0] - k).abs() <= 1e-12);
    }
}
