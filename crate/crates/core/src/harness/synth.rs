//! Synthetic MIML data with planted instance-to-label structure.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Bag, Example, LabelSet, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};

pub const CONFIG_KEYS: [&str; 14] = [
    "synth.T",
    "synth.d",
    "synth.m",
    "synth.n_min",
    "synth.n_max",
    "synth.spread",
    "synth.noise",
    "synth.mean_scale",
    "synth.label_prob",
    "synth.max_labels",
    "synth.composite",
    "synth.single_instance",
    "synth.target",
    "synth.seed",
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Number of base labels, each with its own Gaussian.
    pub n_labels: usize,
    pub dim: usize,
    pub n_bags: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Standard deviation of every label Gaussian.
    pub spread: f64,
    /// Standard deviation of extra isotropic noise added to every instance.
    pub noise: f64,
    /// Label means are drawn uniformly from `[-mean_scale, mean_scale]^d`.
    pub mean_scale: f64,
    /// Independent inclusion probability of each base label.
    pub label_prob: f64,
    /// Subsets larger than this are redrawn.
    pub max_labels: Option<usize>,
    /// Extra label present exactly when both base labels are.
    pub composite: Option<(usize, usize)>,
    /// One instance per bag: the mean of the chosen labels' draws.
    pub single_instance: bool,
    /// Emit the two-class view of this label instead of the label sets.
    pub target: Option<usize>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_labels: 4,
            dim: 5,
            n_bags: 200,
            n_min: 2,
            n_max: 5,
            spread: 0.5,
            noise: 0.0,
            mean_scale: 3.0,
            label_prob: 0.35,
            max_labels: None,
            composite: None,
            single_instance: false,
            target: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        cfg.check_keys(&CONFIG_KEYS)?;
        let d = Self::default();
        let composite = match cfg.get("synth.composite") {
            None => None,
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                match parts.as_slice() {
                    [a, b] => Some((
                        a.parse()
                            .map_err(|_| MimlError::Config(format!("bad synth.composite {v:?}")))?,
                        b.parse()
                            .map_err(|_| MimlError::Config(format!("bad synth.composite {v:?}")))?,
                    )),
                    _ => {
                        return Err(MimlError::Config(format!(
                            "synth.composite must be 'a,b', got {v:?}"
                        )))
                    }
                }
            }
        };
        let spec = Self {
            n_labels: cfg.parsed_or("synth.T", d.n_labels)?,
            dim: cfg.parsed_or("synth.d", d.dim)?,
            n_bags: cfg.parsed_or("synth.m", d.n_bags)?,
            n_min: cfg.parsed_or("synth.n_min", d.n_min)?,
            n_max: cfg.parsed_or("synth.n_max", d.n_max)?,
            spread: cfg.parsed_or("synth.spread", d.spread)?,
            noise: cfg.parsed_or("synth.noise", d.noise)?,
            mean_scale: cfg.parsed_or("synth.mean_scale", d.mean_scale)?,
            label_prob: cfg.parsed_or("synth.label_prob", d.label_prob)?,
            max_labels: cfg.parsed("synth.max_labels")?,
            composite,
            single_instance: cfg.parsed_or("synth.single_instance", d.single_instance)?,
            target: cfg.parsed("synth.target")?,
            seed: cfg.parsed_or("synth.seed", d.seed)?,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(MimlError::InvalidArgument(m.to_owned()));
        if self.n_labels < 2 {
            return bad("synthetic data needs T >= 2");
        }
        if self.dim == 0 || self.n_bags == 0 {
            return bad("synthetic data needs d >= 1 and m >= 1");
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return bad("instance counts need 1 <= n_min <= n_max");
        }
        for (name, v) in [
            ("spread", self.spread),
            ("noise", self.noise),
            ("mean_scale", self.mean_scale),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(MimlError::InvalidArgument(format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if !(self.label_prob > 0.0 && self.label_prob < 1.0) {
            return bad("label_prob must lie strictly between 0 and 1");
        }
        if let Some((a, b)) = self.composite {
            if a == b || a >= self.n_labels || b >= self.n_labels {
                return bad("composite needs two distinct base labels");
            }
            if self.n_labels < 3 {
                return bad(
                    "a composite label needs T >= 3 so that some base pair leaves the set non-full",
                );
            }
        }
        if self.max_labels == Some(0) {
            return bad("max_labels must be >= 1");
        }
        if self.target.is_some_and(|l| l >= self.total_labels()) {
            return bad("target must name one of the generated labels");
        }
        Ok(())
    }

    fn max_labels_exceeded(&self, n: usize) -> bool {
        self.max_labels.is_some_and(|cap| n > cap)
    }

    /// Total label count, including the composite label when present.
    pub fn total_labels(&self) -> usize {
        self.n_labels + usize::from(self.composite.is_some())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub dataset: MimlDataset,
    /// For every bag, the base label that generated each instance.
    pub planted: Vec<Vec<usize>>,
    pub means: Vec<Vec<f64>>,
}

impl SynthData {
    /// Two-class single-label view: class 1 when `label` is present, class 0 otherwise.
    pub fn single_label(&self, label: usize) -> MimlDataset {
        two_class_view(&self.dataset, label)
    }
}

fn two_class_view(ds: &MimlDataset, label: usize) -> MimlDataset {
    let examples = ds
        .examples()
        .iter()
        .map(|e| Example {
            bag: e.bag.clone(),
            labels: LabelSet::new([usize::from(e.labels.contains(label))]),
        })
        .collect();
    MimlDataset::new_unchecked(examples, 2, ds.dim(), vec!["neg".into(), "pos".into()])
}

/// Draws a dataset. Label subsets are resampled until non-empty and not full.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let t = spec.n_labels;
    let total = spec.total_labels();
    let means: Vec<Vec<f64>> = (0..t)
        .map(|_| {
            (0..spec.dim)
                .map(|_| {
                    if spec.mean_scale > 0.0 {
                        rng.random_range(-spec.mean_scale..=spec.mean_scale)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let unit = Normal::new(0.0, 1.0).expect("unit normal");

    let mut examples = Vec::with_capacity(spec.n_bags);
    let mut planted = Vec::with_capacity(spec.n_bags);
    for i in 0..spec.n_bags {
        let (base, labels) = loop {
            let base: Vec<usize> = (0..t)
                .filter(|_| rng.random_bool(spec.label_prob))
                .collect();
            if base.is_empty() || spec.max_labels_exceeded(base.len()) {
                continue;
            }
            let mut labels = base.clone();
            if let Some((a, b)) = spec.composite {
                if base.contains(&a) && base.contains(&b) {
                    labels.push(t);
                }
            }
            if labels.len() < total {
                break (base, labels);
            }
        };
        let draw = |label: usize, rng: &mut ChaCha8Rng| -> Vec<f64> {
            means[label]
                .iter()
                .map(|m| m + spec.spread * unit.sample(rng) + spec.noise * unit.sample(rng))
                .collect()
        };
        let (instances, origin) = if spec.single_instance {
            let draws: Vec<Vec<f64>> = base.iter().map(|&l| draw(l, &mut rng)).collect();
            let x: Vec<f64> = (0..spec.dim)
                .map(|k| draws.iter().map(|v| v[k]).sum::<f64>() / draws.len() as f64)
                .collect();
            (vec![x], vec![base[0]])
        } else {
            let n = rng.random_range(spec.n_min..=spec.n_max).max(base.len());
            let mut origin: Vec<usize> = base.clone();
            while origin.len() < n {
                origin.push(base[rng.random_range(0..base.len())]);
            }
            origin.shuffle(&mut rng);
            let instances = origin.iter().map(|&l| draw(l, &mut rng)).collect();
            (instances, origin)
        };
        examples.push(Example {
            bag: Bag::new(format!("b{i}"), instances),
            labels: LabelSet::new(labels),
        });
        planted.push(origin);
    }
    let mut dataset = MimlDataset::new(examples, total, spec.dim)?;
    if let Some(label) = spec.target {
        dataset = two_class_view(&dataset, label);
    }
    Ok(SynthData {
        dataset,
        planted,
        means,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_generator_reproduces_means() {
        let spec = SynthSpec {
            spread: 0.0,
            noise: 0.0,
            n_bags: 30,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        for (ex, origin) in data.dataset.examples().iter().zip(&data.planted) {
            for (x, &l) in ex.bag.instances.iter().zip(origin) {
                assert_eq!(x, &data.means[l]);
                assert!(ex.labels.contains(l));
            }
            for l in ex.labels.iter() {
                assert!(origin.contains(&l));
            }
        }
    }

    #[test]
    fn same_seed_same_data() {
        let spec = SynthSpec {
            seed: 9,
            ..SynthSpec::default()
        };
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn composite_label_tracks_co_occurrence() {
        let spec = SynthSpec {
            composite: Some((0, 1)),
            label_prob: 0.5,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        assert_eq!(data.dataset.n_labels(), 5);
        for ex in data.dataset.examples() {
            assert_eq!(
                ex.labels.contains(4),
                ex.labels.contains(0) && ex.labels.contains(1)
            );
            assert!(ex.labels.len() < 5);
        }
    }

    #[test]
    fn single_instance_bags() {
        let spec = SynthSpec {
            single_instance: true,
            ..SynthSpec::default()
        };
        let data = generate(&spec).unwrap();
        assert!(data.dataset.examples().iter().all(|e| e.bag.len() == 1));
    }
}
