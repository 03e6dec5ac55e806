//! Experimental protocol: synthetic data, repeated random splits, significance tests.

pub mod stats;
pub mod synth;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::MimlDataset;
use crate::error::{MimlError, Result};
use crate::metrics::{LabelScores, MetricReport};

pub use stats::{mean, paired_t_test, std_dev, t_critical, TTest};
pub use synth::{generate, SynthData, SynthSpec};

/// Training/test index split for one run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles `0..m` with `seed` and keeps the first `ceil(fraction * m)` for training.
pub fn random_split(m: usize, train_fraction: f64, seed: u64) -> Result<Split> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(MimlError::InvalidArgument(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if m < 2 {
        return Err(MimlError::InvalidArgument(
            "need at least two examples to split".into(),
        ));
    }
    let n_train = ((train_fraction * m as f64).ceil() as usize).clamp(1, m - 1);
    let mut idx: Vec<usize> = (0..m).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let test = idx.split_off(n_train);
    Ok(Split { train: idx, test })
}

/// Seed of run `run` under the master `seed`.
pub fn run_seed(seed: u64, run: usize) -> u64 {
    seed.wrapping_add(run as u64)
}

/// Per-run reports of a repeated random-split experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub runs: Vec<MetricReport>,
}

impl SplitReport {
    /// Values of criterion `k` (in [`MetricReport::NAMES`] order) across runs.
    pub fn column(&self, k: usize) -> Vec<f64> {
        self.runs.iter().map(|r| r.values()[k]).collect()
    }

    pub fn means(&self) -> [f64; 7] {
        std::array::from_fn(|k| mean(&self.column(k)))
    }

    pub fn std_devs(&self) -> [f64; 7] {
        std::array::from_fn(|k| std_dev(&self.column(k)))
    }

    /// One `name  mean±std` row per criterion.
    pub fn to_table(&self) -> String {
        let (m, s) = (self.means(), self.std_devs());
        let mut out = String::new();
        for (k, name) in MetricReport::NAMES.iter().enumerate() {
            out.push_str(&format!("{name:<10} {:.3}\u{b1}{:.3}\n", m[k], s[k]));
        }
        out
    }

    /// `name.mean=value` and `name.std=value` lines.
    pub fn to_lines(&self) -> String {
        let (m, s) = (self.means(), self.std_devs());
        let mut out = String::new();
        for (k, name) in MetricReport::NAMES.iter().enumerate() {
            out.push_str(&format!("{name}.mean={}\n{name}.std={}\n", m[k], s[k]));
        }
        out
    }
}

/// Runs `fit_predict(train, test, run_seed)` on `runs` seeded random splits and
/// scores the test predictions. Runs execute in parallel; the reports come back
/// in run order.
pub fn random_split_eval<F>(
    ds: &MimlDataset,
    train_fraction: f64,
    runs: usize,
    seed: u64,
    fit_predict: F,
) -> Result<SplitReport>
where
    F: Fn(&MimlDataset, &MimlDataset, u64) -> Result<Vec<LabelScores>> + Sync,
{
    if runs == 0 {
        return Err(MimlError::InvalidArgument("runs must be >= 1".into()));
    }
    let reports = (0..runs)
        .into_par_iter()
        .map(|run| {
            let s = run_seed(seed, run);
            let split = random_split(ds.len(), train_fraction, s)?;
            let train = ds.subset(&split.train);
            let test = ds.subset(&split.test);
            let preds = fit_predict(&train, &test, s)?;
            let truth: Vec<_> = test.label_sets().cloned().collect();
            MetricReport::evaluate(&preds, &truth, ds.n_labels())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SplitReport { runs: reports })
}

/// Predicts for every test example the labels that are more frequent than not
/// in training (or the single most frequent label), scored by frequency.
pub fn label_prior_baseline(train: &MimlDataset, test: &MimlDataset) -> Vec<LabelScores> {
    let t = train.n_labels();
    let mut freq = vec![0.0; t];
    for set in train.label_sets() {
        for l in set.iter() {
            freq[l] += 1.0;
        }
    }
    let scores: Vec<f64> = freq.iter().map(|c| c / train.len() as f64 - 0.5).collect();
    (0..test.len())
        .map(|_| LabelScores::t_criterion(scores.clone()))
        .collect()
}
