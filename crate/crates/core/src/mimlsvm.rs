//! Bag-to-vector degeneration: k-medoids over bags, Hausdorff coordinates,
//! then one SVM per label with the T-criterion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bagdist::{hausdorff, k_medoids_with, DistanceMatrix, KMedoidsConfig};
use crate::data::{validate_dataset, Bag, LabelSet, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};
use crate::harness::random_split;
use crate::kernels::KernelSpec;
use crate::metrics::LabelScores;
use crate::solvers::{train_weighted_svm, SvmModel, WeightedBinaryProblem};

pub const CONFIG_KEYS: [&str; 5] = [
    "mimlsvm.k_fraction",
    "mimlsvm.k",
    "mimlsvm.C",
    "mimlsvm.gamma",
    "mimlsvm.seed",
];

/// Candidate soft-margin constants tried by hold-out when `C` is not fixed.
pub const C_GRID: [f64; 4] = [0.1, 1.0, 10.0, 100.0];
/// Multipliers of the default RBF width tried by hold-out when `gamma` is not fixed.
pub const GAMMA_GRID: [f64; 3] = [0.5, 1.0, 2.0];

#[derive(Debug, Clone, PartialEq)]
pub struct MimlSvmConfig {
    pub k_fraction: f64,
    /// Explicit medoid count; overrides `k_fraction`.
    pub k: Option<usize>,
    pub c: Option<f64>,
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl Default for MimlSvmConfig {
    fn default() -> Self {
        Self {
            k_fraction: 0.2,
            k: None,
            c: None,
            gamma: None,
            seed: 0,
        }
    }
}

impl MimlSvmConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            k_fraction: cfg.parsed_or("mimlsvm.k_fraction", d.k_fraction)?,
            k: cfg.parsed("mimlsvm.k")?,
            c: cfg.parsed("mimlsvm.C")?,
            gamma: cfg.parsed("mimlsvm.gamma")?,
            seed: cfg.parsed_or("mimlsvm.seed", d.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(MimlError::Config(
                "mimlsvm.k_fraction must lie in (0, 1]".into(),
            ));
        }
        if self.k == Some(0) {
            return Err(MimlError::Config("mimlsvm.k must be >= 1".into()));
        }
        if self.c.is_some_and(|c| !(c > 0.0)) || self.gamma.is_some_and(|g| !(g > 0.0)) {
            return Err(MimlError::Config(
                "mimlsvm.C and mimlsvm.gamma must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Medoid count for `m` training bags.
    pub fn medoid_count(&self, m: usize) -> usize {
        self.k
            .unwrap_or_else(|| (self.k_fraction * m as f64).ceil() as usize)
            .max(1)
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("mimlsvm.k_fraction".into(), self.k_fraction.to_string());
        if let Some(k) = self.k {
            h.insert("mimlsvm.k".into(), k.to_string());
        }
        if let Some(c) = self.c {
            h.insert("mimlsvm.C".into(), c.to_string());
        }
        if let Some(g) = self.gamma {
            h.insert("mimlsvm.gamma".into(), g.to_string());
        }
        h.insert("mimlsvm.seed".into(), self.seed.to_string());
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimlSvmModel {
    pub n_labels: usize,
    pub dim: usize,
    pub medoids: Vec<Bag>,
    pub kernel: KernelSpec,
    pub c: f64,
    pub svms: Vec<SvmModel>,
}

/// Hausdorff distance from `bag` to every medoid.
pub fn bag_to_vector(medoids: &[Bag], bag: &Bag) -> Result<Vec<f64>> {
    if medoids.is_empty() {
        return Err(MimlError::InvalidArgument("no medoids".into()));
    }
    medoids.iter().map(|m| hausdorff(bag, m)).collect()
}

impl MimlSvmModel {
    pub fn k(&self) -> usize {
        self.medoids.len()
    }

    /// Per-label decision values on the bag's medoid coordinates.
    pub fn scores(&self, bag: &Bag) -> Result<Vec<f64>> {
        bag.check_dim(self.dim)?;
        let z = bag_to_vector(&self.medoids, bag)?;
        Ok(self.svms.iter().map(|h| h.decision(&z)).collect())
    }

    /// Labels with non-negative score, or the top label when there are none.
    pub fn predict(&self, bag: &Bag) -> Result<LabelScores> {
        Ok(LabelScores::t_criterion(self.scores(bag)?))
    }
}

fn train_label_svms(
    z: &[Vec<f64>],
    sets: &[&LabelSet],
    n_labels: usize,
    kernel: KernelSpec,
    c: f64,
) -> Result<Vec<SvmModel>> {
    let weights = vec![1.0; z.len()];
    (0..n_labels)
        .map(|y| {
            let labels: Vec<f64> = sets
                .iter()
                .map(|s| if s.contains(y) { 1.0 } else { -1.0 })
                .collect();
            train_weighted_svm(
                &WeightedBinaryProblem {
                    points: z,
                    labels: &labels,
                    weights: &weights,
                    c,
                },
                &kernel,
            )
        })
        .collect()
}

/// Mean squared distance between distinct coordinate vectors; RBF width heuristic.
fn mean_sq_distance(z: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..z.len() {
        for j in 0..i {
            total += z[i]
                .iter()
                .zip(&z[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += 1;
        }
    }
    if count == 0 || total == 0.0 {
        1.0
    } else {
        total / count as f64
    }
}

fn hamming(svms: &[SvmModel], z: &[Vec<f64>], sets: &[&LabelSet]) -> f64 {
    let t = svms.len();
    let mut wrong = 0usize;
    for (zi, set) in z.iter().zip(sets) {
        let scores: Vec<f64> = svms.iter().map(|h| h.decision(zi)).collect();
        let pred = crate::metrics::t_criterion(&scores);
        wrong += pred.symmetric_difference_len(set);
    }
    wrong as f64 / (z.len() * t) as f64
}

pub fn fit(ds: &MimlDataset, cfg: &MimlSvmConfig) -> Result<MimlSvmModel> {
    let report = validate_dataset(ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    let bags: Vec<Bag> = ds.bags().cloned().collect();
    let sets: Vec<LabelSet> = ds.label_sets().cloned().collect();
    fit_sets(&bags, &sets, ds.n_labels(), ds.dim(), cfg)
}

/// Fits on raw bags and label sets; sets may be empty or full.
pub(crate) fn fit_sets(
    bags: &[Bag],
    sets: &[LabelSet],
    n_labels: usize,
    dim: usize,
    cfg: &MimlSvmConfig,
) -> Result<MimlSvmModel> {
    cfg.validate()?;
    let m = bags.len();
    let k = cfg.medoid_count(m);
    if k > m {
        return Err(MimlError::InvalidArgument(format!(
            "k = {k} exceeds the {m} training bags"
        )));
    }
    for b in bags {
        b.check_dim(dim)?;
    }
    let dist = DistanceMatrix::hausdorff(bags)?;
    let clustering = k_medoids_with(&dist, &KMedoidsConfig::new(k, cfg.seed))?;
    let medoids: Vec<Bag> = clustering
        .medoids
        .iter()
        .map(|&i| bags[i].clone())
        .collect();
    let z: Vec<Vec<f64>> = (0..m)
        .map(|u| clustering.medoids.iter().map(|&j| dist.get(u, j)).collect())
        .collect();
    let set_refs: Vec<&LabelSet> = sets.iter().collect();
    let base_gamma = 1.0 / mean_sq_distance(&z);

    let (c, gamma) = match (cfg.c, cfg.gamma) {
        (Some(c), Some(g)) => (c, g),
        _ if m < 4 => (cfg.c.unwrap_or(1.0), cfg.gamma.unwrap_or(base_gamma)),
        _ => {
            let split = random_split(m, 0.75, cfg.seed)?;
            let pick = |idx: &[usize]| -> (Vec<Vec<f64>>, Vec<&LabelSet>) {
                (
                    idx.iter().map(|&i| z[i].clone()).collect(),
                    idx.iter().map(|&i| set_refs[i]).collect(),
                )
            };
            let (z_fit, s_fit) = pick(&split.train);
            let (z_val, s_val) = pick(&split.test);
            let cs: Vec<f64> = cfg.c.map_or(C_GRID.to_vec(), |c| vec![c]);
            let gs: Vec<f64> = cfg
                .gamma
                .map_or(GAMMA_GRID.iter().map(|f| f * base_gamma).collect(), |g| {
                    vec![g]
                });
            let mut best = (f64::INFINITY, cs[0], gs[0]);
            for &g in &gs {
                for &c in &cs {
                    let svms = train_label_svms(
                        &z_fit,
                        &s_fit,
                        n_labels,
                        KernelSpec::Rbf { gamma: g },
                        c,
                    )?;
                    let loss = hamming(&svms, &z_val, &s_val);
                    if loss < best.0 {
                        best = (loss, c, g);
                    }
                }
            }
            (best.1, best.2)
        }
    };
    let kernel = KernelSpec::Rbf { gamma };
    let svms = train_label_svms(&z, &set_refs, n_labels, kernel, c)?;
    Ok(MimlSvmModel {
        n_labels,
        dim,
        medoids,
        kernel,
        c,
        svms,
    })
}
