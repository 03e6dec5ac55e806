//! Single-instance multi-label learning through bags of differences to label
//! prototypes, followed by bag clustering and a linear output layer.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bagdist::{hausdorff, k_medoids_with, DistanceMatrix, KMedoidsConfig};
use crate::data::{validate_dataset, Bag, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};
use crate::metrics::LabelScores;
use crate::solvers::lstsq_svd;

pub const CONFIG_KEYS: [&str; 3] = ["insdif.m_fraction", "insdif.seed", "insdif.fallback"];

/// Relative bound on the normal-equation residual accepted from the SVD solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct InsDifConfig {
    pub m_fraction: f64,
    /// Explicit medoid count; overrides `m_fraction`.
    pub medoids: Option<usize>,
    pub seed: u64,
    /// Fall back to the top label when no score is positive.
    pub fallback: bool,
}

impl Default for InsDifConfig {
    fn default() -> Self {
        Self {
            m_fraction: 0.2,
            medoids: None,
            seed: 0,
            fallback: false,
        }
    }
}

impl InsDifConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            m_fraction: cfg.parsed_or("insdif.m_fraction", d.m_fraction)?,
            medoids: None,
            seed: cfg.parsed_or("insdif.seed", d.seed)?,
            fallback: cfg.parsed_or("insdif.fallback", d.fallback)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m_fraction > 0.0 && self.m_fraction <= 1.0) {
            return Err(MimlError::Config(format!(
                "insdif.m_fraction must lie in (0, 1], got {}",
                self.m_fraction
            )));
        }
        if self.medoids == Some(0) {
            return Err(MimlError::Config("medoid count must be positive".into()));
        }
        Ok(())
    }

    /// `M = ceil(m_fraction * m)` unless set explicitly.
    pub fn medoid_count(&self, m: usize) -> usize {
        self.medoids
            .unwrap_or_else(|| ((self.m_fraction * m as f64).ceil() as usize).max(1))
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("insdif.m_fraction".into(), self.m_fraction.to_string());
        if let Some(k) = self.medoids {
            h.insert("insdif.M".into(), k.to_string());
        }
        h.insert("insdif.seed".into(), self.seed.to_string());
        h.insert("insdif.fallback".into(), self.fallback.to_string());
        h
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InsDifModel {
    pub n_labels: usize,
    pub dim: usize,
    pub prototypes: Vec<Vec<f64>>,
    pub medoids: Vec<Bag>,
    /// `weights[j][l]`: output weight from medoid `j` to label `l`.
    pub weights: Vec<Vec<f64>>,
    pub fallback: bool,
}

/// Quantities of the output-layer solve, kept for inspection.
#[derive(Debug, Clone, PartialEq)]
pub struct InsDifTrace {
    /// `phi[(i, j)]`: Hausdorff distance from training bag `i` to medoid `j`.
    pub design: DMatrix<f64>,
    /// `+1` where the example carries the label, else `-1`.
    pub targets: DMatrix<f64>,
    pub weights: DMatrix<f64>,
    /// `||Phi'Phi W - Phi'T||_F`.
    pub residual: f64,
    /// `||Phi'T||_F`.
    pub scale: f64,
}

/// The single instance of every example; bags of any other size are rejected.
fn instances(ds: &MimlDataset) -> Result<Vec<&[f64]>> {
    ds.bags()
        .enumerate()
        .map(|(i, b)| match b.len() {
            1 => Ok(b.iter().next().expect("one instance")),
            n => Err(MimlError::InvalidDataset(format!(
                "example {i} has {n} instances; single-instance data expected"
            ))),
        })
        .collect()
}

/// Per-label mean of the instances carrying that label.
pub fn compute_prototypes(ds: &MimlDataset) -> Result<Vec<Vec<f64>>> {
    let xs = instances(ds)?;
    let mut sums = vec![vec![0.0; ds.dim()]; ds.n_labels()];
    let mut counts = vec![0usize; ds.n_labels()];
    for (x, labels) in xs.iter().zip(ds.label_sets()) {
        for l in labels.iter() {
            counts[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(x.iter()) {
                *s += v;
            }
        }
    }
    if let Some(l) = counts.iter().position(|&c| c == 0) {
        return Err(MimlError::InvalidDataset(format!(
            "label {l} has no training instance"
        )));
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    Ok(sums)
}

/// `{x - v_l}` in label order.
pub fn instance_to_bag(x: &[f64], prototypes: &[Vec<f64>]) -> Result<Bag> {
    let mut rows = Vec::with_capacity(prototypes.len());
    for v in prototypes {
        if v.len() != x.len() {
            return Err(MimlError::DimensionMismatch {
                expected: v.len(),
                found: x.len(),
            });
        }
        rows.push(x.iter().zip(v).map(|(a, b)| a - b).collect());
    }
    Ok(Bag::new("", rows))
}

/// Frobenius norm of `Phi'Phi W - Phi'T` and of `Phi'T`.
pub fn normal_equation_residual(
    design: &DMatrix<f64>,
    weights: &DMatrix<f64>,
    targets: &DMatrix<f64>,
) -> (f64, f64) {
    let pt = design.transpose() * targets;
    let lhs = design.transpose() * (design * weights);
    ((lhs - &pt).norm(), pt.norm())
}

pub fn fit(ds: &MimlDataset, cfg: &InsDifConfig) -> Result<InsDifModel> {
    fit_traced(ds, cfg).map(|r| r.0)
}

pub fn fit_traced(ds: &MimlDataset, cfg: &InsDifConfig) -> Result<(InsDifModel, InsDifTrace)> {
    cfg.validate()?;
    let report = validate_dataset(ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    let m = ds.len();
    let n_labels = ds.n_labels();
    let k = cfg.medoid_count(m);
    if k > m {
        return Err(MimlError::InvalidArgument(format!(
            "M = {k} exceeds the {m} training examples"
        )));
    }
    let prototypes = compute_prototypes(ds)?;
    let bags = instances(ds)?
        .into_iter()
        .map(|x| instance_to_bag(x, &prototypes))
        .collect::<Result<Vec<_>>>()?;
    let dist = DistanceMatrix::hausdorff(&bags)?;
    let clustering = k_medoids_with(&dist, &KMedoidsConfig::new(k, cfg.seed))?;

    let design = DMatrix::from_fn(m, k, |i, j| dist.get(i, clustering.medoids[j]));
    let targets = DMatrix::from_fn(m, n_labels, |i, l| {
        if ds.examples()[i].labels.contains(l) {
            1.0
        } else {
            -1.0
        }
    });
    let weights = lstsq_svd(&design, &targets);
    let (residual, scale) = normal_equation_residual(&design, &weights, &targets);
    if !(residual <= RESIDUAL_TOLERANCE * (1.0 + scale)) {
        return Err(MimlError::Numerical(format!(
            "least-squares residual {residual:e} exceeds the normal-equation bound"
        )));
    }
    let model = InsDifModel {
        n_labels,
        dim: ds.dim(),
        prototypes,
        medoids: clustering
            .medoids
            .iter()
            .map(|&j| bags[j].clone())
            .collect(),
        weights: (0..k)
            .map(|j| weights.row(j).iter().copied().collect())
            .collect(),
        fallback: cfg.fallback,
    };
    let trace = InsDifTrace {
        design,
        targets,
        weights,
        residual,
        scale,
    };
    Ok((model, trace))
}

impl InsDifModel {
    /// `y_l = sum_j w_jl d_H(B*, C_j)` for the bag built from `x`.
    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(MimlError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        let bag = instance_to_bag(x, &self.prototypes)?;
        let mut out = vec![0.0; self.n_labels];
        for (c, w) in self.medoids.iter().zip(&self.weights) {
            let d = hausdorff(&bag, c)?;
            for (o, wl) in out.iter_mut().zip(w) {
                *o += wl * d;
            }
        }
        Ok(out)
    }

    /// Labels with positive score; with `fallback`, the top label when none is.
    pub fn predict(&self, x: &[f64]) -> Result<LabelScores> {
        let s = self.scores(x)?;
        Ok(if self.fallback {
            LabelScores::positive_or_top(s)
        } else {
            LabelScores::positive(s)
        })
    }

    /// Prediction for a bag holding exactly one instance.
    pub fn predict_bag(&self, bag: &Bag) -> Result<LabelScores> {
        if bag.len() != 1 {
            return Err(MimlError::InvalidArgument(format!(
                "expected a single-instance bag, got {} instances",
                bag.len()
            )));
        }
        self.predict(bag.iter().next().expect("one instance"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Example, LabelSet};

    fn one_dim(points: &[(f64, &[usize])], n_labels: usize) -> MimlDataset {
        let examples = points
            .iter()
            .enumerate()
            .map(|(i, (x, ls))| Example {
                bag: Bag::new(format!("e{i}"), vec![vec![*x]]),
                labels: LabelSet::new(ls.iter().copied()),
            })
            .collect();
        MimlDataset::new(examples, n_labels, 1).unwrap()
    }

    #[test]
    fn prototype_is_label_mean() {
        let ds = one_dim(&[(0.0, &[0]), (2.0, &[0, 1]), (5.0, &[1])], 2);
        let v = compute_prototypes(&ds).unwrap();
        assert_eq!(v, vec![vec![1.0], vec![3.5]]);
    }

    #[test]
    fn unsupported_label_is_rejected() {
        let ds = one_dim(&[(0.0, &[0]), (2.0, &[0])], 2);
        assert!(compute_prototypes(&ds).is_err());
    }

    #[test]
    fn bag_member_at_own_prototype_is_zero() {
        let v = vec![vec![1.0, 2.0], vec![-1.0, 0.5]];
        let b = instance_to_bag(&[1.0, 2.0], &v).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.iter().next().unwrap(), &[0.0, 0.0]);
        assert!(instance_to_bag(&[1.0], &v).is_err());
    }

    #[test]
    fn zero_weights_predict_nothing_without_fallback() {
        let mut model = InsDifModel {
            n_labels: 2,
            dim: 1,
            prototypes: vec![vec![0.0], vec![1.0]],
            medoids: vec![Bag::new("c", vec![vec![0.5], vec![0.0]])],
            weights: vec![vec![0.0, 0.0]],
            fallback: false,
        };
        assert!(model.predict(&[3.0]).unwrap().predicted.is_empty());
        model.fallback = true;
        assert_eq!(model.predict(&[3.0]).unwrap().predicted.len(), 1);
    }

    #[test]
    fn multi_instance_bags_are_rejected() {
        let ds = MimlDataset::new(
            vec![Example {
                bag: Bag::new("a", vec![vec![0.0], vec![1.0]]),
                labels: LabelSet::new([0]),
            }],
            1,
            1,
        )
        .unwrap();
        assert!(fit(&ds, &InsDifConfig::default()).is_err());
    }
}
