//! Single-label multi-instance learning through sub-concept discovery: instances
//! are clustered by a Gaussian mixture, every bag is tagged with the components
//! it touches, the tags are polished against the class labels, and a MIML
//! learner plus a tag-to-class mapper finish the job.

mod gmm;
mod polish;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use gmm::{em_fit_gmm, regularize, EmTrace, GmmModel, EM_MAX_ITERS, EM_TOLERANCE};
pub use polish::{
    polish_labels, polish_objective, Polished, POLISH_MAX_ALTERNATIONS, POLISH_OBJECTIVE_TOLERANCE,
    POLISH_Z_TOLERANCE,
};

use crate::data::{validate_dataset, Bag, LabelSet, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};
use crate::metrics::LabelScores;
use crate::mimlsvm::{self, MimlSvmConfig, MimlSvmModel};
use crate::solvers::{optimal_bias, smo_solve};

pub const CONFIG_KEYS: [&str; 5] = [
    "subcod.M",
    "subcod.theta",
    "subcod.C",
    "subcod.seed",
    "subcod.inner_k",
];

/// Share of the `m x M` flip weights behind the default `theta = 0.4 m M`;
/// the budget `sum Z >= 0.8 m M - 1` lets at most about a tenth of the tags flip.
pub const DEFAULT_THETA_SHARE: f64 = 0.4;

#[derive(Debug, Clone, PartialEq)]
pub struct SubCodConfig {
    /// Number of mixture components (sub-concepts).
    pub components: usize,
    /// Flip budget; `DEFAULT_THETA_SHARE * m * M` when unset.
    pub theta: Option<f64>,
    pub c: f64,
    pub seed: u64,
    /// Medoid count of the inner MimlSvm; its default fraction when unset.
    pub inner_k: Option<usize>,
}

impl Default for SubCodConfig {
    fn default() -> Self {
        Self {
            components: 5,
            theta: None,
            c: 1.0,
            seed: 0,
            inner_k: None,
        }
    }
}

impl SubCodConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            components: cfg.parsed_or("subcod.M", d.components)?,
            theta: cfg.parsed("subcod.theta")?,
            c: cfg.parsed_or("subcod.C", d.c)?,
            seed: cfg.parsed_or("subcod.seed", d.seed)?,
            inner_k: cfg.parsed("subcod.inner_k")?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(MimlError::Config("subcod.M must be >= 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(MimlError::Config("subcod.C must be positive".into()));
        }
        if self.theta.is_some_and(|t| !t.is_finite()) {
            return Err(MimlError::Config("subcod.theta must be finite".into()));
        }
        if self.inner_k == Some(0) {
            return Err(MimlError::Config("subcod.inner_k must be >= 1".into()));
        }
        Ok(())
    }

    pub fn theta_for(&self, m: usize) -> f64 {
        self.theta
            .unwrap_or(DEFAULT_THETA_SHARE * (m * self.components) as f64)
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("subcod.M".into(), self.components.to_string());
        if let Some(t) = self.theta {
            h.insert("subcod.theta".into(), t.to_string());
        }
        h.insert("subcod.C".into(), self.c.to_string());
        h.insert("subcod.seed".into(), self.seed.to_string());
        if let Some(k) = self.inner_k {
            h.insert("subcod.inner_k".into(), k.to_string());
        }
        h
    }
}

/// `c[i][j] = +1` when some instance of bag `i` belongs to component `j`.
/// `assignments` lists the component of every instance, bag by bag.
pub fn derive_label_vectors(
    bag_sizes: &[usize],
    assignments: &[usize],
    n_components: usize,
) -> Result<Vec<Vec<f64>>> {
    if bag_sizes.iter().sum::<usize>() != assignments.len() {
        return Err(MimlError::InvalidArgument(
            "assignments do not cover the instances".into(),
        ));
    }
    if let Some(&k) = assignments.iter().find(|&&k| k >= n_components) {
        return Err(MimlError::InvalidArgument(format!(
            "component {k} out of range"
        )));
    }
    let mut out = Vec::with_capacity(bag_sizes.len());
    let mut offset = 0;
    for &n in bag_sizes {
        let mut c = vec![-1.0; n_components];
        for &k in &assignments[offset..offset + n] {
            c[k] = 1.0;
        }
        offset += n;
        out.push(c);
    }
    Ok(out)
}

/// One-vs-rest linear SVMs from `{-1, +1}^M` tag vectors to classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMapper {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    /// Training frequency per class; breaks ties between equal decision values.
    pub class_counts: Vec<usize>,
}

impl LabelMapper {
    pub fn fit(
        inputs: &[Vec<f64>],
        classes: &[usize],
        n_classes: usize,
        cost: f64,
    ) -> Result<Self> {
        let m = inputs.len();
        if m == 0 || classes.len() != m {
            return Err(MimlError::InvalidArgument(
                "mapper needs one class per input".into(),
            ));
        }
        let dim = inputs[0].len();
        let gram = DMatrix::from_fn(m, m, |i, j| {
            inputs[i].iter().zip(&inputs[j]).map(|(a, b)| a * b).sum()
        });
        let mut class_counts = vec![0; n_classes];
        for &k in classes {
            class_counts[k] += 1;
        }
        let mut weights = Vec::with_capacity(n_classes);
        let mut biases = Vec::with_capacity(n_classes);
        for k in 0..n_classes {
            let y: Vec<f64> = classes
                .iter()
                .map(|&c| if c == k { 1.0 } else { -1.0 })
                .collect();
            if class_counts[k] == 0 || class_counts[k] == m {
                weights.push(vec![0.0; dim]);
                biases.push(if class_counts[k] == m { 1.0 } else { -1.0 });
                continue;
            }
            let sol = smo_solve(&gram, &y, &vec![cost; m], 1e-8)?;
            let mut w = vec![0.0; dim];
            for ((x, &a), &yi) in inputs.iter().zip(&sol.alpha).zip(&y) {
                for (wk, v) in w.iter_mut().zip(x) {
                    *wk += a * yi * v;
                }
            }
            let f: Vec<f64> = inputs
                .iter()
                .map(|x| x.iter().zip(&w).map(|(a, b)| a * b).sum())
                .collect();
            biases.push(optimal_bias(&f, &y, &vec![1.0; m]));
            weights.push(w);
        }
        Ok(Self {
            weights,
            biases,
            class_counts,
        })
    }

    pub fn decisions(&self, v: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .map(|(w, b)| w.iter().zip(v).map(|(a, x)| a * x).sum::<f64>() + b)
            .collect()
    }

    /// Largest decision value; near-ties go to the more frequent class.
    pub fn predict(&self, v: &[f64]) -> usize {
        let d = self.decisions(v);
        let mut best = 0;
        for k in 1..d.len() {
            let tie = (d[k] - d[best]).abs() <= 1e-9 * (1.0 + d[best].abs());
            if (!tie && d[k] > d[best]) || (tie && self.class_counts[k] > self.class_counts[best]) {
                best = k;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubCodModel {
    pub n_classes: usize,
    pub dim: usize,
    pub gmm: GmmModel,
    /// Polished tag vectors of the training bags.
    pub polished: Vec<Vec<f64>>,
    pub inner: MimlSvmModel,
    pub mapper: LabelMapper,
    pub theta: f64,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubCodTrace {
    pub em: EmTrace,
    /// Component of every training instance, bag by bag.
    pub assignments: Vec<usize>,
    pub derived: Vec<Vec<f64>>,
    /// `None` when polishing does not apply (more than two classes, or one class only).
    pub polish: Option<Polished>,
}

/// The class of every example; each label set must hold exactly one label.
pub fn single_labels(ds: &MimlDataset) -> Result<Vec<usize>> {
    ds.label_sets()
        .enumerate()
        .map(|(i, s)| match s.as_slice() {
            [k] => Ok(*k),
            _ => Err(MimlError::InvalidDataset(format!(
                "example {i} carries {} labels; single-label data expected",
                s.len()
            ))),
        })
        .collect()
}

pub fn fit(ds: &MimlDataset, cfg: &SubCodConfig) -> Result<SubCodModel> {
    fit_traced(ds, cfg).map(|r| r.0)
}

pub fn fit_traced(ds: &MimlDataset, cfg: &SubCodConfig) -> Result<(SubCodModel, SubCodTrace)> {
    cfg.validate()?;
    let report = validate_dataset(ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    let classes = single_labels(ds)?;
    let m = ds.len();
    let n_classes = ds.n_labels();
    let xs: Vec<&[f64]> = ds.bags().flat_map(|b| b.iter()).collect();
    let (gmm, em) = em_fit_gmm(&xs, cfg.components, cfg.seed, EM_MAX_ITERS, EM_TOLERANCE)?;
    let assignments = gmm.assign(&xs)?;
    let sizes: Vec<usize> = ds.bags().map(Bag::len).collect();
    let derived = derive_label_vectors(&sizes, &assignments, cfg.components)?;

    let theta = cfg.theta_for(m);
    let binary = n_classes == 2 && classes.contains(&0) && classes.contains(&1);
    let polish = if binary {
        let y: Vec<f64> = classes
            .iter()
            .map(|&k| if k == 1 { 1.0 } else { -1.0 })
            .collect();
        Some(polish_labels(&derived, &y, theta, cfg.c)?)
    } else {
        None
    };
    let polished = polish
        .as_ref()
        .map_or_else(|| derived.clone(), |p| p.labels.clone());

    let bags: Vec<Bag> = ds.bags().cloned().collect();
    let sets: Vec<LabelSet> = polished
        .iter()
        .map(|c| {
            LabelSet::new(
                c.iter()
                    .enumerate()
                    .filter(|(_, &v)| v > 0.0)
                    .map(|(j, _)| j),
            )
        })
        .collect();
    let inner_cfg = MimlSvmConfig {
        k: cfg.inner_k,
        seed: cfg.seed,
        ..MimlSvmConfig::default()
    };
    let inner = mimlsvm::fit_sets(&bags, &sets, cfg.components, ds.dim(), &inner_cfg)?;
    let mapper = LabelMapper::fit(&polished, &classes, n_classes, cfg.c)?;

    let model = SubCodModel {
        n_classes,
        dim: ds.dim(),
        gmm,
        polished,
        inner,
        mapper,
        theta,
        c: cfg.c,
    };
    let trace = SubCodTrace {
        em,
        assignments,
        derived,
        polish,
    };
    Ok((model, trace))
}

impl SubCodModel {
    /// Inner MIML prediction as a `{-1, +1}^M` tag vector.
    pub fn tags(&self, bag: &Bag) -> Result<Vec<f64>> {
        let set = self.inner.predict(bag)?.predicted;
        Ok((0..self.inner.n_labels)
            .map(|j| if set.contains(j) { 1.0 } else { -1.0 })
            .collect())
    }

    pub fn predict_class(&self, bag: &Bag) -> Result<usize> {
        Ok(self.mapper.predict(&self.tags(bag)?))
    }

    /// Mapper decision values per class, with the predicted class alone in the set.
    pub fn predict(&self, bag: &Bag) -> Result<LabelScores> {
        let tags = self.tags(bag)?;
        let class = self.mapper.predict(&tags);
        Ok(LabelScores::new(
            self.mapper.decisions(&tags),
            LabelSet::new([class]),
        ))
    }
}
