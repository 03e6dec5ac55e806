//! Boosting over a multi-instance decomposition of the MIML task.
//!
//! Every (example, label) pair becomes a bag whose instances are the
//! example's instances tagged with the label identity; a weighted
//! instance-level learner is boosted over these bags.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{Bag, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};
use crate::kernels::{point_gram, KernelSpec};
use crate::metrics::LabelScores;
use crate::solvers::{minimize_1d_convex, smo_solve, SvmModel, SMO_TOLERANCE};

pub const CONFIG_KEYS: [&str; 7] = [
    "boost.rounds",
    "boost.c_cap",
    "boost.base",
    "boost.C",
    "boost.gamma",
    "boost.label_scale",
    "boost.literal_stop",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaseLearner {
    Svm,
    Stump,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostConfig {
    pub rounds: usize,
    pub c_cap: f64,
    pub base: BaseLearner,
    /// Soft-margin constant of the SVM base learner.
    pub svm_c: f64,
    /// RBF width on the tagged features; `None` means `1 / (d + T)`.
    pub gamma: Option<f64>,
    /// Magnitude of the one-hot label tag appended to each instance.
    pub label_scale: f64,
    /// Stop as soon as every bag error is below 0.5 (the table's wording).
    pub literal_stop: bool,
}

impl Default for BoostConfig {
    fn default() -> Self {
        Self {
            rounds: 25,
            c_cap: 10.0,
            base: BaseLearner::Svm,
            svm_c: 10.0,
            gamma: None,
            label_scale: 1.0,
            literal_stop: false,
        }
    }
}

impl BoostConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let base = match cfg.get("boost.base") {
            None | Some("svm") => BaseLearner::Svm,
            Some("stump") => BaseLearner::Stump,
            Some(other) => {
                return Err(MimlError::Config(format!(
                    "boost.base must be svm or stump, got {other}"
                )))
            }
        };
        let out = Self {
            rounds: cfg.parsed_or("boost.rounds", d.rounds)?,
            c_cap: cfg.parsed_or("boost.c_cap", d.c_cap)?,
            base,
            svm_c: cfg.parsed_or("boost.C", d.svm_c)?,
            gamma: cfg.parsed("boost.gamma")?,
            label_scale: cfg.parsed_or("boost.label_scale", d.label_scale)?,
            literal_stop: cfg.parsed_or("boost.literal_stop", d.literal_stop)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(MimlError::Config("boost.rounds must be >= 1".into()));
        }
        if !(self.c_cap > 0.0 && self.c_cap.is_finite()) {
            return Err(MimlError::Config("boost.c_cap must be positive".into()));
        }
        if !(self.svm_c > 0.0) {
            return Err(MimlError::Config("boost.C must be positive".into()));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(MimlError::Config("boost.gamma must be positive".into()));
            }
        }
        if !(self.label_scale > 0.0 && self.label_scale.is_finite()) {
            return Err(MimlError::Config(
                "boost.label_scale must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("boost.rounds".into(), self.rounds.to_string());
        h.insert("boost.c_cap".into(), self.c_cap.to_string());
        h.insert(
            "boost.base".into(),
            format!("{:?}", self.base).to_lowercase(),
        );
        h.insert("boost.C".into(), self.svm_c.to_string());
        if let Some(g) = self.gamma {
            h.insert("boost.gamma".into(), g.to_string());
        }
        h.insert("boost.label_scale".into(), self.label_scale.to_string());
        h.insert("boost.literal_stop".into(), self.literal_stop.to_string());
        h
    }
}

/// One multi-instance bag of the decomposition.
#[derive(Debug, Clone, PartialEq)]
pub struct MilBag {
    pub example: usize,
    pub label: usize,
    /// `+1` when the label belongs to the example.
    pub sign: f64,
    pub instances: Vec<Vec<f64>>,
}

fn tag(x: &[f64], label: usize, n_labels: usize, scale: f64) -> Vec<f64> {
    let mut v = Vec::with_capacity(x.len() + n_labels);
    v.extend_from_slice(x);
    v.extend((0..n_labels).map(|l| if l == label { scale } else { 0.0 }));
    v
}

fn transform_scaled(ds: &MimlDataset, scale: f64) -> Vec<MilBag> {
    let t = ds.n_labels();
    let mut out = Vec::with_capacity(ds.len() * t);
    for (u, ex) in ds.examples().iter().enumerate() {
        for v in 0..t {
            out.push(MilBag {
                example: u,
                label: v,
                sign: if ex.labels.contains(v) { 1.0 } else { -1.0 },
                instances: ex
                    .bag
                    .instances
                    .iter()
                    .map(|x| tag(x, v, t, scale))
                    .collect(),
            });
        }
    }
    out
}

/// Bags ordered example-major: bag `u * T + v` holds example `u` tagged with label `v`.
pub fn transform_to_mil(ds: &MimlDataset) -> Vec<MilBag> {
    transform_scaled(ds, 1.0)
}

/// Fraction of the bag's instances on which `h` disagrees with the bag sign.
pub fn bag_error(h: impl Fn(&[f64]) -> f64, bag: &MilBag) -> f64 {
    let wrong = bag.instances.iter().filter(|x| h(x) != bag.sign).count();
    wrong as f64 / bag.instances.len() as f64
}

/// Weighted threshold on a single feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    /// Output for values above the threshold; the opposite sign below.
    pub polarity: f64,
}

impl Stump {
    pub fn classify(&self, x: &[f64]) -> f64 {
        if x[self.feature] > self.threshold {
            self.polarity
        } else {
            -self.polarity
        }
    }

    /// Minimizes weighted error over every feature, cut point and polarity.
    pub fn fit(points: &[Vec<f64>], labels: &[f64], weights: &[f64]) -> Self {
        let dim = points.first().map_or(0, Vec::len);
        let total_pos: f64 = labels
            .iter()
            .zip(weights)
            .filter(|(y, _)| **y > 0.0)
            .map(|(_, w)| w)
            .sum();
        let total_neg: f64 = labels
            .iter()
            .zip(weights)
            .filter(|(y, _)| **y < 0.0)
            .map(|(_, w)| w)
            .sum();
        // everything predicted as the majority sign
        let mut best = if total_pos >= total_neg {
            (
                total_neg,
                Stump {
                    feature: 0,
                    threshold: f64::NEG_INFINITY,
                    polarity: 1.0,
                },
            )
        } else {
            (
                total_pos,
                Stump {
                    feature: 0,
                    threshold: f64::NEG_INFINITY,
                    polarity: -1.0,
                },
            )
        };
        let mut order: Vec<usize> = (0..points.len()).collect();
        for f in 0..dim {
            order.sort_by(|&a, &b| points[a][f].total_cmp(&points[b][f]));
            let (mut pos_below, mut neg_below) = (0.0, 0.0);
            for k in 0..order.len() {
                let i = order[k];
                if labels[i] > 0.0 {
                    pos_below += weights[i];
                } else {
                    neg_below += weights[i];
                }
                let v = points[i][f];
                if k + 1 < order.len() && points[order[k + 1]][f] == v {
                    continue;
                }
                let threshold = match order.get(k + 1) {
                    Some(&j) => 0.5 * (v + points[j][f]),
                    None => v,
                };
                // polarity +1: above -> +1, below -> -1
                let err_up = pos_below + (total_neg - neg_below);
                let err_down = neg_below + (total_pos - pos_below);
                if err_up < best.0 {
                    best = (
                        err_up,
                        Stump {
                            feature: f,
                            threshold,
                            polarity: 1.0,
                        },
                    );
                }
                if err_down < best.0 {
                    best = (
                        err_down,
                        Stump {
                            feature: f,
                            threshold,
                            polarity: -1.0,
                        },
                    );
                }
            }
        }
        best.1
    }
}

/// Instance-level predictor `h_t` over tagged instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum InstanceClassifier {
    Svm(SvmModel),
    Stump(Stump),
}

impl InstanceClassifier {
    /// `+1` or `-1`.
    pub fn classify(&self, x: &[f64]) -> f64 {
        match self {
            InstanceClassifier::Svm(m) => m.classify(x),
            InstanceClassifier::Stump(s) => s.classify(x),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostRound {
    pub h: InstanceClassifier,
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostModel {
    pub n_labels: usize,
    pub dim: usize,
    pub label_scale: f64,
    pub c_cap: f64,
    pub max_rounds: usize,
    pub rounds: Vec<BoostRound>,
}

impl BoostModel {
    /// The ensemble after its first `k` rounds.
    pub fn prefix(&self, k: usize) -> Self {
        let mut m = self.clone();
        m.rounds.truncate(k);
        m
    }

    /// `score(y) = sum_j sum_t c_t h_t(x_j, y)`; labels with positive score are predicted.
    pub fn predict(&self, bag: &Bag) -> Result<LabelScores> {
        if self.rounds.is_empty() {
            return Err(MimlError::InvalidArgument(
                "model has no boosting rounds".into(),
            ));
        }
        bag.check_dim(self.dim)?;
        let scores: Vec<f64> = (0..self.n_labels)
            .map(|y| {
                bag.instances
                    .iter()
                    .map(|x| {
                        let tagged = tag(x, y, self.n_labels, self.label_scale);
                        self.rounds
                            .iter()
                            .map(|r| r.c * r.h.classify(&tagged))
                            .sum::<f64>()
                    })
                    .sum()
            })
            .collect();
        Ok(LabelScores::positive(scores))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    RoundLimit,
    /// Every bag error reached 0.5.
    WeakLearnerFailed,
    /// The optimal multiplier was not positive.
    NonPositiveMultiplier,
    /// Every bag error fell below 0.5 under the literal stopping rule.
    AllBelowHalf,
}

/// What one boosting round saw and did.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundTrace {
    pub weights: Vec<f64>,
    pub errors: Vec<f64>,
    pub c: f64,
    pub weights_after: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostTrace {
    pub rounds: Vec<RoundTrace>,
    pub stop: StopReason,
}

/// `sum_i W_i exp((2 e_i - 1) c)`.
pub fn round_objective(weights: &[f64], errors: &[f64], c: f64) -> f64 {
    weights
        .iter()
        .zip(errors)
        .map(|(w, e)| w * ((2.0 * e - 1.0) * c).exp())
        .sum()
}

pub fn fit(ds: &MimlDataset, cfg: &BoostConfig) -> Result<BoostModel> {
    fit_traced(ds, cfg).map(|(m, _)| m)
}

pub fn fit_traced(ds: &MimlDataset, cfg: &BoostConfig) -> Result<(BoostModel, BoostTrace)> {
    cfg.validate()?;
    let report = crate::data::validate_dataset(ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    let t = ds.n_labels();
    let bags = transform_scaled(ds, cfg.label_scale);
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut owner = Vec::new();
    for (i, b) in bags.iter().enumerate() {
        for x in &b.instances {
            points.push(x.clone());
            labels.push(b.sign);
            owner.push(i);
        }
    }
    let kernel = KernelSpec::Rbf {
        gamma: cfg.gamma.unwrap_or(1.0 / (ds.dim() + t) as f64),
    };
    let gram = match cfg.base {
        BaseLearner::Svm => Some(point_gram(&kernel, &points)),
        BaseLearner::Stump => None,
    };
    let n_points = points.len() as f64;

    let mut w = vec![1.0 / bags.len() as f64; bags.len()];
    let mut rounds = Vec::new();
    let mut traces = Vec::new();
    let mut stop = StopReason::RoundLimit;
    for _ in 0..cfg.rounds {
        // instance weights W_i / n_i, rescaled to mean one so C keeps its usual meaning
        let inst_w: Vec<f64> = owner
            .iter()
            .map(|&i| w[i] / bags[i].instances.len() as f64 * n_points)
            .collect();
        let h = match (&gram, cfg.base) {
            (Some(g), _) => {
                let caps: Vec<f64> = inst_w.iter().map(|v| cfg.svm_c * v).collect();
                let sol = smo_solve(g, &labels, &caps, SMO_TOLERANCE)?;
                InstanceClassifier::Svm(SvmModel::from_dual(kernel, &points, &labels, &sol))
            }
            (None, _) => InstanceClassifier::Stump(Stump::fit(&points, &labels, &inst_w)),
        };
        let errors: Vec<f64> = bags
            .iter()
            .map(|b| bag_error(|x| h.classify(x), b))
            .collect();

        if cfg.literal_stop {
            if errors.iter().all(|&e| e < 0.5) {
                stop = StopReason::AllBelowHalf;
                break;
            }
        } else if errors.iter().all(|&e| e >= 0.5) {
            stop = StopReason::WeakLearnerFailed;
            break;
        }
        let slope_at_zero: f64 = w
            .iter()
            .zip(&errors)
            .map(|(w, e)| w * (2.0 * e - 1.0))
            .sum();
        if slope_at_zero >= 0.0 {
            stop = StopReason::NonPositiveMultiplier;
            break;
        }
        let c = minimize_1d_convex(|c| round_objective(&w, &errors, c), 0.0, cfg.c_cap, 1e-6)?;
        if c <= 0.0 {
            stop = StopReason::NonPositiveMultiplier;
            break;
        }
        let before = w.clone();
        for (wi, e) in w.iter_mut().zip(&errors) {
            *wi *= ((2.0 * e - 1.0) * c).exp();
        }
        let total: f64 = w.iter().sum();
        for wi in &mut w {
            *wi /= total;
        }
        traces.push(RoundTrace {
            weights: before,
            errors,
            c,
            weights_after: w.clone(),
        });
        rounds.push(BoostRound { h, c });
    }
    if rounds.is_empty() {
        return Err(MimlError::Numerical(format!(
            "boosting stopped before the first round ({stop:?})"
        )));
    }
    let model = BoostModel {
        n_labels: t,
        dim: ds.dim(),
        label_scale: cfg.label_scale,
        c_cap: cfg.c_cap,
        max_rounds: cfg.rounds,
        rounds,
    };
    Ok((
        model,
        BoostTrace {
            rounds: traces,
            stop,
        },
    ))
}
