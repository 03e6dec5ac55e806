//! Direct regularized MIML learner. One kernel expansion per label over the
//! training bags and their instances, fitted by CCCP around a constraint
//! generation solver, with optional instance-level class-imbalance weights.

mod cutting_plane;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use cutting_plane::{cutting_plane_solve, Constraint, Penalties, SubSolution, Subproblem};

use crate::data::{validate_dataset, Bag, LabelSet, MimlDataset};
use crate::dataio::Config;
use crate::error::{MimlError, Result};
use crate::harness::random_split;
use crate::kernels::{build_gram, cross_kernel, GramMatrix, KernelSpec};
use crate::metrics::{hamming_loss, LabelScores};

pub const CONFIG_KEYS: [&str; 9] = [
    "dmiml.lambda",
    "dmiml.mu",
    "dmiml.gamma",
    "dmiml.eps",
    "dmiml.p",
    "dmiml.cccp_iters",
    "dmiml.imbalance",
    "dmiml.kernel_gamma",
    "dmiml.seed",
];

/// Stop once an accepted CCCP step lowers the objective by less than this.
pub const CCCP_TOLERANCE: f64 = 1e-6;

/// Multipliers of the default RBF width tried by hold-out when
/// `kernel_gamma` is not fixed.
pub const KERNEL_GRID: [f64; 3] = [1.0, 3.0, 10.0];

/// `rho[t][i][j]`: weight of instance `j` of bag `i` in the linearized max for label `t`.
pub type Rho = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq)]
pub struct DMimlConfig {
    pub lambda: f64,
    pub mu: f64,
    /// Empirical-risk weight; `10 m` when unset.
    pub gamma: Option<f64>,
    pub eps: f64,
    pub p: usize,
    pub cccp_iters: usize,
    pub use_imbalance: bool,
    /// RBF width; picked by hold-out over multiples of the inverse mean
    /// squared instance distance when unset.
    pub kernel_gamma: Option<f64>,
    pub seed: u64,
}

impl Default for DMimlConfig {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            mu: 0.1,
            gamma: None,
            eps: 1e-4,
            p: 59,
            cccp_iters: 20,
            use_imbalance: false,
            kernel_gamma: None,
            seed: 0,
        }
    }
}

impl DMimlConfig {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        let d = Self::default();
        let out = Self {
            lambda: cfg.parsed_or("dmiml.lambda", d.lambda)?,
            mu: cfg.parsed_or("dmiml.mu", d.mu)?,
            gamma: cfg.parsed("dmiml.gamma")?,
            eps: cfg.parsed_or("dmiml.eps", d.eps)?,
            p: cfg.parsed_or("dmiml.p", d.p)?,
            cccp_iters: cfg.parsed_or("dmiml.cccp_iters", d.cccp_iters)?,
            use_imbalance: cfg.parsed_or("dmiml.imbalance", d.use_imbalance)?,
            kernel_gamma: cfg.parsed("dmiml.kernel_gamma")?,
            seed: cfg.parsed_or("dmiml.seed", d.seed)?,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite())
            || !(self.mu >= 0.0 && self.mu.is_finite())
        {
            return Err(MimlError::Config(
                "dmiml.lambda and dmiml.mu must be finite and >= 0".into(),
            ));
        }
        if self.gamma.is_some_and(|g| !(g > 0.0 && g.is_finite())) {
            return Err(MimlError::Config("dmiml.gamma must be positive".into()));
        }
        if !(self.eps > 0.0) || self.p == 0 || self.cccp_iters == 0 {
            return Err(MimlError::Config(
                "dmiml.eps, dmiml.p and dmiml.cccp_iters must be positive".into(),
            ));
        }
        if self
            .kernel_gamma
            .is_some_and(|g| !(g > 0.0 && g.is_finite()))
        {
            return Err(MimlError::Config(
                "dmiml.kernel_gamma must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn gamma_for(&self, m: usize) -> f64 {
        self.gamma.unwrap_or(10.0 * m as f64)
    }

    pub fn penalties(&self, m: usize, n_labels: usize) -> Penalties {
        Penalties::new(self.lambda, self.mu, self.gamma_for(m), m, n_labels)
    }

    pub fn hyperparameters(&self) -> BTreeMap<String, String> {
        let mut h = BTreeMap::new();
        h.insert("dmiml.lambda".into(), self.lambda.to_string());
        h.insert("dmiml.mu".into(), self.mu.to_string());
        if let Some(g) = self.gamma {
            h.insert("dmiml.gamma".into(), g.to_string());
        }
        h.insert("dmiml.eps".into(), self.eps.to_string());
        h.insert("dmiml.p".into(), self.p.to_string());
        h.insert("dmiml.cccp_iters".into(), self.cccp_iters.to_string());
        h.insert("dmiml.imbalance".into(), self.use_imbalance.to_string());
        if let Some(g) = self.kernel_gamma {
            h.insert("dmiml.kernel_gamma".into(), g.to_string());
        }
        h.insert("dmiml.seed".into(), self.seed.to_string());
        h
    }
}

/// Variables of the kernelized objective, stored label-major: `alpha[t]` over
/// the Gram objects, `xi[t][i]` and `delta[t][i]` over bags.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingState {
    pub alpha: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub xi: Vec<Vec<f64>>,
    pub delta: Vec<Vec<f64>>,
}

impl TrainingState {
    pub fn zeros(n_labels: usize, m: usize, n_objects: usize) -> Self {
        Self {
            alpha: vec![vec![0.0; n_objects]; n_labels],
            bias: vec![0.0; n_labels],
            xi: vec![vec![0.0; m]; n_labels],
            delta: vec![vec![0.0; m]; n_labels],
        }
    }

    /// Replaces xi and delta by the smallest values feasible for the exact
    /// (max-based) constraints: `xi = (1 - y f)_+`, `delta = |f(X) - max_j f(x_j)|`.
    pub fn with_minimal_slacks(mut self, gram: &GramMatrix, signs: &[Vec<f64>]) -> Self {
        let m = gram.n_bags();
        for t in 0..self.alpha.len() {
            let g = kernel_times(&gram.matrix, &self.alpha[t]);
            for i in 0..m {
                self.xi[t][i] = (1.0 - signs[t][i] * (g[i] + self.bias[t])).max(0.0);
                let top = (0..gram.bag_sizes()[i])
                    .map(|j| g[gram.instance_index(i, j)])
                    .fold(f64::NEG_INFINITY, f64::max);
                self.delta[t][i] = (g[i] - top).abs();
            }
        }
        self
    }
}

fn kernel_times(k: &DMatrix<f64>, v: &[f64]) -> Vec<f64> {
    (k * nalgebra::DVector::from_column_slice(v))
        .iter()
        .copied()
        .collect()
}

/// `signs[t][i] = +1` when bag `i` carries label `t`, else `-1`.
pub fn label_signs(ds: &MimlDataset) -> Vec<Vec<f64>> {
    (0..ds.n_labels())
        .map(|t| {
            ds.label_sets()
                .map(|s| if s.contains(t) { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// Average hinge loss plus `lambda` times the average bag/instance discrepancy.
///
/// `bag_scores[i][t]` scores bag `i`; `instance_scores[i][j][t]` scores its instances.
pub fn loss_value(
    ds: &MimlDataset,
    bag_scores: &[Vec<f64>],
    instance_scores: &[Vec<Vec<f64>>],
    lambda: f64,
) -> Result<f64> {
    let m = ds.len();
    let n_labels = ds.n_labels();
    if bag_scores.len() != m || instance_scores.len() != m {
        return Err(MimlError::DimensionMismatch {
            expected: m,
            found: bag_scores.len().min(instance_scores.len()),
        });
    }
    let mut hinge = 0.0;
    let mut spread = 0.0;
    for (i, ex) in ds.examples().iter().enumerate() {
        if bag_scores[i].len() != n_labels || instance_scores[i].len() != ex.bag.len() {
            return Err(MimlError::InvalidArgument(format!(
                "scores for bag {i} have the wrong shape"
            )));
        }
        for t in 0..n_labels {
            let y = if ex.labels.contains(t) { 1.0 } else { -1.0 };
            let f = bag_scores[i][t];
            hinge += (1.0 - y * f).max(0.0);
            let mut top = f64::NEG_INFINITY;
            for row in &instance_scores[i] {
                if row.len() != n_labels {
                    return Err(MimlError::InvalidArgument(format!(
                        "instance scores for bag {i} have the wrong shape"
                    )));
                }
                top = top.max(row[t]);
            }
            spread += (f - top).abs();
        }
    }
    let mt = (m * n_labels) as f64;
    Ok(hinge / mt + lambda * spread / mt)
}

/// Share of instances carrying each label, each bag's instances split evenly
/// among its labels. Sums to one over labels.
pub fn compute_imbalance_rates(ds: &MimlDataset) -> Result<Vec<f64>> {
    let n = ds.n_instances() as f64;
    let mut rates = vec![0.0; ds.n_labels()];
    let mut seen = vec![false; ds.n_labels()];
    for ex in ds.examples() {
        let share = ex.bag.len() as f64 / (n * ex.labels.len() as f64);
        for y in ex.labels.iter() {
            rates[y] += share;
            seen[y] = true;
        }
    }
    if let Some(y) = seen.iter().position(|s| !s) {
        return Err(MimlError::InvalidDataset(format!(
            "label {y} appears in no example"
        )));
    }
    Ok(rates)
}

/// Hinge weights `tau[t][i]`: `1 - ibr(t)` for positives and `ibr(t)` for negatives.
pub fn imbalance_weights(signs: &[Vec<f64>], rates: &[f64]) -> Vec<Vec<f64>> {
    signs
        .iter()
        .zip(rates)
        .map(|(row, &r)| {
            row.iter()
                .map(|&y| if y > 0.0 { 1.0 - r } else { r })
                .collect()
        })
        .collect()
}

/// Objective over all labels:
/// `1/(2T) sum_t a_t'K a_t + mu/T^2 (A1)'K(A1) + c_xi sum tau*xi + c_delta sum delta`.
pub fn objective_value(
    state: &TrainingState,
    gram: &GramMatrix,
    tau: &[Vec<f64>],
    pen: &Penalties,
) -> f64 {
    let k = &gram.matrix;
    let n = gram.n_objects();
    let t = pen.n_labels as f64;
    let mut own = 0.0;
    let mut total = vec![0.0; n];
    for a in &state.alpha {
        let ka = kernel_times(k, a);
        own += a.iter().zip(&ka).map(|(x, y)| x * y).sum::<f64>();
        for (s, v) in total.iter_mut().zip(a) {
            *s += v;
        }
    }
    let kt = kernel_times(k, &total);
    let coupled: f64 = total.iter().zip(&kt).map(|(x, y)| x * y).sum();
    let hinge: f64 = state
        .xi
        .iter()
        .zip(tau)
        .map(|(x, w)| x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    let spread: f64 = state.delta.iter().flatten().sum();
    own / (2.0 * t) + pen.mu_term * coupled + pen.c_xi * hinge + pen.c_delta * spread
}

/// Tie-sharing rho: `1/n_d` on the instances attaining the per-bag maximum of
/// `K alpha_t`, zero elsewhere.
pub fn update_rho(alpha: &[Vec<f64>], gram: &GramMatrix) -> Rho {
    alpha
        .iter()
        .map(|a| {
            let g = kernel_times(&gram.matrix, a);
            (0..gram.n_bags())
                .map(|i| {
                    let vals: Vec<f64> = (0..gram.bag_sizes()[i])
                        .map(|j| g[gram.instance_index(i, j)])
                        .collect();
                    let top = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let tol = 1e-12 * (1.0 + top.abs());
                    let hits = vals.iter().filter(|&&v| v >= top - tol).count() as f64;
                    vals.iter()
                        .map(|&v| if v >= top - tol { 1.0 / hits } else { 0.0 })
                        .collect()
                })
                .collect()
        })
        .collect()
}

/// `1/n_i` on every instance, for every label.
pub fn uniform_rho(gram: &GramMatrix, n_labels: usize) -> Rho {
    let per_label: Vec<Vec<f64>> = gram
        .bag_sizes()
        .iter()
        .map(|&n| vec![1.0 / n as f64; n])
        .collect();
    vec![per_label; n_labels]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DMimlSvmModel {
    pub n_labels: usize,
    pub dim: usize,
    pub kernel: KernelSpec,
    pub training_bags: Vec<Bag>,
    /// `alpha[t]` over `(X_1..X_m, x_11..x_{m,n_m})`.
    pub alpha: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    /// Hinge weights `tau[t][i]` used in training.
    pub tau: Vec<Vec<f64>>,
}

impl DMimlSvmModel {
    pub fn scores(&self, bag: &Bag) -> Result<Vec<f64>> {
        if bag.is_empty() {
            return Err(MimlError::InvalidArgument(
                "cannot score an empty bag".into(),
            ));
        }
        bag.check_dim(self.dim)?;
        let kx = cross_kernel(&self.kernel, bag, &self.training_bags);
        Ok(self
            .alpha
            .iter()
            .zip(&self.bias)
            .map(|(a, b)| a.iter().zip(&kx).map(|(x, y)| x * y).sum::<f64>() + b)
            .collect())
    }

    /// Labels with positive score, or the top label when there are none.
    pub fn predict(&self, bag: &Bag) -> Result<LabelScores> {
        Ok(LabelScores::positive_or_top(self.scores(bag)?))
    }
}

/// Per-iteration record of a fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    /// Objective at the zero start followed by every accepted CCCP iterate.
    pub objectives: Vec<f64>,
    /// Exhaustive-sweep violation at each cutting-plane return.
    pub violations: Vec<f64>,
    /// True when a CCCP step failed to lower the objective and was discarded.
    pub rejected_step: bool,
}

/// Inverse mean squared distance between distinct instances.
pub fn default_kernel_gamma(ds: &MimlDataset) -> f64 {
    let points: Vec<&[f64]> = ds.bags().flat_map(|b| b.iter()).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..points.len() {
        for j in 0..i {
            total += points[i]
                .iter()
                .zip(points[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>();
            count += 1;
        }
    }
    if count == 0 || total == 0.0 {
        1.0 / ds.dim().max(1) as f64
    } else {
        count as f64 / total
    }
}

pub fn fit(ds: &MimlDataset, cfg: &DMimlConfig) -> Result<DMimlSvmModel> {
    fit_traced(ds, cfg).map(|r| r.0)
}

pub fn fit_traced(ds: &MimlDataset, cfg: &DMimlConfig) -> Result<(DMimlSvmModel, FitTrace)> {
    cfg.validate()?;
    let report = validate_dataset(ds);
    if !report.is_valid() {
        return Err(MimlError::InvalidDataset(report.to_string()));
    }
    let width = match cfg.kernel_gamma {
        Some(g) => g,
        None => select_kernel_gamma(ds, cfg)?,
    };
    fit_with_width(ds, cfg, width)
}

/// Hold-out choice of the RBF width on a 75/25 split, scored by hamming loss.
/// Candidates whose fit fails on the smaller split are skipped.
fn select_kernel_gamma(ds: &MimlDataset, cfg: &DMimlConfig) -> Result<f64> {
    let base = default_kernel_gamma(ds);
    if ds.len() < 4 {
        return Ok(base);
    }
    let split = random_split(ds.len(), 0.75, cfg.seed)?;
    let (train, valid) = (ds.subset(&split.train), ds.subset(&split.test));
    let truth: Vec<LabelSet> = valid.label_sets().cloned().collect();
    let mut best = (f64::INFINITY, base);
    for factor in KERNEL_GRID {
        let Ok((model, _)) = fit_with_width(&train, cfg, factor * base) else {
            continue;
        };
        let preds = valid
            .bags()
            .map(|b| model.predict(b))
            .collect::<Result<Vec<_>>>()?;
        let loss = hamming_loss(&preds, &truth, ds.n_labels())?;
        if loss < best.0 {
            best = (loss, factor * base);
        }
    }
    Ok(best.1)
}

fn fit_with_width(
    ds: &MimlDataset,
    cfg: &DMimlConfig,
    width: f64,
) -> Result<(DMimlSvmModel, FitTrace)> {
    let m = ds.len();
    let n_labels = ds.n_labels();
    let kernel = KernelSpec::rbf(width)?;
    let gram = build_gram(&kernel, ds);
    let signs = label_signs(ds);
    let tau = if cfg.use_imbalance {
        imbalance_weights(&signs, &compute_imbalance_rates(ds)?)
    } else {
        vec![vec![1.0; m]; n_labels]
    };
    let penalties = cfg.penalties(m, n_labels);

    let mut state =
        TrainingState::zeros(n_labels, m, gram.n_objects()).with_minimal_slacks(&gram, &signs);
    let mut current = objective_value(&state, &gram, &tau, &penalties);
    let mut trace = FitTrace {
        objectives: vec![current],
        violations: Vec::new(),
        rejected_step: false,
    };
    let mut rho = uniform_rho(&gram, n_labels);
    for iter in 0..cfg.cccp_iters {
        let sub = Subproblem {
            gram: &gram,
            signs: &signs,
            tau: &tau,
            rho: &rho,
            penalties,
            eps: cfg.eps,
            p: cfg.p,
        };
        let sol = cutting_plane_solve(&sub, cfg.seed.wrapping_add(iter as u64))?;
        trace.violations.push(sol.max_violation);
        let next = sol.state.with_minimal_slacks(&gram, &signs);
        let value = objective_value(&next, &gram, &tau, &penalties);
        if value > current {
            trace.rejected_step = true;
            break;
        }
        let gain = current - value;
        state = next;
        current = value;
        trace.objectives.push(value);
        if gain < CCCP_TOLERANCE {
            break;
        }
        rho = update_rho(&state.alpha, &gram);
    }

    let model = DMimlSvmModel {
        n_labels,
        dim: ds.dim(),
        kernel,
        training_bags: ds.bags().cloned().collect(),
        alpha: state.alpha,
        bias: state.bias,
        tau,
    };
    Ok((model, trace))
}
