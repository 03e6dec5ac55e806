//! Weighted soft-margin kernel SVM trained by SMO with maximal-violating-pair
//! working set selection.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{MimlError, Result};
use crate::kernels::{point_gram, KernelSpec};

pub const SMO_TOLERANCE: f64 = 1e-6;
const TAU: f64 = 1e-12;

/// Binary problem with per-example weights; example `i` gets the box `[0, C * weight_i]`.
#[derive(Debug, Clone, Copy)]
pub struct WeightedBinaryProblem<'a> {
    pub points: &'a [Vec<f64>],
    pub labels: &'a [f64],
    pub weights: &'a [f64],
    pub c: f64,
}

/// Dual solution over a precomputed kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct DualSolution {
    pub alpha: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    /// `sum_i alpha_i y_i k_i(x) + b` given the kernel column against the training points.
    pub fn decision_from_kernel(
        &self,
        labels: &[f64],
        kernel_column: impl Iterator<Item = f64>,
    ) -> f64 {
        self.alpha
            .iter()
            .zip(labels)
            .zip(kernel_column)
            .map(|((a, y), k)| a * y * k)
            .sum::<f64>()
            + self.bias
    }
}

/// `1'alpha - 1/2 alpha'Q alpha` with `Q_ij = y_i y_j K_ij`.
pub fn dual_objective(gram: &DMatrix<f64>, labels: &[f64], alpha: &[f64]) -> f64 {
    let n = alpha.len();
    let mut quad = 0.0;
    for i in 0..n {
        if alpha[i] == 0.0 {
            continue;
        }
        for j in 0..n {
            quad += alpha[i] * alpha[j] * labels[i] * labels[j] * gram[(i, j)];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

/// Solves `min 1/2 a'Qa - 1'a` s.t. `y'a = 0`, `0 <= a_i <= caps_i`.
///
/// Examples with a zero cap are excluded entirely. When the remaining
/// examples all share one sign the decision function is that constant sign.
pub fn smo_solve(
    gram: &DMatrix<f64>,
    labels: &[f64],
    caps: &[f64],
    tol: f64,
) -> Result<DualSolution> {
    let n = labels.len();
    if gram.nrows() != n || gram.ncols() != n || caps.len() != n {
        return Err(MimlError::InvalidArgument(
            "inconsistent SVM problem sizes".into(),
        ));
    }
    if labels.iter().any(|&y| y != 1.0 && y != -1.0) {
        return Err(MimlError::InvalidArgument("labels must be +1 or -1".into()));
    }
    if caps.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
        return Err(MimlError::InvalidArgument(
            "box caps must be finite and >= 0".into(),
        ));
    }
    let active: Vec<usize> = (0..n).filter(|&i| caps[i] > 0.0).collect();
    let has_pos = active.iter().any(|&i| labels[i] > 0.0);
    let has_neg = active.iter().any(|&i| labels[i] < 0.0);
    if !(has_pos && has_neg) {
        let bias = match (has_pos, has_neg) {
            (true, false) => 1.0,
            (false, true) => -1.0,
            _ => {
                return Err(MimlError::InvalidArgument(
                    "SVM needs at least one example with positive weight".into(),
                ))
            }
        };
        return Ok(DualSolution {
            alpha: vec![0.0; n],
            bias,
            iterations: 0,
            converged: true,
        });
    }

    let y = labels;
    let mut alpha = vec![0.0; n];
    let mut grad = vec![-1.0; n];
    let max_iter = 100_000usize.max(active.len() * 2_000);
    let mut iterations = 0;
    let mut converged = false;

    let in_up = |t: usize, a: &[f64]| (y[t] > 0.0 && a[t] < caps[t]) || (y[t] < 0.0 && a[t] > 0.0);
    let in_low = |t: usize, a: &[f64]| (y[t] < 0.0 && a[t] < caps[t]) || (y[t] > 0.0 && a[t] > 0.0);

    while iterations < max_iter {
        let mut i = usize::MAX;
        let mut gmax = f64::NEG_INFINITY;
        let mut j = usize::MAX;
        let mut gmin = f64::INFINITY;
        for &t in &active {
            let v = -y[t] * grad[t];
            if in_up(t, &alpha) && v > gmax {
                gmax = v;
                i = t;
            }
            if in_low(t, &alpha) && v < gmin {
                gmin = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX || gmax - gmin < tol {
            converged = true;
            break;
        }
        iterations += 1;

        let (ci, cj) = (caps[i], caps[j]);
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let qii = gram[(i, i)];
        let qjj = gram[(j, j)];
        let qij = y[i] * y[j] * gram[(i, j)];
        if y[i] != y[j] {
            let mut quad = qii + qjj + 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > ci - cj {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = ci - diff;
                }
            } else if alpha[j] > cj {
                alpha[j] = cj;
                alpha[i] = cj + diff;
            }
        } else {
            let mut quad = qii + qjj - 2.0 * qij;
            if quad <= 0.0 {
                quad = TAU;
            }
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > ci {
                if alpha[i] > ci {
                    alpha[i] = ci;
                    alpha[j] = sum - ci;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > cj {
                if alpha[j] > cj {
                    alpha[j] = cj;
                    alpha[i] = sum - cj;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for &t in &active {
            grad[t] += y[t] * (y[i] * gram[(t, i)] * di + y[j] * gram[(t, j)] * dj);
        }
    }

    let bias = compute_bias(&active, y, &alpha, caps, &grad);
    Ok(DualSolution {
        alpha,
        bias,
        iterations,
        converged,
    })
}

fn compute_bias(active: &[usize], y: &[f64], alpha: &[f64], caps: &[f64], grad: &[f64]) -> f64 {
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free, mut sum_free) = (0usize, 0.0);
    for &t in active {
        let yg = y[t] * grad[t];
        if alpha[t] >= caps[t] {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free += 1;
            sum_free += yg;
        }
    }
    let rho = if free > 0 {
        sum_free / free as f64
    } else {
        0.5 * (ub + lb)
    };
    -rho
}

/// Kernel decision function `sum_i coef_i k(sv_i, x) + bias`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub kernel: KernelSpec,
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i * y_i` for every support vector.
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl SvmModel {
    pub fn constant(kernel: KernelSpec, bias: f64) -> Self {
        Self {
            kernel,
            support_vectors: Vec::new(),
            coefficients: Vec::new(),
            bias,
        }
    }

    /// Keeps the examples with non-zero dual weight as support vectors.
    pub fn from_dual(
        kernel: KernelSpec,
        points: &[Vec<f64>],
        labels: &[f64],
        sol: &DualSolution,
    ) -> Self {
        let mut model = Self::constant(kernel, sol.bias);
        for (k, &a) in sol.alpha.iter().enumerate() {
            if a > 0.0 {
                model.support_vectors.push(points[k].clone());
                model.coefficients.push(a * labels[k]);
            }
        }
        model
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// `+1` when the decision value is non-negative, else `-1`.
    pub fn classify(&self, x: &[f64]) -> f64 {
        if self.decision(x) >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Trains a weighted soft-margin SVM on explicit feature vectors.
pub fn train_weighted_svm(p: &WeightedBinaryProblem<'_>, spec: &KernelSpec) -> Result<SvmModel> {
    let n = p.points.len();
    if p.labels.len() != n || p.weights.len() != n {
        return Err(MimlError::InvalidArgument(
            "inconsistent SVM problem sizes".into(),
        ));
    }
    if !(p.c > 0.0) {
        return Err(MimlError::InvalidArgument(format!(
            "C must be > 0, got {}",
            p.c
        )));
    }
    if let Some(d) = p.points.first().map(Vec::len) {
        if let Some(x) = p.points.iter().find(|x| x.len() != d) {
            return Err(MimlError::DimensionMismatch {
                expected: d,
                found: x.len(),
            });
        }
    }
    let caps: Vec<f64> = p.weights.iter().map(|w| p.c * w).collect();
    let keep: Vec<usize> = (0..n).filter(|&i| caps[i] > 0.0).collect();
    let points: Vec<Vec<f64>> = keep.iter().map(|&i| p.points[i].clone()).collect();
    let labels: Vec<f64> = keep.iter().map(|&i| p.labels[i]).collect();
    let caps: Vec<f64> = keep.iter().map(|&i| caps[i]).collect();
    let gram = point_gram(spec, &points);
    let sol = smo_solve(&gram, &labels, &caps, SMO_TOLERANCE)?;
    Ok(SvmModel::from_dual(*spec, &points, &labels, &sol))
}
