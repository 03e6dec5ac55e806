//! Gaussian mixtures fitted by EM, used to discover sub-concepts among instances.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{MimlError, Result};

/// EM stops once an iteration raises the log-likelihood by less than
/// `EM_TOLERANCE * (1 + |ll|)`.
pub const EM_TOLERANCE: f64 = 1e-10;
pub const EM_MAX_ITERS: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub means: Vec<Vec<f64>>,
    /// Row-major `d x d` covariance per component.
    pub covariances: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmTrace {
    /// Log-likelihood at the initial parameters, then after every accepted iteration.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// True when an iteration lowered the log-likelihood and was discarded.
    pub rejected_step: bool,
}

/// `(1e-6 trace(S)/d + 1e-12) I`, added after every covariance estimate.
pub fn regularize(cov: &mut DMatrix<f64>) {
    let d = cov.nrows();
    let ridge = 1e-6 * cov.trace() / d as f64 + 1e-12;
    for k in 0..d {
        cov[(k, k)] += ridge;
    }
}

/// Per-component pieces of the log density.
struct Component {
    log_weight: f64,
    mean: DVector<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
}

impl GmmModel {
    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    pub fn covariance(&self, k: usize) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_row_slice(d, d, &self.covariances[k])
    }

    fn components(&self) -> Result<Vec<Component>> {
        let d = self.dim();
        (0..self.n_components())
            .map(|k| {
                let chol = Cholesky::new(self.covariance(k)).ok_or_else(|| {
                    MimlError::Numerical(format!("covariance {k} is not positive definite"))
                })?;
                let log_det: f64 = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
                Ok(Component {
                    log_weight: self.weights[k].ln(),
                    mean: DVector::from_column_slice(&self.means[k]),
                    chol,
                    log_norm: -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det),
                })
            })
            .collect()
    }

    /// `ln pi_k + ln N(x | mu_k, S_k)` for every component.
    fn joint_log(components: &[Component], x: &[f64]) -> Vec<f64> {
        let xv = DVector::from_column_slice(x);
        components
            .iter()
            .map(|c| {
                let diff = &xv - &c.mean;
                let y = c
                    .chol
                    .l()
                    .solve_lower_triangular(&diff)
                    .expect("Cholesky factor is non-singular");
                c.log_weight + c.log_norm - 0.5 * y.norm_squared()
            })
            .collect()
    }

    /// Responsibilities `gamma[i][k]`; every row sums to one.
    pub fn responsibilities(&self, xs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let comps = self.components()?;
        Ok(xs
            .iter()
            .map(|x| normalize(&Self::joint_log(&comps, x)).1)
            .collect())
    }

    /// `sum_i ln sum_k pi_k N(x_i | mu_k, S_k)`.
    pub fn log_likelihood(&self, xs: &[&[f64]]) -> Result<f64> {
        let comps = self.components()?;
        Ok(xs
            .iter()
            .map(|x| normalize(&Self::joint_log(&comps, x)).0)
            .sum())
    }

    /// Component of largest responsibility per instance, ties to the lowest index.
    pub fn assign(&self, xs: &[&[f64]]) -> Result<Vec<usize>> {
        let comps = self.components()?;
        Ok(xs
            .iter()
            .map(|x| {
                let logs = Self::joint_log(&comps, x);
                let mut best = 0;
                for (k, &v) in logs.iter().enumerate() {
                    if v > logs[best] {
                        best = k;
                    }
                }
                best
            })
            .collect())
    }
}

/// Log-sum-exp and the normalized weights.
fn normalize(logs: &[f64]) -> (f64, Vec<f64>) {
    let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|v| (v - top).exp()).collect();
    let total: f64 = exps.iter().sum();
    (top + total.ln(), exps.iter().map(|e| e / total).collect())
}

/// Means, covariances and weights re-estimated from responsibilities.
fn m_step(xs: &[&[f64]], resp: &[Vec<f64>], n_components: usize) -> GmmModel {
    let d = xs[0].len();
    let n = xs.len() as f64;
    let mut model = GmmModel {
        means: Vec::with_capacity(n_components),
        covariances: Vec::with_capacity(n_components),
        weights: Vec::with_capacity(n_components),
    };
    for k in 0..n_components {
        // An empty component keeps a tiny share so its log weight stays finite.
        let nk: f64 = resp.iter().map(|r| r[k]).sum::<f64>().max(1e-300);
        let mut mean = vec![0.0; d];
        for (x, r) in xs.iter().zip(resp) {
            for (m, v) in mean.iter_mut().zip(x.iter()) {
                *m += r[k] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nk);
        let mut cov = DMatrix::zeros(d, d);
        for (x, r) in xs.iter().zip(resp) {
            let diff = DVector::from_iterator(d, x.iter().zip(&mean).map(|(a, b)| a - b));
            cov += r[k] * &diff * diff.transpose();
        }
        // `(r d_i) d_j` and `(r d_j) d_i` round differently.
        cov = (&cov + cov.transpose()) * (0.5 / nk);
        regularize(&mut cov);
        model.covariances.push(cov.transpose().as_slice().to_vec());
        model.means.push(mean);
        model.weights.push(nk / n);
    }
    let total: f64 = model.weights.iter().sum();
    model.weights.iter_mut().for_each(|w| *w /= total);
    model
}

/// k-means++ seeding for the means; every component starts with the pooled
/// covariance and equal weight.
fn initial_model(xs: &[&[f64]], n_components: usize, rng: &mut ChaCha8Rng) -> GmmModel {
    let d = xs[0].len();
    let sq = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let mut means: Vec<Vec<f64>> = vec![xs[rng.random_range(0..xs.len())].to_vec()];
    let mut nearest: Vec<f64> = xs.iter().map(|x| sq(x, &means[0])).collect();
    while means.len() < n_components {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random_range(0.0..total);
            let mut idx = xs.len() - 1;
            for (i, &w) in nearest.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.random_range(0..xs.len())
        };
        means.push(xs[pick].to_vec());
        for (n, x) in nearest.iter_mut().zip(xs) {
            *n = n.min(sq(x, xs[pick]));
        }
    }
    let uniform = vec![vec![1.0]; xs.len()];
    let pooled = DMatrix::from_row_slice(d, d, &m_step(xs, &uniform, 1).covariances[0]);
    GmmModel {
        means,
        covariances: vec![pooled.as_slice().to_vec(); n_components],
        weights: vec![1.0 / n_components as f64; n_components],
    }
}

/// EM from a seeded start. A step that lowers the log-likelihood (possible
/// only through the covariance regularizer) is discarded and ends the loop.
pub fn em_fit_gmm(
    xs: &[&[f64]],
    n_components: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<(GmmModel, EmTrace)> {
    if n_components == 0 || n_components > xs.len() {
        return Err(MimlError::InvalidArgument(format!(
            "need 1 <= M <= N, got M = {n_components} with N = {}",
            xs.len()
        )));
    }
    let d = xs[0].len();
    if d == 0 || xs.iter().any(|x| x.len() != d) {
        return Err(MimlError::InvalidArgument(
            "instances must share a positive dimension".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = initial_model(xs, n_components, &mut rng);
    let mut ll = model.log_likelihood(xs)?;
    let mut trace = EmTrace {
        log_likelihood: vec![ll],
        iterations: 0,
        converged: false,
        rejected_step: false,
    };
    for _ in 0..max_iters {
        let resp = model.responsibilities(xs)?;
        let next = m_step(xs, &resp, n_components);
        let next_ll = next.log_likelihood(xs)?;
        trace.iterations += 1;
        if next_ll < ll {
            trace.rejected_step = true;
            trace.converged = true;
            break;
        }
        let gain = next_ll - ll;
        model = next;
        ll = next_ll;
        trace.log_likelihood.push(ll);
        if gain <= tol * (1.0 + ll.abs()) {
            trace.converged = true;
            break;
        }
    }
    Ok((model, trace))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_component_is_sample_moments() {
        let pts = [
            vec![0.0, 1.0],
            vec![2.0, 1.0],
            vec![1.0, 4.0],
            vec![3.0, 2.0],
        ];
        let xs: Vec<&[f64]> = pts.iter().map(Vec::as_slice).collect();
        let (g, _) = em_fit_gmm(&xs, 1, 0, 50, 1e-12).unwrap();
        assert!((g.means[0][0] - 1.5).abs() < 1e-12 && (g.means[0][1] - 2.0).abs() < 1e-12);
        assert_eq!(g.weights, vec![1.0]);
        let mut s = DMatrix::from_row_slice(2, 2, &[1.25, 0.0, 0.0, 1.5]);
        regularize(&mut s);
        assert!((g.covariance(0) - s).amax() < 1e-12);
        assert_eq!(g.assign(&xs).unwrap(), vec![0; 4]);
    }

    #[test]
    fn symmetric_tie_goes_to_first_component() {
        let g = GmmModel {
            means: vec![vec![-1.0], vec![1.0]],
            covariances: vec![vec![1.0], vec![1.0]],
            weights: vec![0.5, 0.5],
        };
        assert_eq!(g.assign(&[&[0.0]]).unwrap(), vec![0]);
    }

    #[test]
    fn too_many_components_is_an_error() {
        let xs: Vec<&[f64]> = vec![&[0.0], &[1.0]];
        assert!(em_fit_gmm(&xs, 3, 0, 10, 1e-9).is_err());
    }
}
