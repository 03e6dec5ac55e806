//! Max-margin polishing of derived label vectors.
//!
//! `min 1/2 |w|^2 + C sum xi` over `w, b, xi` and flip weights `Z` in
//! `[-1, 1]^{m x M}`, with `y_i (w'(c_i * z_i) + b) >= 1 - xi_i` and
//! `sum Z >= 2 theta - 1`, solved by alternating an SVM over `(w, b)` and
//! an LP over `Z`.

use nalgebra::DMatrix;

use crate::error::{MimlError, Result};
use crate::solvers::{optimal_bias, smo_solve, solve_lp, LpProblem};

pub const POLISH_MAX_ALTERNATIONS: usize = 50;
/// Stop once no flip weight moves by this much in an alternation.
pub const POLISH_Z_TOLERANCE: f64 = 1e-4;
/// Stop once an alternation lowers the objective by less than this.
pub const POLISH_OBJECTIVE_TOLERANCE: f64 = 1e-6;
const POLISH_SMO_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Polished {
    /// `+1` where `c_ij z_ij > 0`, else `-1`.
    pub labels: Vec<Vec<f64>>,
    pub z: Vec<Vec<f64>>,
    pub w: Vec<f64>,
    pub b: f64,
    /// Objective after the first SVM step, then after every later half step.
    pub objectives: Vec<f64>,
    pub alternations: usize,
}

/// Objective with the exact slacks for `(w, b, Z)`.
pub fn polish_objective(
    c: &[Vec<f64>],
    z: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    b: f64,
    cost: f64,
) -> f64 {
    let hinge: f64 = c
        .iter()
        .zip(z)
        .zip(y)
        .map(|((ci, zi), yi)| {
            let f: f64 = ci.iter().zip(zi).zip(w).map(|((a, b), w)| a * b * w).sum();
            (1.0 - yi * (f + b)).max(0.0)
        })
        .sum();
    0.5 * w.iter().map(|v| v * v).sum::<f64>() + cost * hinge
}

/// Linear soft-margin SVM on the inputs `q_i = c_i * z_i`.
fn svm_step(c: &[Vec<f64>], z: &[Vec<f64>], y: &[f64], cost: f64) -> Result<(Vec<f64>, f64)> {
    let m = c.len();
    let q: Vec<Vec<f64>> = c
        .iter()
        .zip(z)
        .map(|(ci, zi)| ci.iter().zip(zi).map(|(a, b)| a * b).collect())
        .collect();
    let gram = DMatrix::from_fn(m, m, |i, j| {
        q[i].iter().zip(&q[j]).map(|(a, b)| a * b).sum()
    });
    let sol = smo_solve(&gram, y, &vec![cost; m], POLISH_SMO_TOLERANCE)?;
    let dim = c[0].len();
    let mut w = vec![0.0; dim];
    for ((qi, &a), &yi) in q.iter().zip(&sol.alpha).zip(y) {
        for (wk, v) in w.iter_mut().zip(qi) {
            *wk += a * yi * v;
        }
    }
    let f: Vec<f64> = q
        .iter()
        .map(|qi| qi.iter().zip(&w).map(|(a, b)| a * b).sum())
        .collect();
    let b = optimal_bias(&f, y, &vec![1.0; m]);
    Ok((w, b))
}

/// Best `Z` for fixed `(w, b)`. Among the minimizers, the one keeping the
/// most labels (largest `sum Z`) is taken.
fn lp_step(
    c: &[Vec<f64>],
    y: &[f64],
    w: &[f64],
    b: f64,
    cost: f64,
    theta: f64,
) -> Result<Vec<Vec<f64>>> {
    let m = c.len();
    let dim = w.len();
    let nz = m * dim;
    let nv = nz + m;
    // Rows: one margin row per bag, then the flip budget.
    let mut a = DMatrix::zeros(m + 1, nv);
    let mut rhs = Vec::with_capacity(m + 2);
    for i in 0..m {
        for j in 0..dim {
            a[(i, i * dim + j)] = -y[i] * w[j] * c[i][j];
        }
        a[(i, nz + i)] = -1.0;
        rhs.push(y[i] * b - 1.0);
    }
    for v in 0..nz {
        a[(m, v)] = -1.0;
    }
    rhs.push(1.0 - 2.0 * theta);
    let lower: Vec<f64> = (0..nv).map(|v| if v < nz { -1.0 } else { 0.0 }).collect();
    let upper: Vec<f64> = (0..nv)
        .map(|v| if v < nz { 1.0 } else { f64::INFINITY })
        .collect();
    let slack_cost: Vec<f64> = (0..nv).map(|v| if v < nz { 0.0 } else { cost }).collect();

    let first = solve_lp(
        &LpProblem::new(slack_cost.clone())
            .with_inequalities(a.clone(), rhs.clone())
            .with_bounds(lower.clone(), upper.clone()),
    )?;
    let mut a2 = a.clone().insert_row(m + 1, 0.0);
    for v in nz..nv {
        a2[(m + 1, v)] = cost;
    }
    rhs.push(first.objective + 1e-9 * (1.0 + first.objective.abs()));
    let keep: Vec<f64> = (0..nv).map(|v| if v < nz { -1.0 } else { 0.0 }).collect();
    let second = solve_lp(
        &LpProblem::new(keep)
            .with_inequalities(a2, rhs)
            .with_bounds(lower, upper),
    )?;
    Ok((0..m)
        .map(|i| {
            (0..dim)
                .map(|j| second.x[i * dim + j].clamp(-1.0, 1.0))
                .collect()
        })
        .collect())
}

/// Alternates the SVM and LP steps from `Z = 1`. A half step that would raise
/// the objective is discarded and ends the alternation.
pub fn polish_labels(c: &[Vec<f64>], y: &[f64], theta: f64, cost: f64) -> Result<Polished> {
    let m = c.len();
    if m < 2 || y.len() != m {
        return Err(MimlError::InvalidArgument(
            "polishing needs at least two bags with one target each".into(),
        ));
    }
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0))
        || y.iter().any(|&v| v != 1.0 && v != -1.0)
    {
        return Err(MimlError::InvalidArgument(
            "polishing targets must be +1/-1 with both signs present".into(),
        ));
    }
    let dim = c[0].len();
    if dim == 0
        || c.iter()
            .any(|ci| ci.len() != dim || ci.iter().any(|&v| v != 1.0 && v != -1.0))
    {
        return Err(MimlError::InvalidArgument(
            "label vectors must share a positive length and hold +1/-1".into(),
        ));
    }
    if !(cost > 0.0 && cost.is_finite()) {
        return Err(MimlError::InvalidArgument(format!(
            "C must be positive, got {cost}"
        )));
    }
    if !(2.0 * theta - 1.0 <= (m * dim) as f64) {
        return Err(MimlError::InvalidArgument(format!(
            "theta = {theta} demands more than the {} available flip weights",
            m * dim
        )));
    }

    let mut z = vec![vec![1.0; dim]; m];
    let (mut w, mut b) = svm_step(c, &z, y, cost)?;
    let mut current = polish_objective(c, &z, y, &w, b, cost);
    let mut objectives = vec![current];
    let mut alternations = 0;
    while alternations < POLISH_MAX_ALTERNATIONS {
        alternations += 1;
        let start = current;
        let next_z = lp_step(c, y, &w, b, cost, theta)?;
        let after_lp = polish_objective(c, &next_z, y, &w, b, cost);
        if after_lp > current {
            break;
        }
        let moved = z
            .iter()
            .flatten()
            .zip(next_z.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        z = next_z;
        current = after_lp;
        objectives.push(current);

        let (next_w, next_b) = svm_step(c, &z, y, cost)?;
        let after_svm = polish_objective(c, &z, y, &next_w, next_b, cost);
        if after_svm <= current {
            w = next_w;
            b = next_b;
            current = after_svm;
        }
        objectives.push(current);
        if moved < POLISH_Z_TOLERANCE || start - current < POLISH_OBJECTIVE_TOLERANCE {
            break;
        }
    }
    let labels = c
        .iter()
        .zip(&z)
        .map(|(ci, zi)| {
            ci.iter()
                .zip(zi)
                .map(|(a, b)| if a * b > 0.0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect();
    Ok(Polished {
        labels,
        z,
        w,
        b,
        objectives,
        alternations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinning_theta_keeps_every_label() {
        let c = vec![
            vec![1.0, -1.0],
            vec![-1.0, 1.0],
            vec![1.0, 1.0],
            vec![-1.0, -1.0],
        ];
        let y = [1.0, -1.0, 1.0, -1.0];
        let theta = (4.0 * 2.0 + 1.0) / 2.0;
        let p = polish_labels(&c, &y, theta, 1.0).unwrap();
        assert_eq!(p.labels, c);
    }

    #[test]
    fn single_sign_targets_are_rejected() {
        let c = vec![vec![1.0], vec![-1.0]];
        assert!(polish_labels(&c, &[1.0, 1.0], 0.0, 1.0).is_err());
    }
}
