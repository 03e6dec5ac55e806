//! Pairwise descent for box-constrained convex QPs whose equality constraints
//! partition the variables.

use crate::error::{MimlError, Result};
use nalgebra::{DMatrix, DVector};

/// Pair curvature below this is treated as flat and the step runs to a bound.
const FLAT: f64 = 1e-12;

/// `min 1/2 x'Qx + c'x` s.t. `0 <= x <= upper` and, for every group `g`,
/// `sum_{v in g} signs_v x_v` held at its value in the start point.
///
/// `q(a, b)` returns entry `(a, b)` of a symmetric positive semidefinite `Q`.
pub struct PartitionedQp<'a, F: Fn(usize, usize) -> f64> {
    pub q: F,
    pub c: &'a [f64],
    /// `+1` or `-1` per variable.
    pub signs: &'a [f64],
    /// Group id per variable, `0..n_groups`.
    pub groups: &'a [usize],
    pub upper: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionedSolution {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Largest first-order violation among pairs within a group at return.
    pub gap: f64,
}

/// Pairwise descent from the feasible point `x0`, with second-order pair
/// selection.
///
/// Every step moves two variables of one group so that the group's signed sum
/// is unchanged, and stops once no pair within any group improves the
/// objective at first order by more than `tol`.
pub fn solve_partitioned<F: Fn(usize, usize) -> f64>(
    p: &PartitionedQp<'_, F>,
    x0: &[f64],
    tol: f64,
) -> Result<PartitionedSolution> {
    let n = p.c.len();
    if [p.signs.len(), p.groups.len(), p.upper.len(), x0.len()]
        .iter()
        .any(|&l| l != n)
    {
        return Err(MimlError::InvalidArgument(
            "inconsistent partitioned QP sizes".into(),
        ));
    }
    if p.signs.iter().any(|&s| s != 1.0 && s != -1.0) {
        return Err(MimlError::InvalidArgument(
            "group signs must be +1 or -1".into(),
        ));
    }
    for (v, (&x, &u)) in x0.iter().zip(p.upper).enumerate() {
        if !(u >= 0.0 && u.is_finite()) || !(x >= 0.0 && x <= u) {
            return Err(MimlError::InvalidArgument(format!(
                "variable {v}: start {x} outside [0, {u}]"
            )));
        }
    }
    let n_groups = p.groups.iter().map(|&g| g + 1).max().unwrap_or(0);
    let mut x = x0.to_vec();
    let mut grad: Vec<f64> = (0..n)
        .map(|a| {
            p.c[a]
                + (0..n)
                    .filter(|&b| x[b] != 0.0)
                    .map(|b| (p.q)(a, b) * x[b])
                    .sum::<f64>()
        })
        .collect();
    let s = p.signs;
    let max_iter = 100_000 + 2_000 * n;
    let mut iterations = 0;
    let polish_every = 20;
    let mut next_polish = 0;
    let mut up: Vec<(f64, usize)> = vec![(f64::NEG_INFINITY, usize::MAX); n_groups];
    let mut low: Vec<(f64, usize)> = vec![(f64::INFINITY, usize::MAX); n_groups];

    loop {
        up.fill((f64::NEG_INFINITY, usize::MAX));
        low.fill((f64::INFINITY, usize::MAX));
        for v in 0..n {
            let g = p.groups[v];
            let score = -s[v] * grad[v];
            let can_up = if s[v] > 0.0 {
                x[v] < p.upper[v]
            } else {
                x[v] > 0.0
            };
            let can_low = if s[v] > 0.0 {
                x[v] > 0.0
            } else {
                x[v] < p.upper[v]
            };
            if can_up && score > up[g].0 {
                up[g] = (score, v);
            }
            if can_low && score < low[g].0 {
                low[g] = (score, v);
            }
        }
        // Stop on the first-order gap; pick the pair by second-order gain
        // among the violating partners of each group's top candidate.
        let mut gap: f64 = 0.0;
        for g in 0..n_groups {
            if up[g].1 != usize::MAX && low[g].1 != usize::MAX && up[g].1 != low[g].1 {
                gap = gap.max(up[g].0 - low[g].0);
            }
        }
        if gap <= tol {
            return Ok(PartitionedSolution { x, iterations, gap });
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for v in 0..n {
            let g = p.groups[v];
            let (hi, i) = up[g];
            if i == usize::MAX || i == v || hi - low[g].0 <= tol {
                continue;
            }
            let can_low = if s[v] > 0.0 {
                x[v] > 0.0
            } else {
                x[v] < p.upper[v]
            };
            let score = -s[v] * grad[v];
            if !can_low || score >= hi {
                continue;
            }
            let b = hi - score;
            let a = (p.q)(i, i) + (p.q)(v, v) - 2.0 * s[i] * s[v] * (p.q)(i, v);
            let gain = b * b / a.max(FLAT);
            if best.is_none_or(|bst| gain > bst.0) {
                best = Some((gain, i, v));
            }
        }
        let Some((_, i, j)) = best else {
            return Ok(PartitionedSolution { x, iterations, gap });
        };
        if iterations >= next_polish {
            next_polish = iterations + polish_every;
            if newton_polish(p, &mut x, &mut grad) {
                continue;
            }
        }
        if iterations >= max_iter {
            return Err(MimlError::Numerical(format!(
                "pairwise QP descent stalled at gap {gap:e}"
            )));
        }
        iterations += 1;

        // x_i += s_i t, x_j -= s_j t keeps the group sum fixed.
        let slope = s[i] * grad[i] - s[j] * grad[j];
        let curvature = (p.q)(i, i) + (p.q)(j, j) - 2.0 * s[i] * s[j] * (p.q)(i, j);
        let room_i = if s[i] > 0.0 { p.upper[i] - x[i] } else { x[i] };
        let room_j = if s[j] > 0.0 { x[j] } else { p.upper[j] - x[j] };
        let limit = room_i.min(room_j);
        let t = if curvature > FLAT {
            (-slope / curvature).min(limit)
        } else {
            limit
        };
        if !(t > 0.0) {
            return Err(MimlError::Numerical("pairwise QP step collapsed".into()));
        }
        let (di, dj) = (s[i] * t, -s[j] * t);
        x[i] = if t == room_i {
            if s[i] > 0.0 {
                p.upper[i]
            } else {
                0.0
            }
        } else {
            x[i] + di
        };
        x[j] = if t == room_j {
            if s[j] > 0.0 {
                0.0
            } else {
                p.upper[j]
            }
        } else {
            x[j] + dj
        };
        for (v, gv) in grad.iter_mut().enumerate() {
            *gv += (p.q)(v, i) * di + (p.q)(v, j) * dj;
        }
    }
}

/// Equality-constrained Newton step over the variables strictly inside their
/// box, cut back at the first bound it reaches. Returns whether the
/// objective went down.
fn newton_polish<F: Fn(usize, usize) -> f64>(
    p: &PartitionedQp<'_, F>,
    x: &mut [f64],
    grad: &mut [f64],
) -> bool {
    let free: Vec<usize> = (0..x.len())
        .filter(|&v| x[v] > 0.0 && x[v] < p.upper[v])
        .collect();
    let nf = free.len();
    if nf < 2 {
        return false;
    }
    let mut group_row = std::collections::HashMap::new();
    for &v in &free {
        let next = group_row.len();
        group_row.entry(p.groups[v]).or_insert(next);
    }
    let ne = group_row.len();
    let mut kkt = DMatrix::zeros(nf + ne, nf + ne);
    let mut rhs = DVector::zeros(nf + ne);
    for (a, &va) in free.iter().enumerate() {
        for (b, &vb) in free.iter().enumerate().skip(a) {
            let q = (p.q)(va, vb);
            kkt[(a, b)] = q;
            kkt[(b, a)] = q;
        }
        let r = nf + group_row[&p.groups[va]];
        kkt[(a, r)] = p.signs[va];
        kkt[(r, a)] = p.signs[va];
        rhs[a] = -grad[va];
    }
    // A small ridge keeps the system solvable when Q is singular on the free
    // set; the step is only accepted if it lowers the objective.
    let ridge = 1e-10 * (0..nf).map(|a| kkt[(a, a)]).fold(0.0, f64::max).max(1e-300);
    for a in 0..nf {
        kkt[(a, a)] += ridge;
    }
    let Some(sol) = kkt.lu().solve(&rhs) else {
        return false;
    };
    if sol.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let d: Vec<f64> = sol.rows(0, nf).iter().copied().collect();
    let slope: f64 = free.iter().zip(&d).map(|(&v, dv)| grad[v] * dv).sum();
    if !(slope < 0.0) {
        return false;
    }
    let mut t: f64 = 1.0;
    let mut hit = None;
    for (k, (&v, &dv)) in free.iter().zip(&d).enumerate() {
        let room = if dv > 0.0 {
            (p.upper[v] - x[v]) / dv
        } else if dv < 0.0 {
            -x[v] / dv
        } else {
            f64::INFINITY
        };
        if room < t {
            t = room;
            hit = Some(k);
        }
    }
    let mut curv = 0.0;
    for (a, &va) in free.iter().enumerate() {
        for (b, &vb) in free.iter().enumerate() {
            curv += d[a] * (p.q)(va, vb) * d[b];
        }
    }
    if !(t * slope + 0.5 * t * t * curv < 0.0) {
        return false;
    }
    for (k, (&v, &dv)) in free.iter().zip(&d).enumerate() {
        x[v] = if hit == Some(k) {
            if dv > 0.0 {
                p.upper[v]
            } else {
                0.0
            }
        } else {
            (x[v] + t * dv).clamp(0.0, p.upper[v])
        };
    }
    for (a, ga) in grad.iter_mut().enumerate() {
        *ga += t * free
            .iter()
            .zip(&d)
            .map(|(&v, dv)| (p.q)(a, v) * dv)
            .sum::<f64>();
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn single_pair_reaches_interior_minimum() {
        // min 1/2 (x0^2 + x1^2) - x0 - 3 x1 with x0 + x1 = 2, box [0, 5]
        let q = DMatrix::<f64>::identity(2, 2);
        let p = PartitionedQp {
            q: |a, b| q[(a, b)],
            c: &[-1.0, -3.0],
            signs: &[1.0, 1.0],
            groups: &[0, 0],
            upper: &[5.0, 5.0],
        };
        let sol = solve_partitioned(&p, &[1.0, 1.0], 1e-12).unwrap();
        assert!(
            (sol.x[0] - 0.0).abs() < 1e-12 && (sol.x[1] - 2.0).abs() < 1e-12,
            "{:?}",
            sol.x
        );
    }

    #[test]
    fn groups_move_independently() {
        let q = DMatrix::<f64>::identity(4, 4);
        let p = PartitionedQp {
            q: |a, b| q[(a, b)],
            c: &[0.0, -2.0, 0.0, 0.0],
            signs: &[1.0, 1.0, 1.0, -1.0],
            groups: &[0, 0, 1, 1],
            upper: &[3.0, 3.0, 3.0, 3.0],
        };
        let sol = solve_partitioned(&p, &[1.0, 1.0, 0.0, 0.0], 1e-12).unwrap();
        assert!((sol.x[0] + sol.x[1] - 2.0).abs() < 1e-12);
        assert!((sol.x[1] - 2.0).abs() < 1e-12);
        assert_eq!(&sol.x[2..], &[0.0, 0.0]);
    }
}
