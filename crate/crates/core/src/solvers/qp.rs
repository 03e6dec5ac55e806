//! Primal active-set method for small dense convex QPs.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::lp::{solve_lp, LpProblem};
use crate::error::{MimlError, Result};

pub const QP_FEASIBILITY_TOLERANCE: f64 = 1e-9;
pub const QP_MULTIPLIER_TOLERANCE: f64 = 1e-10;
pub const QP_SYMMETRY_TOLERANCE: f64 = 1e-10;

/// `min 1/2 x'Qx + c'x` s.t. `A x <= b`, `E x = e`, `lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub q: DMatrix<f64>,
    pub c: Vec<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: Vec<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl QpProblem {
    pub fn new(q: DMatrix<f64>, c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            q,
            c,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: Vec::new(),
            a_eq: DMatrix::zeros(0, n),
            b_eq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_bounds(mut self, lower: Vec<f64>, upper: Vec<f64>) -> Self {
        self.lower = lower;
        self.upper = upper;
        self
    }

    pub fn n_vars(&self) -> usize {
        self.c.len()
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        let xv = DVector::from_column_slice(x);
        0.5 * xv.dot(&(&self.q * &xv)) + self.c.iter().zip(x).map(|(c, x)| c * x).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = &self.q * DVector::from_column_slice(x);
        g.iter().zip(&self.c).map(|(g, c)| g + c).collect()
    }

    /// Largest violation of any row, equality or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let dot = |m: &DMatrix<f64>, i: usize| -> f64 {
            m.row(i).iter().zip(x).map(|(a, x)| a * x).sum()
        };
        let mut worst: f64 = 0.0;
        for (i, b) in self.b_ineq.iter().enumerate() {
            worst = worst.max(dot(&self.a_ineq, i) - b);
        }
        for (i, e) in self.b_eq.iter().enumerate() {
            worst = worst.max((dot(&self.a_eq, i) - e).abs());
        }
        for ((x, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - x).max(x - hi);
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        let mismatch = |found: usize| MimlError::DimensionMismatch { expected: n, found };
        if self.q.nrows() != n || self.q.ncols() != n {
            return Err(mismatch(self.q.nrows()));
        }
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(mismatch(self.a_ineq.ncols()));
        }
        if self.a_eq.ncols() != n || self.a_eq.nrows() != self.b_eq.len() {
            return Err(mismatch(self.a_eq.ncols()));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(mismatch(self.lower.len().min(self.upper.len())));
        }
        let data = self
            .q
            .iter()
            .chain(&self.c)
            .chain(self.a_ineq.iter())
            .chain(&self.b_ineq)
            .chain(self.a_eq.iter())
            .chain(&self.b_eq);
        if data.into_iter().any(|v| !v.is_finite()) {
            return Err(MimlError::InvalidArgument("QP data must be finite".into()));
        }
        let scale = 1.0 + self.q.amax();
        for i in 0..n {
            for j in 0..i {
                if (self.q[(i, j)] - self.q[(j, i)]).abs() > QP_SYMMETRY_TOLERANCE * scale {
                    return Err(MimlError::InvalidArgument(format!(
                        "Q is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        for (j, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if lo.is_nan()
                || hi.is_nan()
                || lo > hi
                || *lo == f64::INFINITY
                || *hi == f64::NEG_INFINITY
            {
                return Err(MimlError::InvalidArgument(format!(
                    "bad bounds [{lo}, {hi}] on variable {j}"
                )));
            }
        }
        Ok(())
    }

    fn row_dot(&self, i: usize, x: &[f64]) -> f64 {
        self.a_ineq.row(i).iter().zip(x).map(|(a, x)| a * x).sum()
    }

    fn feasible_start(&self, hint: Option<&[f64]>) -> Result<Vec<f64>> {
        let clamp = |x: &[f64]| -> Vec<f64> {
            x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .map(|(v, (lo, hi))| v.clamp(*lo, *hi))
                .collect()
        };
        let origin = vec![0.0; self.n_vars()];
        for cand in [hint.map(clamp), Some(clamp(&origin))]
            .into_iter()
            .flatten()
        {
            if self.max_violation(&cand) <= QP_FEASIBILITY_TOLERANCE {
                return Ok(cand);
            }
        }
        let n = self.n_vars();
        let rows = self.b_ineq.len() + 2 * self.b_eq.len();
        let mut a = DMatrix::zeros(rows, n);
        let mut b = Vec::with_capacity(rows);
        for i in 0..self.b_ineq.len() {
            a.row_mut(i).copy_from(&self.a_ineq.row(i));
            b.push(self.b_ineq[i]);
        }
        for i in 0..self.b_eq.len() {
            let r = self.b_ineq.len() + 2 * i;
            a.row_mut(r).copy_from(&self.a_eq.row(i));
            a.row_mut(r + 1).copy_from(&(-self.a_eq.row(i)));
            b.push(self.b_eq[i]);
            b.push(-self.b_eq[i]);
        }
        let lp = LpProblem::new(vec![0.0; n])
            .with_inequalities(a, b)
            .with_bounds(self.lower.clone(), self.upper.clone());
        let x = solve_lp(&lp)
            .map_err(|e| match e {
                MimlError::Infeasible(_) => {
                    MimlError::Infeasible("QP constraints cannot be satisfied".into())
                }
                other => other,
            })?
            .x;
        let x = clamp(&x);
        let scale = 1.0
            + self
                .b_ineq
                .iter()
                .chain(&self.b_eq)
                .fold(0.0f64, |a, b| a.max(b.abs()));
        if self.max_violation(&x) > 1e-7 * scale {
            return Err(MimlError::Infeasible(
                "QP constraints cannot be satisfied".into(),
            ));
        }
        Ok(x)
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Fixed {
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Copy)]
enum Row {
    Eq(usize),
    Ineq(usize),
}

enum Blocking {
    Row(usize),
    Bound(usize, Fixed),
}

enum KktStep {
    Newton(DVector<f64>),
    Descent(DVector<f64>),
}

fn solve_kkt(k: DMatrix<f64>, r: DVector<f64>, nf: usize) -> KktStep {
    if r.is_empty() {
        return KktStep::Newton(r);
    }
    let r_norm = r.amax();
    // Column-pivoted QR exposes rank deficiency, where LU would return a
    // solution dominated by rounding in the null directions.
    let qr = k.clone().col_piv_qr();
    let diag = qr.r().diagonal().abs();
    let (d_max, d_min) = (diag.max(), diag.min());
    if d_min > 1e-11 * d_max {
        if let Some(z) = qr.solve(&r) {
            let res = (&k * &z - &r).amax();
            if z.iter().all(|v| v.is_finite()) && res <= 1e-9 * (1.0 + r_norm) {
                return KktStep::Newton(z);
            }
        }
    }
    let eig = SymmetricEigen::new(k);
    let lam_max = eig.eigenvalues.amax();
    let cutoff = 1e-11 * lam_max.max(1e-300) * eig.eigenvalues.len() as f64;
    let mut z = DVector::zeros(r.len());
    let mut range_part = DVector::zeros(r.len());
    for (i, &l) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(i);
        let coef = v.dot(&r);
        if l.abs() > cutoff {
            z += v * (coef / l);
            range_part += v * coef;
        }
    }
    let null_part = &r - range_part;
    let p = null_part.rows(0, nf).into_owned();
    let g_dot_p = -r.rows(0, nf).dot(&p);
    if null_part.amax() > 1e-9 * (1.0 + r_norm) && g_dot_p < -1e-14 * (1.0 + r_norm) * p.amax() {
        KktStep::Descent(p)
    } else {
        KktStep::Newton(z)
    }
}

/// Solves the QP from the origin (or an LP-found feasible point).
pub fn solve_qp(p: &QpProblem) -> Result<QpSolution> {
    solve_qp_warm(p, None)
}

/// Solves the QP starting from `x0` when it is feasible; bounds active at the
/// start point seed the working set.
pub fn solve_qp_warm(p: &QpProblem, x0: Option<&[f64]>) -> Result<QpSolution> {
    p.validate()?;
    let n = p.n_vars();
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(MimlError::DimensionMismatch {
                expected: n,
                found: x0.len(),
            });
        }
    }
    let mut x = p.feasible_start(x0)?;
    let mut fixed: Vec<Fixed> = (0..n)
        .map(|k| {
            if x[k] == p.lower[k] {
                Fixed::Lower
            } else if x[k] == p.upper[k] {
                Fixed::Upper
            } else {
                Fixed::Free
            }
        })
        .collect();
    let mut working: Vec<usize> = Vec::new();
    let n_ineq = p.b_ineq.len();
    let limit = 50 * (n + n_ineq) + 1000;
    let mut iterations = 0;

    loop {
        if iterations >= limit {
            return Err(MimlError::Numerical(
                "active-set iteration limit reached".into(),
            ));
        }
        iterations += 1;
        let g = p.gradient(&x);
        let g_scale = 1.0 + g.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let free: Vec<usize> = (0..n).filter(|&k| fixed[k] == Fixed::Free).collect();
        let nf = free.len();

        // Working rows restricted to free columns. Fixing variables can make
        // working rows linearly dependent there; those stay in the working set
        // but are left out of the KKT system, since they stay tight along any
        // step that keeps the remaining rows tight.
        let mut rows: Vec<(Row, Vec<f64>)> = Vec::new();
        let mut basis: Vec<Vec<f64>> = Vec::new();
        let candidates = (0..p.b_eq.len())
            .map(|i| {
                (
                    Row::Eq(i),
                    free.iter().map(|&k| p.a_eq[(i, k)]).collect::<Vec<f64>>(),
                )
            })
            .chain(working.iter().map(|&i| {
                (
                    Row::Ineq(i),
                    free.iter().map(|&k| p.a_ineq[(i, k)]).collect::<Vec<f64>>(),
                )
            }))
            .collect::<Vec<_>>();
        for (src, r) in candidates {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut resid = r.clone();
            for b in &basis {
                let d: f64 = resid.iter().zip(b).map(|(x, y)| x * y).sum();
                for (x, y) in resid.iter_mut().zip(b) {
                    *x -= d * y;
                }
            }
            let rn = resid.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= 1e-14 || rn <= 1e-12 * norm {
                continue;
            }
            basis.push(resid.into_iter().map(|v| v / rn).collect());
            rows.push((src, r));
        }
        let nw = rows.len();
        let mut kkt = DMatrix::zeros(nf + nw, nf + nw);
        for (a, &i) in free.iter().enumerate() {
            for (b, &j) in free.iter().enumerate() {
                kkt[(a, b)] = p.q[(i, j)];
            }
        }
        for (w, (_, r)) in rows.iter().enumerate() {
            for (a, v) in r.iter().enumerate() {
                kkt[(nf + w, a)] = *v;
                kkt[(a, nf + w)] = *v;
            }
        }
        let mut rhs = DVector::zeros(nf + nw);
        for (a, &k) in free.iter().enumerate() {
            rhs[a] = -g[k];
        }

        let (step, unbounded_ray) = match solve_kkt(kkt, rhs, nf) {
            KktStep::Newton(z) => {
                let step = z.rows(0, nf).into_owned();
                let x_scale = 1.0 + x.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                let mut curvature = 0.0;
                let mut slope = 0.0;
                for (a, &i) in free.iter().enumerate() {
                    slope += g[i] * step[a];
                    for (b, &j) in free.iter().enumerate() {
                        curvature += step[a] * p.q[(i, j)] * step[b];
                    }
                }
                let decrease = -(slope + 0.5 * curvature);
                let negligible = step.amax() <= 1e-13 * x_scale
                    || decrease <= 1e-15 * (1.0 + p.objective(&x).abs());
                if negligible {
                    // Stationary on the working set: inspect multipliers.
                    let mut a_lam = vec![0.0; n];
                    let mut worst: Option<(f64, Option<usize>, Option<usize>)> = None;
                    for (w, (src, _)) in rows.iter().enumerate() {
                        let lam = z[nf + w];
                        match *src {
                            Row::Eq(i) => {
                                for k in 0..n {
                                    a_lam[k] += lam * p.a_eq[(i, k)];
                                }
                            }
                            Row::Ineq(i) => {
                                for k in 0..n {
                                    a_lam[k] += lam * p.a_ineq[(i, k)];
                                }
                                if lam < -QP_MULTIPLIER_TOLERANCE * g_scale
                                    && worst.is_none_or(|w| lam < w.0)
                                {
                                    worst = Some((lam, Some(i), None));
                                }
                            }
                        }
                    }
                    for k in 0..n {
                        let nu = match fixed[k] {
                            Fixed::Free => continue,
                            Fixed::Lower => g[k] + a_lam[k],
                            Fixed::Upper => -(g[k] + a_lam[k]),
                        };
                        if nu < -QP_MULTIPLIER_TOLERANCE * g_scale && worst.is_none_or(|w| nu < w.0)
                        {
                            worst = Some((nu, None, Some(k)));
                        }
                    }
                    match worst {
                        None => break,
                        Some((_, Some(i), _)) => working.retain(|&r| r != i),
                        Some((_, None, Some(k))) => fixed[k] = Fixed::Free,
                        Some(_) => unreachable!(),
                    }
                    continue;
                }
                (step, false)
            }
            KktStep::Descent(d) => (d, true),
        };

        let mut alpha = if unbounded_ray { f64::INFINITY } else { 1.0 };
        let step_norm = step.norm();
        let mut blocking = None;
        for i in 0..n_ineq {
            if working.contains(&i) {
                continue;
            }
            let (mut ap, mut a_norm) = (0.0, 0.0);
            for (a, &k) in free.iter().enumerate() {
                ap += p.a_ineq[(i, k)] * step[a];
                a_norm += p.a_ineq[(i, k)] * p.a_ineq[(i, k)];
            }
            // Rows nearly orthogonal to the step cannot block; this keeps the
            // working rows independent on the free columns.
            if ap > 1e-9 * a_norm.sqrt() * step_norm + 1e-14 {
                let t = (p.b_ineq[i] - p.row_dot(i, &x)).max(0.0) / ap;
                if t < alpha {
                    alpha = t;
                    blocking = Some(Blocking::Row(i));
                }
            }
        }
        for (a, &k) in free.iter().enumerate() {
            let d = step[a];
            if d < 0.0 && p.lower[k].is_finite() {
                let t = (x[k] - p.lower[k]).max(0.0) / -d;
                if t < alpha {
                    alpha = t;
                    blocking = Some(Blocking::Bound(k, Fixed::Lower));
                }
            } else if d > 0.0 && p.upper[k].is_finite() {
                let t = (p.upper[k] - x[k]).max(0.0) / d;
                if t < alpha {
                    alpha = t;
                    blocking = Some(Blocking::Bound(k, Fixed::Upper));
                }
            }
        }
        if !alpha.is_finite() {
            return Err(MimlError::Unbounded(
                "QP objective is unbounded below".into(),
            ));
        }
        for (a, &k) in free.iter().enumerate() {
            x[k] += alpha * step[a];
        }
        match blocking {
            Some(Blocking::Row(i)) => working.push(i),
            Some(Blocking::Bound(k, side)) => {
                fixed[k] = side;
                x[k] = if side == Fixed::Lower {
                    p.lower[k]
                } else {
                    p.upper[k]
                };
            }
            None => {}
        }
    }

    let objective = p.objective(&x);
    Ok(QpSolution {
        x,
        objective,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lower_bound_is_active() {
        let p = QpProblem::new(DMatrix::identity(1, 1), vec![0.0])
            .with_bounds(vec![1.0], vec![f64::INFINITY]);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unconstrained_stationary_point() {
        let p = QpProblem::new(DMatrix::identity(2, 2), vec![-1.0, -2.0]);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && (s.x[1] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn row_constraint_and_equality() {
        // min 1/2|x|^2 - x1 - x2 s.t. x1 + x2 <= 1, x1 - x2 = 0.2
        let p = QpProblem::new(DMatrix::identity(2, 2), vec![-1.0, -1.0])
            .with_inequalities(DMatrix::from_row_slice(1, 2, &[1.0, 1.0]), vec![1.0])
            .with_equalities(DMatrix::from_row_slice(1, 2, &[1.0, -1.0]), vec![0.2]);
        let s = solve_qp(&p).unwrap();
        assert!((s.x[0] - 0.6).abs() < 1e-10 && (s.x[1] - 0.4).abs() < 1e-10);
    }

    #[test]
    fn linear_objective_on_a_box() {
        let p = QpProblem::new(DMatrix::zeros(2, 2), vec![1.0, -1.0])
            .with_bounds(vec![-1.0, -1.0], vec![2.0, 3.0]);
        let s = solve_qp(&p).unwrap();
        assert_eq!(s.x, vec![-1.0, 3.0]);
    }

    #[test]
    fn unbounded_and_infeasible() {
        let p = QpProblem::new(DMatrix::zeros(1, 1), vec![-1.0]);
        assert!(matches!(solve_qp(&p), Err(MimlError::Unbounded(_))));
        let p = QpProblem::new(DMatrix::identity(1, 1), vec![0.0])
            .with_inequalities(DMatrix::from_row_slice(1, 1, &[1.0]), vec![-1.0])
            .with_bounds(vec![0.0], vec![1.0]);
        assert!(matches!(solve_qp(&p), Err(MimlError::Infeasible(_))));
    }
}
