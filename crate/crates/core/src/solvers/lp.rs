//! Dense two-phase simplex for small linear programs.

use nalgebra::{DMatrix, DVector};

use crate::error::{MimlError, Result};

pub const LP_PIVOT_TOLERANCE: f64 = 1e-9;
pub const LP_FEASIBILITY_TOLERANCE: f64 = 1e-9;
const DEGENERATE_STREAK: usize = 50;

/// `min c'x` s.t. `A x <= b`, `lower <= x <= upper` (bounds may be infinite).
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub c: Vec<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
}

impl LpProblem {
    /// Unconstrained problem over free variables.
    pub fn new(c: Vec<f64>) -> Self {
        let n = c.len();
        Self {
            c,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: Vec::new(),
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: Vec<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
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
        self.c.iter().zip(x).map(|(c, x)| c * x).sum()
    }

    /// Largest violation of any row or bound at `x`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (i, b) in self.b_ineq.iter().enumerate() {
            let lhs: f64 = self.a_ineq.row(i).iter().zip(x).map(|(a, x)| a * x).sum();
            worst = worst.max(lhs - b);
        }
        for ((x, lo), hi) in x.iter().zip(&self.lower).zip(&self.upper) {
            worst = worst.max(lo - x).max(x - hi);
        }
        worst
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n_vars();
        if self.a_ineq.ncols() != n || self.a_ineq.nrows() != self.b_ineq.len() {
            return Err(MimlError::DimensionMismatch {
                expected: n,
                found: self.a_ineq.ncols(),
            });
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(MimlError::DimensionMismatch {
                expected: n,
                found: self.lower.len().min(self.upper.len()),
            });
        }
        if self
            .c
            .iter()
            .chain(self.a_ineq.iter())
            .chain(&self.b_ineq)
            .any(|v| !v.is_finite())
        {
            return Err(MimlError::InvalidArgument("LP data must be finite".into()));
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
}

/// How an original variable maps onto non-negative standard-form columns.
enum VarMap {
    Shift { col: usize, lo: f64 },
    Flip { col: usize, hi: f64 },
    Split { pos: usize, neg: usize },
}

struct Tableau {
    rows: usize,
    cols: usize,
    // (rows + 1) x (cols + 1), row-major; last row holds reduced costs, last column the rhs
    data: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * (self.cols + 1) + c]
    }

    fn rhs(&self, r: usize) -> f64 {
        self.at(r, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.data[r * w + c];
        for v in &mut self.data[r * w..(r + 1) * w] {
            *v /= p;
        }
        let pivot_row: Vec<f64> = self.data[r * w..(r + 1) * w].to_vec();
        for i in 0..=self.rows {
            if i == r {
                continue;
            }
            let f = self.data[i * w + c];
            if f != 0.0 {
                for (v, pr) in self.data[i * w..(i + 1) * w].iter_mut().zip(&pivot_row) {
                    *v -= f * pr;
                }
                self.data[i * w + c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    fn set_costs(&mut self, cost: &[f64]) {
        let w = self.cols + 1;
        let obj = self.rows * w;
        self.data[obj..obj + w].fill(0.0);
        self.data[obj..obj + self.cols].copy_from_slice(cost);
        for r in 0..self.rows {
            let cb = cost[self.basis[r]];
            if cb != 0.0 {
                for k in 0..w {
                    self.data[obj + k] -= cb * self.data[r * w + k];
                }
            }
        }
    }

    fn run(&mut self, allowed: &[bool], iterations: &mut usize, limit: usize) -> Result<()> {
        let mut streak = 0;
        let mut bland = false;
        loop {
            if *iterations >= limit {
                return Err(MimlError::Numerical(
                    "simplex iteration limit reached".into(),
                ));
            }
            let obj = self.rows;
            let mut enter = None;
            let mut best = -LP_PIVOT_TOLERANCE;
            for c in 0..self.cols {
                if !allowed[c] {
                    continue;
                }
                let rc = self.at(obj, c);
                if rc < best {
                    enter = Some(c);
                    if bland {
                        break;
                    }
                    best = rc;
                }
            }
            let Some(c) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..self.rows {
                let a = self.at(r, c);
                if a > LP_PIVOT_TOLERANCE {
                    let ratio = self.rhs(r).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some((lr, lv)) => {
                            ratio < lv || (ratio == lv && self.basis[r] < self.basis[lr])
                        }
                    };
                    if better {
                        leave = Some((r, ratio));
                    }
                }
            }
            let Some((r, ratio)) = leave else {
                return Err(MimlError::Unbounded(
                    "LP objective is unbounded below".into(),
                ));
            };
            if ratio <= 1e-12 {
                streak += 1;
                if streak > DEGENERATE_STREAK {
                    bland = true;
                }
            } else {
                streak = 0;
            }
            self.pivot(r, c);
            *iterations += 1;
        }
    }
}

/// Solves the LP to an optimal basic solution.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.validate()?;
    let n = p.n_vars();

    let mut maps = Vec::with_capacity(n);
    let mut n_std = 0;
    let mut bound_rows: Vec<(usize, f64)> = Vec::new();
    for j in 0..n {
        let (lo, hi) = (p.lower[j], p.upper[j]);
        if lo.is_finite() {
            maps.push(VarMap::Shift { col: n_std, lo });
            if hi.is_finite() {
                bound_rows.push((n_std, hi - lo));
            }
            n_std += 1;
        } else if hi.is_finite() {
            maps.push(VarMap::Flip { col: n_std, hi });
            n_std += 1;
        } else {
            maps.push(VarMap::Split {
                pos: n_std,
                neg: n_std + 1,
            });
            n_std += 2;
        }
    }

    let m_rows = p.b_ineq.len() + bound_rows.len();
    let mut a_std = DMatrix::zeros(m_rows, n_std);
    let mut rhs = vec![0.0; m_rows];
    for i in 0..p.b_ineq.len() {
        let mut b = p.b_ineq[i];
        for (j, map) in maps.iter().enumerate() {
            let a = p.a_ineq[(i, j)];
            if a == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, lo } => {
                    a_std[(i, col)] += a;
                    b -= a * lo;
                }
                VarMap::Flip { col, hi } => {
                    a_std[(i, col)] -= a;
                    b -= a * hi;
                }
                VarMap::Split { pos, neg } => {
                    a_std[(i, pos)] += a;
                    a_std[(i, neg)] -= a;
                }
            }
        }
        rhs[i] = b;
    }
    for (k, &(col, width)) in bound_rows.iter().enumerate() {
        let i = p.b_ineq.len() + k;
        a_std[(i, col)] = 1.0;
        rhs[i] = width;
    }
    let mut cost = vec![0.0; n_std];
    let mut constant = 0.0;
    for (j, map) in maps.iter().enumerate() {
        match *map {
            VarMap::Shift { col, lo } => {
                cost[col] += p.c[j];
                constant += p.c[j] * lo;
            }
            VarMap::Flip { col, hi } => {
                cost[col] -= p.c[j];
                constant += p.c[j] * hi;
            }
            VarMap::Split { pos, neg } => {
                cost[pos] += p.c[j];
                cost[neg] -= p.c[j];
            }
        }
    }

    // Columns: structural, one slack per row, then artificials for rows with negative rhs.
    let flipped: Vec<bool> = rhs.iter().map(|&b| b < 0.0).collect();
    let n_art = flipped.iter().filter(|&&f| f).count();
    let cols = n_std + m_rows + n_art;
    let mut full = DMatrix::zeros(m_rows, cols);
    let mut basis = vec![0; m_rows];
    let mut art = n_std + m_rows;
    for i in 0..m_rows {
        let sign = if flipped[i] { -1.0 } else { 1.0 };
        for k in 0..n_std {
            full[(i, k)] = sign * a_std[(i, k)];
        }
        full[(i, n_std + i)] = sign;
        rhs[i] *= sign;
        if flipped[i] {
            full[(i, art)] = 1.0;
            basis[i] = art;
            art += 1;
        } else {
            basis[i] = n_std + i;
        }
    }
    let mut tab = Tableau {
        rows: m_rows,
        cols,
        data: vec![0.0; (m_rows + 1) * (cols + 1)],
        basis,
    };
    for i in 0..m_rows {
        for k in 0..cols {
            tab.data[i * (cols + 1) + k] = full[(i, k)];
        }
        tab.data[i * (cols + 1) + cols] = rhs[i];
    }

    let limit = 50 * (cols + m_rows) + 1000;
    let mut iterations = 0;
    let is_art = |c: usize| c >= n_std + m_rows;
    if n_art > 0 {
        let phase1: Vec<f64> = (0..cols)
            .map(|c| if is_art(c) { 1.0 } else { 0.0 })
            .collect();
        tab.set_costs(&phase1);
        tab.run(&vec![true; cols], &mut iterations, limit)?;
        let infeasibility = -tab.at(m_rows, cols);
        let scale = 1.0 + rhs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if infeasibility > LP_FEASIBILITY_TOLERANCE * scale {
            return Err(MimlError::Infeasible(format!(
                "LP constraints cannot be satisfied (residual {infeasibility:.3e})"
            )));
        }
        for r in 0..m_rows {
            if is_art(tab.basis[r]) {
                if let Some(c) =
                    (0..n_std + m_rows).find(|&c| tab.at(r, c).abs() > LP_PIVOT_TOLERANCE)
                {
                    tab.pivot(r, c);
                }
            }
        }
    }
    let mut phase2 = vec![0.0; cols];
    phase2[..n_std].copy_from_slice(&cost);
    tab.set_costs(&phase2);
    let allowed: Vec<bool> = (0..cols).map(|c| !is_art(c)).collect();
    tab.run(&allowed, &mut iterations, limit)?;

    let mut s = vec![0.0; cols];
    for r in 0..m_rows {
        s[tab.basis[r]] = tab.rhs(r).max(0.0);
    }
    if m_rows > 0 {
        // Re-solve the basic system against the original data to shed pivoting drift.
        let b_mat = DMatrix::from_fn(m_rows, m_rows, |i, k| full[(i, tab.basis[k])]);
        if let Some(sb) = b_mat.lu().solve(&DVector::from_vec(rhs.clone())) {
            if sb.iter().all(|v| v.is_finite() && *v >= -1e-7) {
                for (r, v) in sb.iter().enumerate() {
                    s[tab.basis[r]] = v.max(0.0);
                }
            }
        }
    }

    let x: Vec<f64> = maps
        .iter()
        .map(|map| match *map {
            VarMap::Shift { col, lo } => lo + s[col],
            VarMap::Flip { col, hi } => hi - s[col],
            VarMap::Split { pos, neg } => s[pos] - s[neg],
        })
        .collect();
    let objective = p.objective(&x);
    debug_assert!(
        (objective - (constant + cost.iter().zip(&s).map(|(c, v)| c * v).sum::<f64>())).abs()
            < 1e-6 * (1.0 + objective.abs())
    );
    Ok(LpSolution {
        x,
        objective,
        iterations,
    })
}
