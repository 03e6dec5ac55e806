//! Constraint generation for the convex subproblem solved at each CCCP step.
//!
//! Each label keeps its own working set. The restricted problem over a working
//! set is solved in the dual, where every constraint contributes one bounded
//! multiplier and the primal coefficients are recovered in closed form.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{objective_value, Rho, TrainingState};
use crate::error::{MimlError, Result};
use crate::kernels::GramMatrix;
use crate::solvers::{optimal_bias, solve_partitioned, PartitionedQp};

/// Passes of block re-solves used to settle the label coupling.
const MAX_COUPLING_SWEEPS: usize = 200;
/// First-order optimality gap at which a restricted dual counts as solved.
const DUAL_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constraint {
    /// `y_i (f(X_i) + b) >= 1 - xi_i`
    Hinge(usize),
    /// Instance `j` of bag `i` scores at most `delta_i` above the bag.
    Above { bag: usize, instance: usize },
    /// The bag scores at most `delta_i` above the rho-weighted instances.
    Below(usize),
}

/// Weights of the convex subproblem, already resolved for the data size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    /// Per-example hinge weight, `gamma / (mT)`.
    pub c_xi: f64,
    /// Per-bag weight of the bag/instance discrepancy, `gamma * lambda / (mT)`.
    pub c_delta: f64,
    /// `1/T + 2 mu / T^2`, the curvature of one label's own block.
    pub c_own: f64,
    /// `2 mu / T^2`, the coupling between label blocks.
    pub c_cross: f64,
    /// `mu / T^2`.
    pub mu_term: f64,
    pub n_labels: usize,
}

impl Penalties {
    pub fn new(lambda: f64, mu: f64, gamma: f64, m: usize, n_labels: usize) -> Self {
        let t = n_labels as f64;
        let c_xi = gamma / (m as f64 * t);
        Self {
            c_xi,
            c_delta: c_xi * lambda,
            c_own: 1.0 / t + 2.0 * mu / (t * t),
            c_cross: 2.0 * mu / (t * t),
            mu_term: mu / (t * t),
            n_labels,
        }
    }
}

/// The convex subproblem for a fixed rho.
#[derive(Debug, Clone, Copy)]
pub struct Subproblem<'a> {
    pub gram: &'a GramMatrix,
    /// `signs[t][i]` in {-1, +1}.
    pub signs: &'a [Vec<f64>],
    /// Hinge weights `tau[t][i]`; all ones without imbalance rescaling.
    pub tau: &'a [Vec<f64>],
    pub rho: &'a Rho,
    pub penalties: Penalties,
    pub eps: f64,
    pub p: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubSolution {
    pub state: TrainingState,
    pub working_sets: Vec<Vec<Constraint>>,
    /// Largest violation over every constraint of every label at return.
    pub max_violation: f64,
    pub objective: f64,
    pub qp_solves: usize,
}

struct Block {
    set: Vec<Constraint>,
    member: Vec<bool>,
    coefs: Vec<Vec<(usize, f64)>>,
    cross: Vec<Vec<f64>>,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    g: Vec<f64>,
    b: f64,
    xi: Vec<f64>,
    delta: Vec<f64>,
}

struct Solver<'a> {
    sub: Subproblem<'a>,
    k: &'a DMatrix<f64>,
    m: usize,
    n_obj: usize,
    /// `(bag, instance)` for every instance object, in Gram order.
    owner: Vec<(usize, usize)>,
    blocks: Vec<Block>,
    solves: usize,
}

impl<'a> Solver<'a> {
    fn new(sub: Subproblem<'a>) -> Self {
        let gram = sub.gram;
        let m = gram.n_bags();
        let n_obj = gram.n_objects();
        let owner: Vec<(usize, usize)> = gram
            .bag_sizes()
            .iter()
            .enumerate()
            .flat_map(|(i, &n)| (0..n).map(move |j| (i, j)))
            .collect();
        let n_cons = n_obj + m;
        let blocks = (0..sub.penalties.n_labels)
            .map(|_| Block {
                set: Vec::new(),
                member: vec![false; n_cons],
                coefs: Vec::new(),
                cross: Vec::new(),
                beta: Vec::new(),
                alpha: vec![0.0; n_obj],
                g: vec![0.0; n_obj],
                b: 0.0,
                xi: vec![0.0; m],
                delta: vec![0.0; m],
            })
            .collect();
        Self {
            sub,
            k: &gram.matrix,
            m,
            n_obj,
            owner,
            blocks,
            solves: 0,
        }
    }

    fn n_constraints(&self) -> usize {
        self.n_obj + self.m
    }

    fn constraint(&self, idx: usize) -> Constraint {
        if idx < self.m {
            Constraint::Hinge(idx)
        } else if idx < self.n_obj {
            let (bag, instance) = self.owner[idx - self.m];
            Constraint::Above { bag, instance }
        } else {
            Constraint::Below(idx - self.n_obj)
        }
    }

    fn index(&self, c: Constraint) -> usize {
        match c {
            Constraint::Hinge(i) => i,
            Constraint::Above { bag, instance } => self.sub.gram.instance_index(bag, instance),
            Constraint::Below(i) => self.n_obj + i,
        }
    }

    /// Left-hand side `u'(K alpha_t)` of the constraint, before slack and bias.
    fn lhs(&self, t: usize, c: Constraint) -> f64 {
        let g = &self.blocks[t].g;
        match c {
            Constraint::Hinge(i) => -self.sub.signs[t][i] * g[i],
            Constraint::Above { bag, instance } => {
                g[self.sub.gram.instance_index(bag, instance)] - g[bag]
            }
            Constraint::Below(i) => {
                let mixed: f64 = self.sub.rho[t][i]
                    .iter()
                    .enumerate()
                    .map(|(j, r)| r * g[self.sub.gram.instance_index(i, j)])
                    .sum();
                g[i] - mixed
            }
        }
    }

    fn violation(&self, t: usize, c: Constraint) -> f64 {
        let bl = &self.blocks[t];
        match c {
            Constraint::Hinge(i) => {
                (1.0 + self.lhs(t, c) - self.sub.signs[t][i] * bl.b - bl.xi[i]).max(0.0)
            }
            Constraint::Above { bag: i, .. } | Constraint::Below(i) => {
                (self.lhs(t, c) - bl.delta[i]).max(0.0)
            }
        }
    }

    fn coefficients(&self, t: usize, c: Constraint) -> Vec<(usize, f64)> {
        match c {
            Constraint::Hinge(i) => vec![(i, -self.sub.signs[t][i])],
            Constraint::Above { bag, instance } => vec![
                (self.sub.gram.instance_index(bag, instance), 1.0),
                (bag, -1.0),
            ],
            Constraint::Below(i) => {
                let mut v = vec![(i, 1.0)];
                for (j, &r) in self.sub.rho[t][i].iter().enumerate() {
                    if r != 0.0 {
                        v.push((self.sub.gram.instance_index(i, j), -r));
                    }
                }
                v
            }
        }
    }

    fn quad(&self, a: &[(usize, f64)], b: &[(usize, f64)]) -> f64 {
        a.iter()
            .map(|&(p, u)| b.iter().map(|&(q, v)| u * v * self.k[(p, q)]).sum::<f64>())
            .sum()
    }

    fn add(&mut self, t: usize, c: Constraint) {
        let idx = self.index(c);
        let coefs = self.coefficients(t, c);
        let mut row: Vec<f64> = self.blocks[t]
            .coefs
            .iter()
            .map(|d| self.quad(&coefs, d))
            .collect();
        row.push(self.quad(&coefs, &coefs));
        let bl = &mut self.blocks[t];
        for (r, v) in bl.cross.iter_mut().zip(&row) {
            r.push(*v);
        }
        bl.cross.push(row);
        bl.coefs.push(coefs);
        bl.set.push(c);
        bl.member[idx] = true;
        bl.beta.push(0.0);
    }

    /// Re-solves label `t` over its working set with the other labels held fixed.
    fn solve(&mut self, t: usize) -> Result<()> {
        self.solves += 1;
        let pen = self.sub.penalties;
        let n_obj = self.n_obj;
        let mut other_alpha = vec![0.0; n_obj];
        let mut other_g = vec![0.0; n_obj];
        if pen.c_cross > 0.0 {
            for (s, bl) in self.blocks.iter().enumerate() {
                if s != t {
                    for o in 0..n_obj {
                        other_alpha[o] += bl.alpha[o];
                        other_g[o] += bl.g[o];
                    }
                }
            }
        }

        let bl = &self.blocks[t];
        let s = bl.set.len();
        let beta = if s == 0 {
            Vec::new()
        } else {
            // Multipliers of the working set, then one zero-cost slack per bag
            // whose discrepancy multipliers share the cap c_delta.
            let mut lin = Vec::with_capacity(s);
            let mut upper = Vec::with_capacity(s);
            let mut signs = Vec::with_capacity(s);
            let mut groups = Vec::with_capacity(s);
            let mut bag_group: Vec<Option<usize>> = vec![None; self.m];
            let mut used: Vec<f64> = Vec::new();
            for (v, (&c, coefs)) in bl.set.iter().zip(&bl.coefs).enumerate() {
                let coupling: f64 = coefs.iter().map(|&(o, u)| u * other_g[o]).sum::<f64>()
                    * pen.c_cross
                    / pen.c_own;
                match c {
                    Constraint::Hinge(i) => {
                        lin.push(coupling - 1.0);
                        upper.push(pen.c_xi * self.sub.tau[t][i]);
                        signs.push(self.sub.signs[t][i]);
                        groups.push(0);
                    }
                    Constraint::Above { bag: i, .. } | Constraint::Below(i) => {
                        lin.push(coupling);
                        upper.push(pen.c_delta);
                        signs.push(1.0);
                        let g = *bag_group[i].get_or_insert_with(|| {
                            used.push(0.0);
                            used.len()
                        });
                        used[g - 1] += bl.beta[v];
                        groups.push(g);
                    }
                }
            }
            let mut x0 = bl.beta.clone();
            for (g, total) in used.iter().enumerate() {
                lin.push(0.0);
                upper.push(pen.c_delta);
                signs.push(1.0);
                groups.push(g + 1);
                x0.push((pen.c_delta - total).clamp(0.0, pen.c_delta));
            }
            let cross = &bl.cross;
            let scale = 1.0 / pen.c_own;
            let problem = PartitionedQp {
                q: |a: usize, b: usize| {
                    if a < s && b < s {
                        cross[a][b] * scale
                    } else {
                        0.0
                    }
                },
                c: &lin,
                signs: &signs,
                groups: &groups,
                upper: &upper,
            };

            let mut x = solve_partitioned(&problem, &x0, DUAL_TOLERANCE)
                .map_err(|e| {
                    MimlError::Numerical(format!("restricted subproblem for label {t}: {e}"))
                })?
                .x;
            x.truncate(s);
            x
        };

        // alpha_t = -(c_cross * sum_{s != t} alpha_s + U beta) / c_own
        let mut alpha: Vec<f64> = other_alpha.iter().map(|a| -pen.c_cross * a).collect();
        let mut g: Vec<f64> = other_g.iter().map(|a| -pen.c_cross * a).collect();
        for (coefs, &b) in bl.coefs.iter().zip(&beta) {
            if b == 0.0 {
                continue;
            }
            for &(o, u) in coefs {
                alpha[o] -= b * u;
                let col = self.k.column(o);
                for (gv, kv) in g.iter_mut().zip(col.iter()) {
                    *gv -= b * u * kv;
                }
            }
        }
        for v in alpha.iter_mut().chain(g.iter_mut()) {
            *v /= pen.c_own;
        }

        let bl = &mut self.blocks[t];
        bl.beta = beta;
        bl.alpha = alpha;
        bl.g = g;
        self.recover_slacks(t);
        Ok(())
    }

    /// Bias, xi and delta minimizing the restricted objective for the current alpha.
    fn recover_slacks(&mut self, t: usize) {
        let pen = self.sub.penalties;
        let signs = &self.sub.signs[t];
        let tau = &self.sub.tau[t];
        let bl = &self.blocks[t];
        let (mut f, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
        for c in &bl.set {
            if let Constraint::Hinge(i) = *c {
                f.push(bl.g[i]);
                y.push(signs[i]);
                w.push(pen.c_xi * tau[i]);
            }
        }
        let b = if f.is_empty() {
            0.0
        } else {
            optimal_bias(&f, &y, &w)
        };
        let mut xi = vec![0.0; self.m];
        let mut delta = vec![0.0f64; self.m];
        for &c in &bl.set {
            match c {
                Constraint::Hinge(i) => xi[i] = (1.0 - signs[i] * (bl.g[i] + b)).max(0.0),
                Constraint::Above { bag: i, .. } | Constraint::Below(i) => {
                    delta[i] = delta[i].max(self.lhs(t, c));
                }
            }
        }
        let bl = &mut self.blocks[t];
        bl.b = b;
        bl.xi = xi;
        bl.delta = delta;
    }

    /// Most violated constraint of label `t` among `candidates`; ties keep the first.
    fn most_violated(
        &self,
        t: usize,
        candidates: impl Iterator<Item = usize>,
    ) -> Option<(Constraint, f64)> {
        let mut best: Option<(Constraint, f64)> = None;
        for idx in candidates {
            let c = self.constraint(idx);
            let v = self.violation(t, c);
            if best.is_none_or(|b| v > b.1) {
                best = Some((c, v));
            }
        }
        best
    }

    fn state(&self) -> TrainingState {
        TrainingState {
            alpha: self.blocks.iter().map(|b| b.alpha.clone()).collect(),
            bias: self.blocks.iter().map(|b| b.b).collect(),
            xi: self.blocks.iter().map(|b| b.xi.clone()).collect(),
            delta: self.blocks.iter().map(|b| b.delta.clone()).collect(),
        }
    }

    /// Objective from the maintained `K alpha` products, without a Gram pass.
    fn fast_objective(&self) -> f64 {
        let pen = self.sub.penalties;
        let t = pen.n_labels as f64;
        let mut own = 0.0;
        let mut sum_a = vec![0.0; self.n_obj];
        let mut sum_g = vec![0.0; self.n_obj];
        let mut slack = 0.0;
        for (l, bl) in self.blocks.iter().enumerate() {
            own += bl.alpha.iter().zip(&bl.g).map(|(a, g)| a * g).sum::<f64>();
            for o in 0..self.n_obj {
                sum_a[o] += bl.alpha[o];
                sum_g[o] += bl.g[o];
            }
            slack += pen.c_xi
                * bl.xi
                    .iter()
                    .zip(&self.sub.tau[l])
                    .map(|(x, w)| x * w)
                    .sum::<f64>();
            slack += pen.c_delta * bl.delta.iter().sum::<f64>();
        }
        let coupled: f64 = sum_a.iter().zip(&sum_g).map(|(a, g)| a * g).sum();
        own / (2.0 * t) + pen.mu_term * coupled + slack
    }
}

/// Grows per-label working sets from `p` sampled candidates at a time until no
/// sampled constraint is violated by more than `eps`, then sweeps every
/// constraint and resumes if the sweep finds a violation above `eps`.
pub fn cutting_plane_solve(sub: &Subproblem<'_>, seed: u64) -> Result<SubSolution> {
    let n_labels = sub.penalties.n_labels;
    if sub.signs.len() != n_labels || sub.tau.len() != n_labels || sub.rho.len() != n_labels {
        return Err(MimlError::InvalidArgument(
            "subproblem label blocks disagree".into(),
        ));
    }
    if !(sub.eps > 0.0) || sub.p == 0 {
        return Err(MimlError::InvalidArgument(
            "eps must be positive and p at least 1".into(),
        ));
    }
    let mut solver = Solver::new(*sub);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_cons = solver.n_constraints();
    let coupled = sub.penalties.c_cross > 0.0;
    let max_rounds = 4 * n_cons * n_labels + 16;
    let mut rounds = 0;

    loop {
        loop {
            rounds += 1;
            if rounds > max_rounds {
                return Err(MimlError::Numerical(
                    "cutting-plane pass limit reached".into(),
                ));
            }
            let mut changed = false;
            for t in 0..n_labels {
                let candidates: Vec<usize> = (0..n_cons)
                    .filter(|&c| !solver.blocks[t].member[c])
                    .collect();
                if candidates.is_empty() {
                    continue;
                }
                let picks = sample(&mut rng, candidates.len(), sub.p.min(candidates.len()));
                let best = solver.most_violated(t, picks.iter().map(|k| candidates[k]));
                if let Some((c, loss)) = best {
                    if loss > sub.eps {
                        solver.add(t, c);
                        solver.solve(t)?;
                        changed = true;
                    }
                }
            }
            if !changed {
                break;
            }
        }

        if coupled {
            let mut before = solver.fast_objective();
            for _ in 0..MAX_COUPLING_SWEEPS {
                for t in 0..n_labels {
                    solver.solve(t)?;
                }
                let after = solver.fast_objective();
                if before - after <= 1e-12 * (1.0 + after.abs()) {
                    break;
                }
                before = after;
            }
        }

        // Exhaustive sweep over every constraint of every label.
        let mut added = false;
        for t in 0..n_labels {
            let outside = (0..n_cons).filter(|&c| !solver.blocks[t].member[c]);
            if let Some((c, loss)) = solver.most_violated(t, outside) {
                if loss > sub.eps {
                    solver.add(t, c);
                    solver.solve(t)?;
                    added = true;
                }
            }
        }
        if !added {
            break;
        }
    }

    let max_violation = (0..n_labels)
        .filter_map(|t| solver.most_violated(t, 0..n_cons).map(|b| b.1))
        .fold(0.0, f64::max);
    let state = solver.state();
    let objective = objective_value(&state, sub.gram, sub.tau, &sub.penalties);
    Ok(SubSolution {
        working_sets: solver.blocks.iter().map(|b| b.set.clone()).collect(),
        state,
        max_violation,
        objective,
        qp_solves: solver.solves,
    })
}
