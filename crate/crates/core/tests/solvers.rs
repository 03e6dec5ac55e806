use miml_core::kernels::{point_gram, KernelSpec};
use miml_core::solvers::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize, ridge: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
    &b * b.transpose() + DMatrix::identity(n, n) * ridge
}

#[test]
fn smo_dual_matches_generic_qp() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..5 {
        let points: Vec<Vec<f64>> = (0..20)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let labels: Vec<f64> = points
            .iter()
            .map(|p| {
                if p[0] + 0.5 * p[1] + rng.random_range(-0.7..0.7) > 0.0 {
                    1.0
                } else {
                    -1.0
                }
            })
            .collect();
        let caps: Vec<f64> = (0..20).map(|_| rng.random_range(0.1..2.0)).collect();
        let gram = point_gram(&KernelSpec::rbf(0.5).unwrap(), &points);
        let smo = smo_solve(&gram, &labels, &caps, 1e-9).unwrap();

        let q = DMatrix::from_fn(20, 20, |i, j| labels[i] * labels[j] * gram[(i, j)]);
        let qp = QpProblem::new(q, vec![-1.0; 20])
            .with_equalities(DMatrix::from_row_slice(1, 20, &labels), vec![0.0])
            .with_bounds(vec![0.0; 20], caps.clone());
        let sol = solve_qp(&qp).unwrap();
        let smo_obj = dual_objective(&gram, &labels, &smo.alpha);
        assert!(
            (smo_obj + sol.objective).abs() < 1e-6,
            "{smo_obj} vs {}",
            -sol.objective
        );
    }
}

#[test]
fn smo_complementary_slackness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let points: Vec<Vec<f64>> = (0..30).map(|_| vec![rng.random_range(-2.0..2.0)]).collect();
    let labels: Vec<f64> = points
        .iter()
        .map(|p| {
            if p[0] + rng.random_range(-0.5..0.5) > 0.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let caps = vec![1.0; 30];
    let gram = point_gram(&KernelSpec::Linear, &points);
    let sol = smo_solve(&gram, &labels, &caps, SMO_TOLERANCE).unwrap();
    for i in 0..30 {
        let f = sol.decision_from_kernel(&labels, gram.row(i).iter().copied());
        let margin = labels[i] * f;
        if sol.alpha[i] <= 1e-12 {
            assert!(
                margin >= 1.0 - 1e-5,
                "free-at-zero example {i} has margin {margin}"
            );
        } else if sol.alpha[i] >= caps[i] - 1e-12 {
            assert!(margin <= 1.0 + 1e-5);
        } else {
            assert!((margin - 1.0).abs() <= 1e-5);
        }
    }
}

#[test]
fn duplicated_zero_weight_example_leaves_decision_unchanged() {
    let points = vec![
        vec![0.0, 1.0],
        vec![1.0, -1.0],
        vec![-1.0, 0.5],
        vec![2.0, 0.0],
    ];
    let labels = [1.0, -1.0, 1.0, -1.0];
    let spec = KernelSpec::rbf(1.0).unwrap();
    let base = train_weighted_svm(
        &WeightedBinaryProblem {
            points: &points,
            labels: &labels,
            weights: &[1.0, 1.0, 0.5, 2.0],
            c: 1.0,
        },
        &spec,
    )
    .unwrap();
    let mut more = points.clone();
    more.push(vec![0.3, 0.3]);
    more.push(vec![0.3, 0.3]);
    let dup = train_weighted_svm(
        &WeightedBinaryProblem {
            points: &more,
            labels: &[1.0, -1.0, 1.0, -1.0, -1.0, -1.0],
            weights: &[1.0, 1.0, 0.5, 2.0, 0.0, 0.0],
            c: 1.0,
        },
        &spec,
    )
    .unwrap();
    for x in [[0.0, 0.0], [1.0, 1.0], [-2.0, 0.3]] {
        assert!((base.decision(&x) - dup.decision(&x)).abs() < 1e-8);
    }
}

fn projected_gradient(q: &DMatrix<f64>, c: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = c.len();
    let l = q.symmetric_eigenvalues().amax().max(1e-12);
    let cv = DVector::from_column_slice(c);
    let project = |v: DVector<f64>| DVector::from_fn(n, |i, _| v[i].clamp(lo[i], hi[i]));
    let mut x = project(DVector::zeros(n));
    let mut y = x.clone();
    let mut t = 1.0f64;
    for _ in 0..200_000 {
        let g = q * &y + &cv;
        let next = project(&y - g / l);
        if (&y - &next).dot(&(&next - &x)) > 0.0 {
            // gradient-based restart of the momentum
            t = 1.0;
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &next + (&next - &x) * ((t - 1.0) / t_next);
        x = next;
        t = t_next;
    }
    x.iter().copied().collect()
}

#[test]
fn box_qp_matches_projected_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..20 {
        let rank = if case % 2 == 0 { 6 } else { 3 };
        let q = random_psd(&mut rng, 6, rank, 0.0);
        let c: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lo: Vec<f64> = (0..6).map(|_| rng.random_range(-1.5..0.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|l| l + rng.random_range(0.2..2.0)).collect();
        let p = QpProblem::new(q.clone(), c.clone()).with_bounds(lo.clone(), hi.clone());
        let sol = solve_qp(&p).unwrap();
        let oracle = projected_gradient(&q, &c, &lo, &hi);
        assert!(p.max_violation(&sol.x) <= 1e-12);
        assert!(sol.objective <= p.objective(&oracle) + 1e-8, "case {case}");
        assert!(
            (sol.objective - p.objective(&oracle)).abs() < 1e-8,
            "case {case}: {} vs {}",
            sol.objective,
            p.objective(&oracle)
        );
    }
}

/// Minimum over every choice of active bounds and active rows of the
/// equality-constrained minimizer, keeping only feasible candidates.
fn enumerate_active_sets(p: &QpProblem) -> f64 {
    let n = p.n_vars();
    let m = p.b_ineq.len();
    let mut best = f64::INFINITY;
    for code in 0..3usize.pow(n as u32) {
        let mut state = vec![0; n];
        let mut c = code;
        for s in state.iter_mut() {
            *s = c % 3;
            c /= 3;
        }
        for rows in 0..(1usize << m) {
            let active: Vec<usize> = (0..m).filter(|i| rows >> i & 1 == 1).collect();
            let fixed: Vec<usize> = (0..n).filter(|&k| state[k] != 0).collect();
            let k_eq = active.len() + fixed.len() + p.b_eq.len();
            let dim = n + k_eq;
            let mut kkt = DMatrix::zeros(dim, dim);
            let mut rhs = DVector::zeros(dim);
            kkt.view_mut((0, 0), (n, n)).copy_from(&p.q);
            for k in 0..n {
                rhs[k] = -p.c[k];
            }
            let mut r = n;
            let mut add =
                |row: Vec<f64>, b: f64, kkt: &mut DMatrix<f64>, rhs: &mut DVector<f64>| {
                    for k in 0..n {
                        kkt[(r, k)] = row[k];
                        kkt[(k, r)] = row[k];
                    }
                    rhs[r] = b;
                    r += 1;
                };
            for &i in &active {
                add(
                    p.a_ineq.row(i).iter().copied().collect(),
                    p.b_ineq[i],
                    &mut kkt,
                    &mut rhs,
                );
            }
            for i in 0..p.b_eq.len() {
                add(
                    p.a_eq.row(i).iter().copied().collect(),
                    p.b_eq[i],
                    &mut kkt,
                    &mut rhs,
                );
            }
            for &k in &fixed {
                let mut row = vec![0.0; n];
                row[k] = 1.0;
                let b = if state[k] == 1 {
                    p.lower[k]
                } else {
                    p.upper[k]
                };
                add(row, b, &mut kkt, &mut rhs);
            }
            if let Some(z) = kkt.lu().solve(&rhs) {
                let x: Vec<f64> = z.rows(0, n).iter().copied().collect();
                if x.iter().all(|v| v.is_finite()) && p.max_violation(&x) <= 1e-9 {
                    best = best.min(p.objective(&x));
                }
            }
        }
    }
    best
}

#[test]
fn general_qp_matches_active_set_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for case in 0..12 {
        let n = 4;
        let q = random_psd(&mut rng, n, n, 0.05);
        let c: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let a = DMatrix::from_fn(3, n, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..3).map(|_| rng.random_range(0.1..1.0)).collect();
        let mut p = QpProblem::new(q, c)
            .with_inequalities(a, b)
            .with_bounds(vec![-1.0; n], vec![1.0; n]);
        if case % 3 == 0 {
            p = p.with_equalities(
                DMatrix::from_row_slice(1, n, &[1.0, -1.0, 0.5, 0.0]),
                vec![0.1],
            );
        }
        let sol = solve_qp(&p).unwrap();
        let oracle = enumerate_active_sets(&p);
        assert!(p.max_violation(&sol.x) <= 1e-8);
        assert!(
            (sol.objective - oracle).abs() < 1e-8,
            "case {case}: {} vs {oracle}",
            sol.objective
        );
    }
}

#[test]
fn warm_start_reaches_the_same_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_psd(&mut rng, 8, 8, 0.1);
    let c: Vec<f64> = (0..8).map(|_| rng.random_range(-2.0..2.0)).collect();
    let p = QpProblem::new(q, c).with_bounds(vec![0.0; 8], vec![1.0; 8]);
    let cold = solve_qp(&p).unwrap();
    let warm = solve_qp_warm(&p, Some(&cold.x)).unwrap();
    assert!((cold.objective - warm.objective).abs() < 1e-12);
    assert!(warm.iterations <= cold.iterations);
}

fn lp_vertex_enumeration(p: &LpProblem) -> f64 {
    let n = p.n_vars();
    let mut rows: Vec<(Vec<f64>, f64)> = (0..p.b_ineq.len())
        .map(|i| (p.a_ineq.row(i).iter().copied().collect(), p.b_ineq[i]))
        .collect();
    for k in 0..n {
        let mut e = vec![0.0; n];
        e[k] = 1.0;
        rows.push((e.clone(), p.upper[k]));
        rows.push((e, p.lower[k]));
    }
    let total = rows.len();
    let mut best = f64::INFINITY;
    let mut pick: Vec<usize> = (0..n).collect();
    loop {
        let a = DMatrix::from_fn(n, n, |i, j| rows[pick[i]].0[j]);
        let b = DVector::from_fn(n, |i, _| rows[pick[i]].1);
        if let Some(x) = a.lu().solve(&b) {
            let x: Vec<f64> = x.iter().copied().collect();
            if p.max_violation(&x) <= 1e-9 {
                best = best.min(p.objective(&x));
            }
        }
        // next combination
        let mut i = n;
        while i > 0 && pick[i - 1] == total - n + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return best;
        }
        pick[i - 1] += 1;
        for j in i..n {
            pick[j] = pick[j - 1] + 1;
        }
    }
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..30 {
        let c: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let a = DMatrix::from_fn(4, 5, |_, _| rng.random_range(-1.0..1.0));
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-0.5..1.0)).collect();
        let p = LpProblem::new(c)
            .with_inequalities(a, b)
            .with_bounds(vec![-2.0; 5], vec![2.0; 5]);
        let oracle = lp_vertex_enumeration(&p);
        match solve_lp(&p) {
            Ok(sol) => {
                assert!(p.max_violation(&sol.x) <= 1e-9, "case {case}");
                assert!(
                    (sol.objective - oracle).abs() < 1e-8,
                    "case {case}: {} vs {oracle}",
                    sol.objective
                );
            }
            Err(e) => assert!(oracle.is_infinite(), "case {case}: {e}"),
        }
    }
}

#[test]
fn lstsq_matches_ridge_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let phi = DMatrix::from_fn(10, 4, |_, _| rng.random_range(-1.0..1.0));
        let t = DMatrix::from_fn(10, 3, |_, _| rng.random_range(-1.0..1.0));
        let w = lstsq_svd(&phi, &t);
        let ridge = (phi.transpose() * &phi + DMatrix::identity(4, 4) * 1e-12)
            .lu()
            .solve(&(phi.transpose() * &t))
            .unwrap();
        assert!((&w - ridge).amax() < 1e-8);
        let normal = phi.transpose() * &phi * &w - phi.transpose() * &t;
        assert!(normal.norm() <= 1e-8 * (1.0 + (phi.transpose() * &t).norm()));
        let residual = (&phi * &w - &t).norm();
        for _ in 0..1000 {
            let dw = DMatrix::from_fn(4, 3, |_, _| rng.random_range(-1e-3..1e-3));
            assert!(residual <= (&phi * (&w + dw) - &t).norm() + 1e-12);
        }
    }
}

#[test]
fn lstsq_rank_deficient_is_minimum_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let base = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
    // columns 2 and 3 are combinations of the first two
    let phi = DMatrix::from_fn(8, 4, |i, j| match j {
        0 | 1 => base[(i, j)],
        2 => base[(i, 0)] + base[(i, 1)],
        _ => 2.0 * base[(i, 0)],
    });
    let t = DMatrix::from_fn(8, 2, |_, _| rng.random_range(-1.0..1.0));
    let w = lstsq_svd(&phi, &t);
    // phi = base * R, so the minimum-norm solution lies in the row space of R
    let r = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
    let reduced = &base * &r * r.transpose();
    let v = (reduced.transpose() * &reduced)
        .lu()
        .solve(&(reduced.transpose() * &t))
        .unwrap();
    let oracle = r.transpose() * v;
    assert!((&w - &oracle).amax() < 1e-10);
    // adding a null-space direction never shrinks the norm
    let null = DVector::from_vec(vec![1.0, 1.0, -1.0, 0.0]);
    assert!((&phi * &null).amax() < 1e-12);
    for s in [-0.1, 0.1] {
        let mut moved = w.clone();
        for col in 0..2 {
            moved.column_mut(col).axpy(s, &null, 1.0);
        }
        assert!(w.norm() <= moved.norm());
    }
}

#[test]
fn golden_section_matches_grid_on_boosting_objectives() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let n = rng.random_range(2..8);
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let e: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        let g = |c: f64| {
            w.iter()
                .zip(&e)
                .map(|(w, e)| w * ((2.0 * e - 1.0) * c).exp())
                .sum::<f64>()
        };
        let x = minimize_1d_convex(g, 0.0, 10.0, 1e-6).unwrap();
        let mut grid_best = (0.0, g(0.0));
        for k in 0..=1_000_000 {
            let c = k as f64 * 1e-5;
            let v = g(c);
            if v < grid_best.1 {
                grid_best = (c, v);
            }
        }
        assert!(g(x) <= grid_best.1 + 1e-9);
        assert!((x - grid_best.0).abs() <= 1e-3 || (g(x) - grid_best.1).abs() < 1e-10);
    }
}

/// Soft-margin primal `min 1/2 a'Ka + C sum xi` s.t. `y_i (K_i a + b) >= 1 - xi_i`,
/// written either over `a` (singular when points repeat) or over `w = L'a`.
fn hinge_primal(k: &DMatrix<f64>, y: &[f64], c: f64, reduced: bool) -> f64 {
    let n = y.len();
    let (basis, r) = if reduced {
        let eig = nalgebra::SymmetricEigen::new(k.clone());
        let top = eig.eigenvalues.amax();
        let keep: Vec<usize> = (0..n)
            .filter(|&i| eig.eigenvalues[i] > 1e-12 * top)
            .collect();
        let l = DMatrix::from_fn(n, keep.len(), |o, j| {
            eig.eigenvectors[(o, keep[j])] * eig.eigenvalues[keep[j]].sqrt()
        });
        (l, keep.len())
    } else {
        (k.clone(), n)
    };
    let nv = r + 1 + n;
    let mut q = DMatrix::zeros(nv, nv);
    for a in 0..r {
        for b in 0..r {
            q[(a, b)] = if reduced {
                f64::from(a == b)
            } else {
                k[(a, b)]
            };
        }
    }
    let mut cost = vec![0.0; nv];
    for i in 0..n {
        cost[r + 1 + i] = c;
    }
    let mut a_ineq = DMatrix::zeros(n, nv);
    for i in 0..n {
        for p in 0..r {
            a_ineq[(i, p)] = -y[i] * basis[(i, p)];
        }
        a_ineq[(i, r)] = -y[i];
        a_ineq[(i, r + 1 + i)] = -1.0;
    }
    let mut lower = vec![f64::NEG_INFINITY; nv];
    for v in lower.iter_mut().skip(r + 1) {
        *v = 0.0;
    }
    let p = QpProblem::new(q, cost)
        .with_inequalities(a_ineq, vec![-1.0; n])
        .with_bounds(lower, vec![f64::INFINITY; nv]);
    solve_qp(&p).unwrap().objective
}

#[test]
fn singular_hessian_matches_reduced_parametrization() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..20 {
        let distinct: Vec<Vec<f64>> = (0..6)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let points: Vec<Vec<f64>> = (0..12).map(|i| distinct[i % 6].clone()).collect();
        let y: Vec<f64> = (0..12)
            .map(|_| if rng.random_bool(0.5) { 1.0 } else { -1.0 })
            .collect();
        let k = point_gram(&KernelSpec::rbf(0.8).unwrap(), &points);
        let full = hinge_primal(&k, &y, 2.0, false);
        let reduced = hinge_primal(&k, &y, 2.0, true);
        assert!(
            (full - reduced).abs() < 1e-7 * (1.0 + reduced.abs()),
            "case {case}: {full} vs {reduced}"
        );
    }
}
