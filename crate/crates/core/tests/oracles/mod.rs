//! Reference implementations shared by the integration and acceptance tests.
#![allow(dead_code)]

use miml_core::dmimlsvm::{
    compute_imbalance_rates, imbalance_weights, label_signs, uniform_rho, update_rho, DMimlConfig,
    Penalties, Rho, TrainingState,
};
use miml_core::harness::{generate, SynthSpec};
use miml_core::kernels::{build_gram, GramMatrix, KernelSpec};
use miml_core::metrics::{hamming_loss, LabelScores};
use miml_core::mimlboost::{round_objective, BoostModel};
use miml_core::solvers::{solve_qp, QpProblem};
use miml_core::{Bag, LabelSet, MimlDataset};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rank by counting: one plus the labels strictly ahead, where equal scores
/// put the lower index ahead.
pub fn rank_by_count(scores: &[f64], y: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&k| scores[k] > scores[y] || (scores[k] == scores[y] && k < y))
        .count()
}

pub struct Case {
    pub t: usize,
    pub preds: Vec<LabelScores>,
    pub truth: Vec<LabelSet>,
}

pub fn random_case(rng: &mut ChaCha8Rng) -> Case {
    let t = rng.random_range(2..=6);
    let p = rng.random_range(1..=10);
    // Coarse scores on half the cases so ties are common.
    let coarse = rng.random_bool(0.5);
    let mut preds = Vec::new();
    let mut truth = Vec::new();
    for _ in 0..p {
        let scores: Vec<f64> = (0..t)
            .map(|_| {
                if coarse {
                    rng.random_range(-2i32..=2) as f64 * 0.5
                } else {
                    rng.random_range(-3.0..3.0)
                }
            })
            .collect();
        let predicted = LabelSet::new((0..t).filter(|_| rng.random_bool(0.4)));
        preds.push(LabelScores::new(scores, predicted));
        let mut y: Vec<usize> = Vec::new();
        while y.is_empty() || y.len() == t {
            y = (0..t).filter(|_| rng.random_bool(0.5)).collect();
        }
        truth.push(LabelSet::new(y));
    }
    Case { t, preds, truth }
}

/// Every criterion by direct enumeration, in report order.
pub fn metric_oracle(c: &Case) -> [f64; 7] {
    let p = c.preds.len() as f64;
    let t = c.t;
    let mut sums = [0.0; 6];
    for (pred, y) in c.preds.iter().zip(&c.truth) {
        let s = &pred.scores;
        let in_y = |l: usize| y.as_slice().contains(&l);
        let in_h = |l: usize| pred.predicted.as_slice().contains(&l);
        let ranks: Vec<usize> = (0..t).map(|l| rank_by_count(s, l)).collect();

        sums[0] += (0..t).filter(|&l| in_y(l) != in_h(l)).count() as f64 / t as f64;

        let top = (0..t).find(|&l| ranks[l] == 1).unwrap();
        sums[1] += if in_y(top) { 0.0 } else { 1.0 };

        let deepest = (0..t).filter(|&l| in_y(l)).map(|l| ranks[l]).max().unwrap();
        sums[2] += (deepest - 1) as f64;

        let mut bad = 0;
        let mut pairs = 0;
        for a in (0..t).filter(|&l| in_y(l)) {
            for b in (0..t).filter(|&l| !in_y(l)) {
                pairs += 1;
                if s[a] <= s[b] {
                    bad += 1;
                }
            }
        }
        sums[3] += bad as f64 / pairs as f64;

        let n_y = (0..t).filter(|&l| in_y(l)).count() as f64;
        let mut prec = 0.0;
        for l in (0..t).filter(|&l| in_y(l)) {
            let above = (0..t).filter(|&k| in_y(k) && ranks[k] <= ranks[l]).count();
            prec += above as f64 / ranks[l] as f64;
        }
        sums[4] += prec / n_y;

        let cut = (0..t).filter(|&l| in_h(l)).count();
        sums[5] += (0..t).filter(|&l| in_y(l) && ranks[l] <= cut).count() as f64 / n_y;
    }
    let avg: Vec<f64> = sums.iter().map(|v| v / p).collect();
    let f1 = if avg[4] + avg[5] == 0.0 {
        0.0
    } else {
        2.0 * avg[4] * avg[5] / (avg[4] + avg[5])
    };
    [avg[0], avg[1], avg[2], avg[3], avg[4], avg[5], f1]
}

pub fn random_bag(rng: &mut ChaCha8Rng, dim: usize) -> Bag {
    let n = rng.random_range(1..=6);
    Bag::new(
        "r",
        (0..n)
            .map(|_| (0..dim).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect(),
    )
}

/// Max over both directions of the max over points of the min distance,
/// with every distance taken through its own square root.
pub fn max_min_oracle(a: &Bag, b: &Bag) -> f64 {
    let d = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    };
    let directed = |u: &Bag, v: &Bag| {
        u.iter()
            .map(|x| v.iter().map(|y| d(x, y)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Coarse grid over the cap, then successively finer grids around the best point.
pub fn grid_minimizer(weights: &[f64], errors: &[f64], cap: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, cap);
    let mut best = 0.0;
    for _ in 0..6 {
        let step = (hi - lo) / 200.0;
        let mut best_val = f64::INFINITY;
        for k in 0..=200 {
            let c = lo + k as f64 * step;
            let v = round_objective(weights, errors, c);
            if v < best_val {
                best_val = v;
                best = c;
            }
        }
        lo = (best - step).max(0.0);
        hi = (best + step).min(cap);
    }
    best
}

/// One label per bag from tight clusters: the sign-of-sum rule can get every
/// bag right. A bag holding instances of two labels cannot be right for both.
pub fn separable(seed: u64, m: usize) -> MimlDataset {
    generate(&SynthSpec {
        n_bags: m,
        dim: 3,
        spread: 0.2,
        max_labels: Some(1),
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .dataset
}

pub fn training_hamming(model: &BoostModel, ds: &MimlDataset) -> f64 {
    let preds: Vec<LabelScores> = ds.bags().map(|b| model.predict(b).unwrap()).collect();
    let truth: Vec<LabelSet> = ds.label_sets().cloned().collect();
    hamming_loss(&preds, &truth, ds.n_labels()).unwrap()
}

pub fn small_data(seed: u64, m: usize, n_labels: usize) -> MimlDataset {
    let spec = SynthSpec {
        n_labels,
        dim: 2,
        n_bags: m,
        n_min: 1,
        n_max: 3,
        spread: 0.8,
        mean_scale: 2.0,
        seed,
        ..SynthSpec::default()
    };
    generate(&spec).unwrap().dataset
}

/// Primal problem with every constraint written out. Each label's variables
/// are `[w (r) | b | xi (m) | delta (m)]`, where either `w = alpha` with the
/// scores `K alpha`, or, when `reduced`, `K = L L'` over its numerical range and
/// the scores are `L w`.
pub fn full_primal_objective(
    gram: &GramMatrix,
    signs: &[Vec<f64>],
    tau: &[Vec<f64>],
    rho: &Rho,
    pen: &Penalties,
    reduced: bool,
) -> f64 {
    let eig = SymmetricEigen::new(gram.matrix.clone());
    let top = eig.eigenvalues.amax();
    let keep: Vec<usize> = (0..eig.eigenvalues.len())
        .filter(|&i| eig.eigenvalues[i] > 1e-12 * top)
        .collect();
    let n_obj = gram.n_objects();
    let alt = !reduced;
    let r = if alt { n_obj } else { keep.len() };
    let l = if alt {
        gram.matrix.clone()
    } else {
        DMatrix::from_fn(n_obj, r, |o, c| {
            eig.eigenvectors[(o, keep[c])] * eig.eigenvalues[keep[c]].sqrt()
        })
    };
    let m = gram.n_bags();
    let n_labels = signs.len();
    let width = r + 1 + 2 * m;
    let nv = width * n_labels;
    let t = n_labels as f64;
    let mut q = DMatrix::zeros(nv, nv);
    let mut c = vec![0.0; nv];
    for a in 0..n_labels {
        for b in 0..n_labels {
            let w = if a == b { 1.0 / t } else { 0.0 } + 2.0 * pen.mu_term;
            for p in 0..r {
                if alt {
                    for p2 in 0..r {
                        q[(a * width + p, b * width + p2)] = w * gram.matrix[(p, p2)];
                    }
                } else {
                    q[(a * width + p, b * width + p)] = w;
                }
            }
        }
        for i in 0..m {
            c[a * width + r + 1 + i] = pen.c_xi * tau[a][i];
            c[a * width + r + 1 + m + i] = pen.c_delta;
        }
    }
    let mut rows: Vec<(Vec<f64>, f64)> = Vec::new();
    let sizes = gram.bag_sizes();
    for a in 0..n_labels {
        let base = a * width;
        for i in 0..m {
            let y = signs[a][i];
            let mut row = vec![0.0; nv];
            for p in 0..r {
                row[base + p] = -y * l[(i, p)];
            }
            row[base + r] = -y;
            row[base + r + 1 + i] = -1.0;
            rows.push((row, -1.0));
            for j in 0..sizes[i] {
                let o = gram.instance_index(i, j);
                let mut row = vec![0.0; nv];
                for p in 0..r {
                    row[base + p] = l[(o, p)] - l[(i, p)];
                }
                row[base + r + 1 + m + i] = -1.0;
                rows.push((row, 0.0));
            }
            let mut row = vec![0.0; nv];
            for p in 0..r {
                let mixed: f64 = (0..sizes[i])
                    .map(|j| rho[a][i][j] * l[(gram.instance_index(i, j), p)])
                    .sum();
                row[base + p] = l[(i, p)] - mixed;
            }
            row[base + r + 1 + m + i] = -1.0;
            rows.push((row, 0.0));
        }
    }
    let mut a_ineq = DMatrix::zeros(rows.len(), nv);
    let mut b_ineq = Vec::new();
    for (k, (row, rhs)) in rows.into_iter().enumerate() {
        for (p, v) in row.into_iter().enumerate() {
            a_ineq[(k, p)] = v;
        }
        b_ineq.push(rhs);
    }
    let mut lower = vec![f64::NEG_INFINITY; nv];
    for a in 0..n_labels {
        for v in (a * width + r + 1)..((a + 1) * width) {
            lower[v] = 0.0;
        }
    }
    let p = QpProblem::new(q, c)
        .with_inequalities(a_ineq, b_ineq)
        .with_bounds(lower, vec![f64::INFINITY; nv]);
    solve_qp(&p).unwrap().objective
}

pub fn subproblem_parts(
    ds: &MimlDataset,
    cfg: &DMimlConfig,
    rho_seed: Option<u64>,
) -> (GramMatrix, Vec<Vec<f64>>, Vec<Vec<f64>>, Rho) {
    let kernel = KernelSpec::rbf(0.7).unwrap();
    let gram = build_gram(&kernel, ds);
    let signs = label_signs(ds);
    let tau = if cfg.use_imbalance {
        imbalance_weights(&signs, &compute_imbalance_rates(ds).unwrap())
    } else {
        vec![vec![1.0; ds.len()]; ds.n_labels()]
    };
    let rho = match rho_seed {
        None => uniform_rho(&gram, ds.n_labels()),
        Some(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let alpha: Vec<Vec<f64>> = (0..ds.n_labels())
                .map(|_| {
                    (0..gram.n_objects())
                        .map(|_| rng.random_range(-1.0..1.0))
                        .collect()
                })
                .collect();
            update_rho(&alpha, &gram)
        }
    };
    (gram, signs, tau, rho)
}

pub fn blobs(seed: u64, n: usize, centers: &[[f64; 2]], spread: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let c = centers[i % centers.len()];
            vec![
                c[0] + spread * rng.random_range(-1.0..1.0),
                c[1] + spread * rng.random_range(-1.0..1.0),
            ]
        })
        .collect()
}

pub fn refs(xs: &[Vec<f64>]) -> Vec<&[f64]> {
    xs.iter().map(Vec::as_slice).collect()
}

/// Log of the Gaussian density from an explicit inverse and determinant.
pub fn log_gauss(x: &[f64], mean: &[f64], cov: &DMatrix<f64>) -> f64 {
    let d = x.len();
    let diff = DVector::from_iterator(d, x.iter().zip(mean).map(|(a, b)| a - b));
    let inv = cov.clone().try_inverse().unwrap();
    let quad = (diff.transpose() * inv * &diff)[(0, 0)];
    -0.5 * (quad + cov.determinant().ln() + d as f64 * (2.0 * std::f64::consts::PI).ln())
}

/// Adjusted Rand index between two partitions.
pub fn adjusted_rand(a: &[usize], b: &[usize]) -> f64 {
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut table = vec![vec![0f64; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x][y] += 1.0;
    }
    let pairs = |n: f64| n * (n - 1.0) / 2.0;
    let index: f64 = table.iter().flatten().map(|&n| pairs(n)).sum();
    let rows: f64 = table.iter().map(|r| pairs(r.iter().sum())).sum();
    let cols: f64 = (0..kb)
        .map(|j| pairs(table.iter().map(|r| r[j]).sum()))
        .sum();
    let expected = rows * cols / pairs(a.len() as f64);
    (index - expected) / (0.5 * (rows + cols) - expected)
}

pub fn single_instance(seed: u64, m: usize, n_labels: usize) -> MimlDataset {
    generate(&SynthSpec {
        n_labels,
        dim: 3,
        n_bags: m,
        single_instance: true,
        spread: 0.7,
        seed,
        ..SynthSpec::default()
    })
    .unwrap()
    .dataset
}

pub fn point(bag: &Bag) -> &[f64] {
    bag.iter().next().unwrap()
}

/// Largest violation over every constraint of every label by a direct sweep:
/// the hinge, each instance against its bag, the bag against its
/// rho-weighted instances, and the slack signs.
pub fn sweep_violation(
    gram: &GramMatrix,
    signs: &[Vec<f64>],
    rho: &Rho,
    state: &TrainingState,
) -> f64 {
    let n = gram.n_objects();
    let mut worst = 0.0f64;
    for t in 0..signs.len() {
        let f: Vec<f64> = (0..n)
            .map(|p| (0..n).map(|q| gram.get(p, q) * state.alpha[t][q]).sum())
            .collect();
        for (i, &size) in gram.bag_sizes().iter().enumerate() {
            let (xi, delta) = (state.xi[t][i], state.delta[t][i]);
            worst = worst
                .max(1.0 - signs[t][i] * (f[i] + state.bias[t]) - xi)
                .max(-xi)
                .max(-delta);
            let mut mixed = 0.0;
            for j in 0..size {
                let fj = f[gram.instance_index(i, j)];
                worst = worst.max(fj - f[i] - delta);
                mixed += rho[t][i][j] * fj;
            }
            worst = worst.max(f[i] - mixed - delta);
        }
    }
    worst
}
