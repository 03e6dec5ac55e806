//! Hausdorff distance between bags and k-medoids clustering of bags.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Bag;
use crate::error::{MimlError, Result};

pub(crate) fn squared_euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Symmetric Hausdorff distance with the Euclidean ground metric.
pub fn hausdorff(a: &Bag, b: &Bag) -> Result<f64> {
    let dim = match (a.dim(), b.dim()) {
        (Some(da), Some(db)) if da == db => da,
        (Some(da), Some(db)) => {
            return Err(MimlError::DimensionMismatch {
                expected: da,
                found: db,
            })
        }
        _ => {
            return Err(MimlError::InvalidArgument(
                "hausdorff on an empty bag".into(),
            ))
        }
    };
    a.check_dim(dim)?;
    b.check_dim(dim)?;
    Ok(hausdorff_unchecked(a, b))
}

pub(crate) fn hausdorff_unchecked(a: &Bag, b: &Bag) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let mut sq = vec![0.0; na * nb];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            sq[i * nb + j] = squared_euclidean(x, y);
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..na {
        let nearest = (0..nb)
            .map(|j| sq[i * nb + j])
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    for j in 0..nb {
        let nearest = (0..na)
            .map(|i| sq[i * nb + j])
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(nearest);
    }
    worst.sqrt()
}

/// Dense symmetric matrix of pairwise bag distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn hausdorff(bags: &[Bag]) -> Result<Self> {
        if let Some(dim) = bags.first().and_then(Bag::dim) {
            for b in bags {
                if b.is_empty() {
                    return Err(MimlError::InvalidArgument("empty bag".into()));
                }
                b.check_dim(dim)?;
            }
        }
        let n = bags.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (i + 1..n)
                    .map(|j| hausdorff_unchecked(&bags[i], &bags[j]))
                    .collect()
            })
            .collect();
        let mut values = vec![0.0; n * n];
        for (i, row) in rows.into_iter().enumerate() {
            for (off, d) in row.into_iter().enumerate() {
                let j = i + 1 + off;
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self { n, values }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// Result of a k-medoids run. `assignment[u]` is the cluster index of bag `u`;
/// `medoids[t]` is the bag index of cluster `t`'s medoid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub medoids: Vec<usize>,
    pub assignment: Vec<usize>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each assignment step, in order.
    pub cost_history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMedoidsConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub restarts: usize,
}

impl KMedoidsConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iters: 100,
            restarts: 1,
        }
    }
}

/// Clusters `bags` under the Hausdorff distance.
pub fn k_medoids(bags: &[Bag], k: usize, seed: u64) -> Result<Clustering> {
    let dist = DistanceMatrix::hausdorff(bags)?;
    k_medoids_with(&dist, &KMedoidsConfig::new(k, seed))
}

/// Clusters over a precomputed distance matrix; the lowest-cost restart wins.
pub fn k_medoids_with(dist: &DistanceMatrix, config: &KMedoidsConfig) -> Result<Clustering> {
    let n = dist.len();
    if config.k == 0 || config.k > n {
        return Err(MimlError::InvalidArgument(format!(
            "k = {} must lie in 1..={n}",
            config.k
        )));
    }
    let mut best: Option<Clustering> = None;
    for r in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(r as u64));
        let mut medoids = sample(&mut rng, n, config.k).into_vec();
        medoids.sort_unstable();
        let run = k_medoids_from(dist, medoids, config.max_iters);
        if best.as_ref().is_none_or(|b| run.cost < b.cost) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Runs the alternating assign/update loop from explicit initial medoids.
pub fn k_medoids_from(
    dist: &DistanceMatrix,
    mut medoids: Vec<usize>,
    max_iters: usize,
) -> Clustering {
    let mut cost_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut assignment;
    loop {
        assignment = assign(dist, &medoids);
        cost_history.push(assignment_cost(dist, &medoids, &assignment));
        if iterations == max_iters {
            break;
        }
        iterations += 1;
        let updated: Vec<usize> = (0..medoids.len())
            .map(|t| {
                let group: Vec<usize> = (0..dist.len()).filter(|&u| assignment[u] == t).collect();
                // The current medoid stays unless another member is strictly better.
                let current = medoids[t];
                let total = |a: usize| group.iter().map(|&b| dist.get(a, b)).sum::<f64>();
                let candidate = group[group_medoid(dist, &group)];
                if total(candidate) < total(current) {
                    candidate
                } else {
                    current
                }
            })
            .collect();
        if updated == medoids {
            converged = true;
            break;
        }
        medoids = updated;
    }
    let cost = *cost_history.last().expect("one assignment step");
    Clustering {
        medoids,
        assignment,
        cost,
        iterations,
        converged,
        cost_history,
    }
}

/// Each medoid keeps itself; every other bag goes to its nearest medoid, lowest cluster on ties.
fn assign(dist: &DistanceMatrix, medoids: &[usize]) -> Vec<usize> {
    (0..dist.len())
        .map(|u| {
            if let Some(t) = medoids.iter().position(|&m| m == u) {
                return t;
            }
            let mut best = 0;
            for t in 1..medoids.len() {
                if dist.get(u, medoids[t]) < dist.get(u, medoids[best]) {
                    best = t;
                }
            }
            best
        })
        .collect()
}

fn assignment_cost(dist: &DistanceMatrix, medoids: &[usize], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(u, &t)| dist.get(u, medoids[t]))
        .sum()
}

/// Position within `group` minimizing the summed distance to the group.
fn group_medoid(dist: &DistanceMatrix, group: &[usize]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (pos, &a) in group.iter().enumerate() {
        let total: f64 = group.iter().map(|&b| dist.get(a, b)).sum();
        if total < best.1 {
            best = (pos, total);
        }
    }
    best.0
}

/// Index of the bag minimizing its summed Hausdorff distance to the rest of `group`.
pub fn medoid_of(group: &[Bag]) -> Result<usize> {
    if group.is_empty() {
        return Err(MimlError::InvalidArgument(
            "medoid of an empty group".into(),
        ));
    }
    let dist = DistanceMatrix::hausdorff(group)?;
    let all: Vec<usize> = (0..group.len()).collect();
    Ok(group_medoid(&dist, &all))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag1(values: &[f64]) -> Bag {
        Bag::new("b", values.iter().map(|&v| vec![v]).collect())
    }

    #[test]
    fn hausdorff_examples() {
        let a = Bag::new("a", vec![vec![0.0, 0.0]]);
        let b = Bag::new("b", vec![vec![3.0, 4.0]]);
        assert_eq!(hausdorff(&a, &b).unwrap(), 5.0);
        assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(
            hausdorff(&bag1(&[0.0, 10.0]), &bag1(&[0.0, 6.0])).unwrap(),
            4.0
        );
        let c = Bag::new("c", vec![vec![1.0]]);
        assert!(hausdorff(&a, &c).is_err());
    }

    #[test]
    fn medoid_examples() {
        assert_eq!(medoid_of(&[bag1(&[3.0])]).unwrap(), 0);
        assert_eq!(
            medoid_of(&[bag1(&[0.0]), bag1(&[1.0]), bag1(&[10.0])]).unwrap(),
            1
        );
        assert!(medoid_of(&[]).is_err());
    }

    #[test]
    fn identical_bags_single_cluster() {
        let bags = vec![bag1(&[1.0, 2.0]); 4];
        let c = k_medoids(&bags, 1, 7).unwrap();
        assert_eq!(c.cost, 0.0);
        assert!(c.converged);
        assert!(c.assignment.iter().all(|&t| t == 0));
    }

    #[test]
    fn every_bag_its_own_medoid() {
        let bags: Vec<Bag> = (0..5).map(|i| bag1(&[i as f64 * 1.5])).collect();
        let c = k_medoids(&bags, 5, 3).unwrap();
        assert_eq!(c.cost, 0.0);
        let mut m = c.medoids.clone();
        m.sort_unstable();
        assert_eq!(m, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn k_out_of_range() {
        let bags = vec![bag1(&[0.0]), bag1(&[1.0])];
        assert!(k_medoids(&bags, 0, 0).is_err());
        assert!(k_medoids(&bags, 3, 0).is_err());
    }

    #[test]
    fn iteration_cap_still_yields_consistent_assignment() {
        let bags: Vec<Bag> = (0..8).map(|i| bag1(&[(i * i) as f64])).collect();
        let dist = DistanceMatrix::hausdorff(&bags).unwrap();
        let c = k_medoids_from(&dist, vec![0, 1], 0);
        assert!(!c.converged);
        assert_eq!(c.cost_history.len(), 1);
        for u in 0..8 {
            let own = dist.get(u, c.medoids[c.assignment[u]]);
            assert!(c.medoids.iter().all(|&m| own <= dist.get(u, m)));
        }
    }
}
