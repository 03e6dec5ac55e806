//! Instance kernels, the mean-of-pairs set kernel, and the joint Gram matrix
//! over training bags and their instances.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Bag, MimlDataset};
use crate::error::{MimlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KernelSpec {
    /// `exp(-gamma * |u - v|^2)`
    Rbf { gamma: f64 },
    /// `<u, v>`
    Linear,
}

impl KernelSpec {
    pub fn rbf(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma > 0.0 {
            Ok(KernelSpec::Rbf { gamma })
        } else {
            Err(MimlError::InvalidArgument(format!(
                "rbf gamma must be > 0, got {gamma}"
            )))
        }
    }

    /// RBF with `gamma = 1/d`.
    pub fn rbf_for_dim(dim: usize) -> Self {
        KernelSpec::Rbf {
            gamma: 1.0 / dim.max(1) as f64,
        }
    }

    #[inline]
    pub fn eval(&self, u: &[f64], v: &[f64]) -> f64 {
        match *self {
            KernelSpec::Rbf { gamma } => {
                let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
                (-gamma * d2).exp()
            }
            KernelSpec::Linear => u.iter().zip(v).map(|(a, b)| a * b).sum(),
        }
    }
}

pub fn base_kernel(spec: &KernelSpec, u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(MimlError::DimensionMismatch {
            expected: u.len(),
            found: v.len(),
        });
    }
    Ok(spec.eval(u, v))
}

/// Mean of the base kernel over all instance pairs of the two bags.
pub fn set_kernel(spec: &KernelSpec, a: &Bag, b: &Bag) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(MimlError::InvalidArgument(
            "set kernel on an empty bag".into(),
        ));
    }
    let dim = a.instances[0].len();
    a.check_dim(dim)?;
    b.check_dim(dim)?;
    let total: f64 = a
        .iter()
        .map(|u| b.iter().map(|v| spec.eval(u, v)).sum::<f64>())
        .sum();
    Ok(total / (a.len() * b.len()) as f64)
}

/// Kernel matrix over points, filled once per unordered pair.
pub fn point_gram(spec: &KernelSpec, points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| spec.eval(&points[i], &points[j])).collect())
        .collect();
    let mut k = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (off, v) in row.into_iter().enumerate() {
            k[(i, i + off)] = v;
            k[(i + off, i)] = v;
        }
    }
    k
}

/// Joint kernel matrix over the ordered objects `(X_1..X_m, x_11..x_{m,n_m})`,
/// every instance treated as a singleton bag.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    pub matrix: DMatrix<f64>,
    bag_sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl GramMatrix {
    pub fn n_bags(&self) -> usize {
        self.bag_sizes.len()
    }

    /// Total number of objects, `m + n`.
    pub fn n_objects(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn bag_sizes(&self) -> &[usize] {
        &self.bag_sizes
    }

    /// Zero-based object index of bag `i`.
    pub fn bag_index(&self, i: usize) -> usize {
        i
    }

    /// Zero-based object index of instance `j` of bag `i`.
    pub fn instance_index(&self, i: usize, j: usize) -> usize {
        self.n_bags() + self.offsets[i] + j
    }

    pub fn get(&self, p: usize, q: usize) -> f64 {
        self.matrix[(p, q)]
    }
}

pub fn build_gram(spec: &KernelSpec, ds: &MimlDataset) -> GramMatrix {
    let bags: Vec<&Bag> = ds.bags().collect();
    gram_over_bags(spec, &bags)
}

pub(crate) fn gram_over_bags(spec: &KernelSpec, bags: &[&Bag]) -> GramMatrix {
    let m = bags.len();
    let bag_sizes: Vec<usize> = bags.iter().map(|b| b.len()).collect();
    let mut offsets = Vec::with_capacity(m);
    let mut n = 0;
    for &s in &bag_sizes {
        offsets.push(n);
        n += s;
    }
    let points: Vec<Vec<f64>> = bags
        .iter()
        .flat_map(|b| b.instances.iter().cloned())
        .collect();
    let kxx = point_gram(spec, &points);

    // bag-vs-instance: mean over the bag's own instances
    let mut kbx = DMatrix::zeros(m, n);
    for i in 0..m {
        let (start, len) = (offsets[i], bag_sizes[i]);
        for q in 0..n {
            let s: f64 = (start..start + len).map(|p| kxx[(p, q)]).sum();
            kbx[(i, q)] = s / len as f64;
        }
    }

    let mut k = DMatrix::zeros(m + n, m + n);
    for i in 0..m {
        for l in i..m {
            let (start, len) = (offsets[l], bag_sizes[l]);
            let s: f64 = (start..start + len).map(|q| kbx[(i, q)]).sum();
            let v = s / len as f64;
            k[(i, l)] = v;
            k[(l, i)] = v;
        }
        for q in 0..n {
            k[(i, m + q)] = kbx[(i, q)];
            k[(m + q, i)] = kbx[(i, q)];
        }
    }
    k.view_mut((m, m), (n, n)).copy_from(&kxx);
    GramMatrix {
        matrix: k,
        bag_sizes,
        offsets,
    }
}

/// Set-kernel values between `bag` and every training object, in Gram order.
pub fn cross_kernel(spec: &KernelSpec, bag: &Bag, training: &[Bag]) -> Vec<f64> {
    let m = training.len();
    let mut instance_part = Vec::new();
    let mut bag_part = Vec::with_capacity(m);
    for b in training {
        let start = instance_part.len();
        for x in b.iter() {
            let s: f64 = bag.iter().map(|u| spec.eval(u, x)).sum();
            instance_part.push(s / bag.len() as f64);
        }
        let s: f64 = instance_part[start..].iter().sum();
        bag_part.push(s / b.len() as f64);
    }
    bag_part.extend(instance_part);
    bag_part
}
