//! Domain types for multi-instance multi-label data.
//!
//! A [`Bag`] is a non-empty set of fixed-dimension feature vectors describing
//! one object, a [`LabelSet`] is a subset of the dense label indices `0..T`,
//! and a [`MimlDataset`] pairs the two. Types are plain data; invariants are
//! checked by [`validate_dataset`] and enforced by [`MimlDataset::new`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{MimlError, Result};

/// One feature vector.
pub type Instance = Vec<f64>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub id: String,
    pub instances: Vec<Instance>,
}

impl Bag {
    pub fn new(id: impl Into<String>, instances: Vec<Instance>) -> Self {
        Self {
            id: id.into(),
            instances,
        }
    }

    /// A bag holding a single instance.
    pub fn singleton(id: impl Into<String>, instance: Instance) -> Self {
        Self::new(id, vec![instance])
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    /// Dimension of the first instance, if any.
    pub fn dim(&self) -> Option<usize> {
        self.instances.first().map(Vec::len)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.instances.iter().map(Vec::as_slice)
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        match self.instances.iter().find(|x| x.len() != dim) {
            Some(x) => Err(MimlError::DimensionMismatch {
                expected: dim,
                found: x.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Sorted, duplicate-free set of label indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelSet(Vec<usize>);

impl LabelSet {
    pub fn new(labels: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = labels.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn contains(&self, label: usize) -> bool {
        self.0.binary_search(&label).is_ok()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn max(&self) -> Option<usize> {
        self.0.last().copied()
    }

    /// Size of the symmetric difference with `other`.
    pub fn symmetric_difference_len(&self, other: &LabelSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    n += 1;
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    n += 1;
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    i += 1;
                    j += 1;
                }
            }
        }
        n + (self.0.len() - i) + (other.0.len() - j)
    }
}

impl FromIterator<usize> for LabelSet {
    fn from_iter<I: IntoIterator<Item = usize>>(iter: I) -> Self {
        Self::new(iter)
    }
}

/// Label membership sign: `+1` if `y` is a proper label of the example, `-1` otherwise.
pub fn psi(labels: &LabelSet, y: usize, n_labels: usize) -> Result<f64> {
    if y >= n_labels {
        return Err(MimlError::LabelOutOfRange { index: y, n_labels });
    }
    Ok(if labels.contains(y) { 1.0 } else { -1.0 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub bag: Bag,
    pub labels: LabelSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MimlDataset {
    examples: Vec<Example>,
    n_labels: usize,
    dim: usize,
    label_names: Vec<String>,
}

impl MimlDataset {
    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn new(examples: Vec<Example>, n_labels: usize, dim: usize) -> Result<Self> {
        let names = default_label_names(n_labels);
        Self::with_label_names(examples, dim, names)
    }

    pub fn with_label_names(
        examples: Vec<Example>,
        dim: usize,
        label_names: Vec<String>,
    ) -> Result<Self> {
        let ds = Self::new_unchecked(examples, label_names.len(), dim, label_names);
        let report = validate_dataset(&ds);
        if report.is_valid() {
            Ok(ds)
        } else {
            Err(MimlError::InvalidDataset(report.to_string()))
        }
    }

    /// Builds a dataset without checking invariants; see [`validate_dataset`].
    pub fn new_unchecked(
        examples: Vec<Example>,
        n_labels: usize,
        dim: usize,
        label_names: Vec<String>,
    ) -> Self {
        Self {
            examples,
            n_labels,
            dim,
            label_names,
        }
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn n_labels(&self) -> usize {
        self.n_labels
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    pub fn label_index(&self, name: &str) -> Option<usize> {
        self.label_names.iter().position(|n| n == name)
    }

    pub fn bags(&self) -> impl Iterator<Item = &Bag> {
        self.examples.iter().map(|e| &e.bag)
    }

    pub fn label_sets(&self) -> impl Iterator<Item = &LabelSet> {
        self.examples.iter().map(|e| &e.labels)
    }

    /// Total number of instances over all bags.
    pub fn n_instances(&self) -> usize {
        self.examples.iter().map(|e| e.bag.len()).sum()
    }

    /// New dataset made of the examples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            examples: indices.iter().map(|&i| self.examples[i].clone()).collect(),
            n_labels: self.n_labels,
            dim: self.dim,
            label_names: self.label_names.clone(),
        }
    }
}

pub fn default_label_names(n_labels: usize) -> Vec<String> {
    (0..n_labels).map(|l| format!("l{l}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoExamples,
    LabelTableSize {
        expected: usize,
        found: usize,
    },
    EmptyBag {
        example: usize,
    },
    DimensionMismatch {
        example: usize,
        instance: usize,
        expected: usize,
        found: usize,
    },
    NonFinite {
        example: usize,
        instance: usize,
    },
    EmptyLabelSet {
        example: usize,
    },
    LabelOutOfRange {
        example: usize,
        label: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoExamples => write!(f, "dataset has no examples"),
            Violation::LabelTableSize { expected, found } => {
                write!(f, "label table has {found} names, expected {expected}")
            }
            Violation::EmptyBag { example } => write!(f, "empty bag at index {example}"),
            Violation::DimensionMismatch {
                example,
                instance,
                expected,
                found,
            } => write!(
                f,
                "dimension mismatch at index {example} instance {instance}: expected {expected}, found {found}"
            ),
            Violation::NonFinite { example, instance } => {
                write!(f, "non-finite feature at index {example} instance {instance}")
            }
            Violation::EmptyLabelSet { example } => write!(f, "empty label set at index {example}"),
            Violation::LabelOutOfRange { example, label } => {
                write!(f, "label {label} out of range at index {example}")
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        for (k, v) in self.violations.iter().enumerate() {
            if k > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Lists every violated dataset invariant.
pub fn validate_dataset(ds: &MimlDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if ds.examples.is_empty() {
        violations.push(Violation::NoExamples);
    }
    if ds.label_names.len() != ds.n_labels {
        violations.push(Violation::LabelTableSize {
            expected: ds.n_labels,
            found: ds.label_names.len(),
        });
    }
    for (i, ex) in ds.examples.iter().enumerate() {
        if ex.bag.is_empty() {
            violations.push(Violation::EmptyBag { example: i });
        }
        for (j, x) in ex.bag.instances.iter().enumerate() {
            if x.len() != ds.dim {
                violations.push(Violation::DimensionMismatch {
                    example: i,
                    instance: j,
                    expected: ds.dim,
                    found: x.len(),
                });
            } else if x.iter().any(|v| !v.is_finite()) {
                violations.push(Violation::NonFinite {
                    example: i,
                    instance: j,
                });
            }
        }
        if ex.labels.is_empty() {
            violations.push(Violation::EmptyLabelSet { example: i });
        }
        for l in ex.labels.iter().filter(|&l| l >= ds.n_labels) {
            violations.push(Violation::LabelOutOfRange {
                example: i,
                label: l,
            });
        }
    }
    ValidationReport { violations }
}
