//! The seven multi-label evaluation criteria and the shared rank function.

use serde::{Deserialize, Serialize};

use crate::data::LabelSet;
use crate::error::{MimlError, Result};

/// Real-valued confidence per label together with the discrete predicted set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub scores: Vec<f64>,
    pub predicted: LabelSet,
}

impl LabelScores {
    pub fn new(scores: Vec<f64>, predicted: LabelSet) -> Self {
        Self { scores, predicted }
    }

    /// Predicted set `{y : score(y) > 0}`.
    pub fn positive(scores: Vec<f64>) -> Self {
        let predicted = positive_labels(&scores);
        Self { scores, predicted }
    }

    /// Predicted set `{y : score(y) > 0}`, or the top label alone when that is empty.
    pub fn positive_or_top(scores: Vec<f64>) -> Self {
        let mut predicted = positive_labels(&scores);
        if predicted.is_empty() {
            predicted = LabelSet::new([argmax(&scores)]);
        }
        Self { scores, predicted }
    }

    /// Predicted set `{y : score(y) >= 0} ∪ {argmax}`; never empty.
    pub fn t_criterion(scores: Vec<f64>) -> Self {
        let predicted = t_criterion(&scores);
        Self { scores, predicted }
    }

    /// Highest-scoring label, lowest index on ties.
    pub fn top_label(&self) -> usize {
        argmax(&self.scores)
    }
}

pub(crate) fn positive_labels(scores: &[f64]) -> LabelSet {
    scores
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.0)
        .map(|(y, _)| y)
        .collect()
}

/// All labels with non-negative score plus the top-scored label.
pub fn t_criterion(scores: &[f64]) -> LabelSet {
    let top = argmax(scores);
    scores
        .iter()
        .enumerate()
        .filter(|&(y, &s)| s >= 0.0 || y == top)
        .map(|(y, _)| y)
        .collect()
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// 1-based rank of every label; rank 1 is the highest score, ties go to the lower index.
pub fn rank_labels(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; scores.len()];
    for (pos, &label) in order.iter().enumerate() {
        ranks[label] = pos + 1;
    }
    ranks
}

fn check_inputs(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<()> {
    if preds.is_empty() || preds.len() != truth.len() {
        return Err(MimlError::InvalidArgument(format!(
            "need equally many predictions and truths (got {} and {})",
            preds.len(),
            truth.len()
        )));
    }
    for (i, p) in preds.iter().enumerate() {
        if p.scores.len() != n_labels {
            return Err(MimlError::DimensionMismatch {
                expected: n_labels,
                found: p.scores.len(),
            });
        }
        if p.scores.iter().any(|s| !s.is_finite()) {
            return Err(MimlError::InvalidArgument(format!(
                "non-finite score at example {i}"
            )));
        }
        if let Some(l) = p.predicted.max().filter(|&l| l >= n_labels) {
            return Err(MimlError::LabelOutOfRange { index: l, n_labels });
        }
    }
    for y in truth {
        if let Some(l) = y.max().filter(|&l| l >= n_labels) {
            return Err(MimlError::LabelOutOfRange { index: l, n_labels });
        }
    }
    Ok(())
}

fn require_nonempty(truth: &[LabelSet]) -> Result<()> {
    match truth.iter().position(LabelSet::is_empty) {
        Some(i) => Err(MimlError::InvalidArgument(format!(
            "empty truth label set at example {i}"
        ))),
        None => Ok(()),
    }
}

pub fn hamming_loss(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, y)| p.predicted.symmetric_difference_len(y) as f64 / n_labels as f64)
        .sum();
    Ok(total / preds.len() as f64)
}

pub fn one_error(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    require_nonempty(truth)?;
    let misses = preds
        .iter()
        .zip(truth)
        .filter(|(p, y)| !y.contains(p.top_label()))
        .count();
    Ok(misses as f64 / preds.len() as f64)
}

pub fn coverage(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    require_nonempty(truth)?;
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, y)| {
            let ranks = rank_labels(&p.scores);
            let deepest = y.iter().map(|l| ranks[l]).max().unwrap_or(1);
            (deepest - 1) as f64
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Fraction of (proper, improper) label pairs with `h(proper) <= h(improper)`;
/// score ties count as misordered.
pub fn ranking_loss(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    let mut total = 0.0;
    for (i, (p, y)) in preds.iter().zip(truth).enumerate() {
        if y.is_empty() || y.len() == n_labels {
            return Err(MimlError::InvalidArgument(format!(
                "ranking loss needs 1 <= |Y| <= T-1 (example {i} has {} of {n_labels})",
                y.len()
            )));
        }
        let mut bad = 0usize;
        for proper in y.iter() {
            for improper in (0..n_labels).filter(|&l| !y.contains(l)) {
                if p.scores[proper] <= p.scores[improper] {
                    bad += 1;
                }
            }
        }
        total += bad as f64 / (y.len() * (n_labels - y.len())) as f64;
    }
    Ok(total / preds.len() as f64)
}

pub fn average_precision(
    preds: &[LabelScores],
    truth: &[LabelSet],
    n_labels: usize,
) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    require_nonempty(truth)?;
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, y)| {
            let ranks = rank_labels(&p.scores);
            let per_label: f64 = y
                .iter()
                .map(|l| {
                    let above = y.iter().filter(|&k| ranks[k] <= ranks[l]).count();
                    above as f64 / ranks[l] as f64
                })
                .sum();
            per_label / y.len() as f64
        })
        .sum();
    Ok(total / preds.len() as f64)
}

pub fn average_recall(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<f64> {
    check_inputs(preds, truth, n_labels)?;
    require_nonempty(truth)?;
    let total: f64 = preds
        .iter()
        .zip(truth)
        .map(|(p, y)| {
            let ranks = rank_labels(&p.scores);
            let cut = p.predicted.len();
            let hit = y.iter().filter(|&l| ranks[l] <= cut).count();
            hit as f64 / y.len() as f64
        })
        .sum();
    Ok(total / preds.len() as f64)
}

/// Harmonic mean of average precision and average recall; 0 when both are 0.
pub fn average_f1(avg_precision: f64, avg_recall: f64) -> f64 {
    let denom = avg_precision + avg_recall;
    if denom == 0.0 {
        0.0
    } else {
        2.0 * avg_precision * avg_recall / denom
    }
}

/// All seven criteria, in the conventional column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub hamming_loss: f64,
    pub one_error: f64,
    pub coverage: f64,
    pub ranking_loss: f64,
    pub avg_precision: f64,
    pub avg_recall: f64,
    pub avg_f1: f64,
}

impl MetricReport {
    pub const NAMES: [&'static str; 7] = [
        "hloss",
        "one-error",
        "coverage",
        "rloss",
        "aveprec",
        "averecl",
        "aveF1",
    ];

    /// Evaluates every criterion; rejects examples with `|Y| = 0` or `|Y| = T`.
    pub fn evaluate(preds: &[LabelScores], truth: &[LabelSet], n_labels: usize) -> Result<Self> {
        let avg_precision = average_precision(preds, truth, n_labels)?;
        let avg_recall = average_recall(preds, truth, n_labels)?;
        Ok(Self {
            hamming_loss: hamming_loss(preds, truth, n_labels)?,
            one_error: one_error(preds, truth, n_labels)?,
            coverage: coverage(preds, truth, n_labels)?,
            ranking_loss: ranking_loss(preds, truth, n_labels)?,
            avg_precision,
            avg_recall,
            avg_f1: average_f1(avg_precision, avg_recall),
        })
    }

    pub fn values(&self) -> [f64; 7] {
        [
            self.hamming_loss,
            self.one_error,
            self.coverage,
            self.ranking_loss,
            self.avg_precision,
            self.avg_recall,
            self.avg_f1,
        ]
    }

    pub fn from_values(v: [f64; 7]) -> Self {
        Self {
            hamming_loss: v[0],
            one_error: v[1],
            coverage: v[2],
            ranking_loss: v[3],
            avg_precision: v[4],
            avg_recall: v[5],
            avg_f1: v[6],
        }
    }

    /// Aligned two-line table: criterion names, then values to three decimals.
    pub fn to_table(&self) -> String {
        let header: Vec<String> = Self::NAMES.iter().map(|n| format!("{n:>10}")).collect();
        let row: Vec<String> = self.values().iter().map(|v| format!("{v:>10.3}")).collect();
        format!("{}\n{}\n", header.join(" "), row.join(" "))
    }

    /// `criterion=value` lines at full precision.
    pub fn to_lines(&self) -> String {
        Self::NAMES
            .iter()
            .zip(self.values())
            .map(|(n, v)| format!("{n}={v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(scores: &[f64], predicted: &[usize]) -> LabelScores {
        LabelScores::new(scores.to_vec(), LabelSet::new(predicted.iter().copied()))
    }

    fn set(labels: &[usize]) -> LabelSet {
        LabelSet::new(labels.iter().copied())
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_labels(&[0.9, 0.1]), vec![1, 2]);
        assert_eq!(rank_labels(&[0.5, 0.5]), vec![1, 2]);
        assert_eq!(rank_labels(&[0.1, 0.7, 0.7, 0.3]), vec![4, 1, 2, 3]);
    }

    #[test]
    fn hamming_examples() {
        let p = [pred(&[1.0, 0.0, 0.0, 0.0, 0.0], &[0])];
        assert!((hamming_loss(&p, &[set(&[1])], 5).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(hamming_loss(&p, &[set(&[0])], 5).unwrap(), 0.0);
    }

    #[test]
    fn one_error_examples() {
        let p = [pred(&[0.9, 0.1], &[0]), pred(&[0.9, 0.1], &[0])];
        assert_eq!(one_error(&p, &[set(&[0]), set(&[1])], 2).unwrap(), 0.5);
        assert_eq!(one_error(&p, &[set(&[0]), set(&[0])], 2).unwrap(), 0.0);
        assert!(one_error(&p, &[set(&[0]), set(&[])], 2).is_err());
    }

    #[test]
    fn coverage_and_precision_with_ranks_one_and_three() {
        // labels 0 and 2 are proper, ranked 1st and 3rd
        let p = [pred(&[0.9, 0.5, 0.2], &[0])];
        let y = [set(&[0, 2])];
        assert_eq!(coverage(&p, &y, 3).unwrap(), 2.0);
        let ap = average_precision(&p, &y, 3).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn ranking_loss_counts_ties() {
        let p = [pred(&[0.3, 0.3], &[])];
        assert_eq!(ranking_loss(&p, &[set(&[0])], 2).unwrap(), 1.0);
        let p = [pred(&[0.3, 0.1], &[0])];
        assert_eq!(ranking_loss(&p, &[set(&[0])], 2).unwrap(), 0.0);
        assert!(ranking_loss(&p, &[set(&[0, 1])], 2).is_err());
    }

    #[test]
    fn recall_examples() {
        let y = [set(&[0, 1])];
        assert_eq!(
            average_recall(&[pred(&[0.9, 0.8, 0.1], &[0, 1])], &y, 3).unwrap(),
            1.0
        );
        assert_eq!(
            average_recall(&[pred(&[0.9, 0.8, 0.1], &[])], &y, 3).unwrap(),
            0.0
        );
    }

    #[test]
    fn f1_examples() {
        assert_eq!(average_f1(1.0, 1.0), 1.0);
        assert_eq!(average_f1(0.5, 0.5), 0.5);
        assert_eq!(average_f1(1.0, 0.0), 0.0);
        assert_eq!(average_f1(0.0, 0.0), 0.0);
    }

    #[test]
    fn t_criterion_rule() {
        assert_eq!(t_criterion(&[0.5, -0.2]), set(&[0]));
        assert_eq!(t_criterion(&[-0.5, -0.9, -0.1]), set(&[2]));
        assert_eq!(t_criterion(&[0.5, 0.2]), set(&[0, 1]));
        assert_eq!(t_criterion(&[0.0, -1.0]), set(&[0]));
    }

    #[test]
    fn perfect_predictions() {
        let preds = [
            pred(&[0.9, 0.8, -0.3], &[0, 1]),
            pred(&[-0.2, -0.1, 0.7], &[2]),
        ];
        let truth = [set(&[0, 1]), set(&[2])];
        let r = MetricReport::evaluate(&preds, &truth, 3).unwrap();
        assert_eq!(r.hamming_loss, 0.0);
        assert_eq!(r.one_error, 0.0);
        assert_eq!(r.ranking_loss, 0.0);
        assert_eq!(r.avg_precision, 1.0);
        assert_eq!(r.avg_recall, 1.0);
        assert_eq!(r.avg_f1, 1.0);
        assert_eq!(r.coverage, 0.5);
    }

    #[test]
    fn table_has_fixed_column_order() {
        let r = MetricReport::from_values([0.0, 0.0, 0.5, 0.0, 1.0, 1.0, 1.0]);
        let table = r.to_table();
        let mut lines = table.lines();
        let header: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(header, MetricReport::NAMES);
        let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
        assert_eq!(
            row,
            ["0.000", "0.000", "0.500", "0.000", "1.000", "1.000", "1.000"]
        );
    }
}
