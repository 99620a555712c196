//! Confusion matrix and imbalance-aware metrics.
//!
//! Per-class "accuracy" is recall; balanced accuracy is the unweighted mean of
//! recall over classes that have at least one true sample.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `counts[t][p]`: rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if k == 0 || counts.iter().any(|row| row.len() != k) {
            return Err(Error::ShapeMismatch(
                "confusion matrix must be square".into(),
            ));
        }
        Ok(Self { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn row_sum(&self, k: usize) -> u64 {
        self.counts[k].iter().sum()
    }

    pub fn col_sum(&self, k: usize) -> u64 {
        self.counts.iter().map(|row| row[k]).sum()
    }
}

pub fn confusion(
    true_labels: &[usize],
    predicted_labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix> {
    if true_labels.len() != predicted_labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            predicted_labels.len()
        )));
    }
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&t, &p) in true_labels.iter().zip(predicted_labels) {
        for label in [t, p] {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    classes: num_classes,
                });
            }
        }
        counts[t][p] += 1;
    }
    ConfusionMatrix::from_counts(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub overall_accuracy: f64,
    pub balanced_accuracy: f64,
    /// True samples per class (confusion-matrix row sums).
    pub class_counts: Vec<u64>,
}

impl MetricsReport {
    /// Mean recall of the `n` classes with the lowest recall among classes
    /// with true samples.
    pub fn worst_recall_mean(&self, n: usize) -> f64 {
        let mut recalls: Vec<f64> = self
            .per_class_recall
            .iter()
            .zip(&self.class_counts)
            .filter(|(_, &c)| c > 0)
            .map(|(&r, _)| r)
            .collect();
        recalls.sort_by(f64::total_cmp);
        let take = n.min(recalls.len());
        if take == 0 {
            return 0.0;
        }
        recalls[..take].iter().sum::<f64>() / take as f64
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::EmptyEvaluation);
    }
    let k = cm.num_classes();
    let mut recall = Vec::with_capacity(k);
    let mut f1 = Vec::with_capacity(k);
    let mut class_counts = Vec::with_capacity(k);
    for c in 0..k {
        let tp = cm.counts[c][c] as f64;
        let rows = cm.row_sum(c);
        let cols = cm.col_sum(c);
        let r = if rows == 0 { 0.0 } else { tp / rows as f64 };
        let p = if cols == 0 { 0.0 } else { tp / cols as f64 };
        recall.push(r);
        f1.push(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        });
        class_counts.push(rows);
    }
    let trace: u64 = (0..k).map(|c| cm.counts[c][c]).sum();
    let present: Vec<f64> = recall
        .iter()
        .zip(&class_counts)
        .filter(|(_, &n)| n > 0)
        .map(|(&r, _)| r)
        .collect();
    Ok(MetricsReport {
        balanced_accuracy: present.iter().sum::<f64>() / present.len() as f64,
        overall_accuracy: trace as f64 / total as f64,
        per_class_recall: recall,
        per_class_f1: f1,
        class_counts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_example() {
        let cm = confusion(&[0, 0, 1, 1], &[0, 1, 1, 1], 2).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 1], vec![0, 2]]);
        let r = report(&cm).unwrap();
        assert_eq!(r.per_class_recall, vec![0.5, 1.0]);
        assert_eq!(r.balanced_accuracy, 0.75);
        assert_eq!(r.overall_accuracy, 0.75);
        assert!((r.per_class_f1[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.per_class_f1[1] - 0.8).abs() < 1e-15);
        assert_eq!(r.class_counts, vec![2, 2]);
    }

    #[test]
    fn perfect_predictions() {
        let labels = [0, 1, 2, 2, 1];
        let cm = confusion(&labels, &labels, 3).unwrap();
        assert_eq!(cm.counts(), &[vec![1, 0, 0], vec![0, 2, 0], vec![0, 0, 2]]);
        let r = report(&cm).unwrap();
        assert!(r
            .per_class_recall
            .iter()
            .chain(&r.per_class_f1)
            .all(|&v| v == 1.0));
        assert_eq!(r.balanced_accuracy, 1.0);
        assert_eq!(r.overall_accuracy, 1.0);
    }

    #[test]
    fn empty_and_invalid() {
        let cm = confusion(&[], &[], 3).unwrap();
        assert_eq!(cm.total(), 0);
        assert!(matches!(report(&cm), Err(Error::EmptyEvaluation)));
        assert!(matches!(
            confusion(&[0, 3], &[0, 1], 3),
            Err(Error::LabelOutOfRange { label: 3, .. })
        ));
        assert!(confusion(&[0], &[0, 1], 3).is_err());
    }

    #[test]
    fn absent_class_excluded_from_balanced_accuracy() {
        // class 2 never occurs in the truth set but is predicted once
        let cm = confusion(&[0, 0, 1], &[0, 2, 1], 3).unwrap();
        let r = report(&cm).unwrap();
        assert_eq!(r.balanced_accuracy, (0.5 + 1.0) / 2.0);
        assert_eq!(r.per_class_recall[2], 0.0);
        assert_eq!(r.per_class_f1[2], 0.0);
    }

    #[test]
    fn duplicating_a_class_keeps_balanced_accuracy() {
        let truth = [0, 0, 0, 1, 1, 2];
        let pred = [0, 1, 0, 1, 2, 2];
        let base = report(&confusion(&truth, &pred, 3).unwrap()).unwrap();
        let mut t2 = truth.to_vec();
        let mut p2 = pred.to_vec();
        t2.extend([1, 1]);
        p2.extend([1, 2]);
        let dup = report(&confusion(&t2, &p2, 3).unwrap()).unwrap();
        assert_eq!(base.balanced_accuracy, dup.balanced_accuracy);
        assert_ne!(base.overall_accuracy, dup.overall_accuracy);
    }

    #[test]
    fn worst_recall() {
        let r = MetricsReport {
            per_class_recall: vec![0.9, 0.1, 0.5, 0.3, 0.0],
            per_class_f1: vec![0.0; 5],
            overall_accuracy: 0.0,
            balanced_accuracy: 0.0,
            class_counts: vec![5, 5, 5, 5, 0],
        };
        assert!((r.worst_recall_mean(3) - 0.3).abs() < 1e-15);
    }

    fn matrix_strategy() -> impl Strategy<Value = Vec<Vec<u64>>> {
        (2usize..6).prop_flat_map(|k| {
            prop::collection::vec(prop::collection::vec(0u64..20, k), k)
                .prop_filter("non-empty", |m| m.iter().flatten().sum::<u64>() > 0)
        })
    }

    proptest! {
        #[test]
        fn row_scaling_invariance(m in matrix_strategy(), row in 0usize..6, factor in 1u64..5) {
            let cm = ConfusionMatrix::from_counts(m.clone()).unwrap();
            let base = report(&cm).unwrap();
            let mut scaled = m;
            let row = row % scaled.len();
            scaled[row].iter_mut().for_each(|v| *v *= factor);
            let r = report(&ConfusionMatrix::from_counts(scaled).unwrap()).unwrap();
            prop_assert!((r.balanced_accuracy - base.balanced_accuracy).abs() <= 1e-12);
        }

        #[test]
        fn overall_is_count_weighted_recall(m in matrix_strategy()) {
            let r = report(&ConfusionMatrix::from_counts(m).unwrap()).unwrap();
            let total: u64 = r.class_counts.iter().sum();
            let weighted: f64 = r.per_class_recall.iter().zip(&r.class_counts)
                .map(|(&rec, &n)| rec * n as f64).sum::<f64>() / total as f64;
            prop_assert!((weighted - r.overall_accuracy).abs() <= 1e-12);
            for v in r.per_class_recall.iter().chain(&r.per_class_f1)
                .chain([&r.overall_accuracy, &r.balanced_accuracy]) {
                prop_assert!((0.0..=1.0).contains(v));
            }
        }

        #[test]
        fn balanced_rows_give_equal_accuracies(k in 2usize..6, n in 1u64..10, seed in any::<u64>()) {
            // each row distributes n samples across columns deterministically from seed
            let mut state = seed;
            let m: Vec<Vec<u64>> = (0..k).map(|_| {
                let mut row = vec![0u64; k];
                for _ in 0..n {
                    state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    row[(state >> 33) as usize % k] += 1;
                }
                row
            }).collect();
            let r = report(&ConfusionMatrix::from_counts(m).unwrap()).unwrap();
            prop_assert!((r.overall_accuracy - r.balanced_accuracy).abs() <= 1e-12);
        }
    }
}
