//! Per-class precision/recall/F1 (in percent) and their macro average.

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub true_positives: Vec<usize>,
    pub false_positives: Vec<usize>,
    pub false_negatives: Vec<usize>,
}

impl ConfusionCounts {
    pub fn new(n_classes: usize) -> Self {
        Self {
            true_positives: vec![0; n_classes],
            false_positives: vec![0; n_classes],
            false_negatives: vec![0; n_classes],
        }
    }

    pub fn from_predictions(truth: &[usize], predicted: &[usize], n_classes: usize) -> Self {
        assert_eq!(truth.len(), predicted.len());
        let mut c = Self::new(n_classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            if t == p {
                c.true_positives[t] += 1;
            } else {
                c.false_positives[p] += 1;
                c.false_negatives[t] += 1;
            }
        }
        c
    }

    pub fn n_classes(&self) -> usize {
        self.true_positives.len()
    }

    /// Classes seen in the truth or in the predictions.
    pub fn present_classes(&self) -> Vec<usize> {
        (0..self.n_classes())
            .filter(|&c| self.true_positives[c] + self.false_positives[c] + self.false_negatives[c] > 0)
            .collect()
    }

    /// Per-class F1 over the present classes.
    pub fn f1_scores(&self) -> Vec<f64> {
        self.present_classes()
            .into_iter()
            .map(|c| precision_recall_f1(self, c).f1)
            .collect()
    }

    pub fn macro_f1(&self) -> f64 {
        macro_f1(&self.f1_scores())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Percentages; an empty denominator gives 0.
pub fn precision_recall_f1(counts: &ConfusionCounts, class: usize) -> ClassScores {
    let tp = counts.true_positives[class] as f64;
    let ratio = |den: f64| if den > 0.0 { tp / den } else { 0.0 };
    let precision = ratio(tp + counts.false_positives[class] as f64);
    let recall = ratio(tp + counts.false_negatives[class] as f64);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    ClassScores {
        precision: 100.0 * precision,
        recall: 100.0 * recall,
        f1: 100.0 * f1,
    }
}

pub fn macro_f1(f1_scores: &[f64]) -> f64 {
    if f1_scores.is_empty() {
        return 0.0;
    }
    f1_scores.iter().sum::<f64>() / f1_scores.len() as f64
}

pub fn accuracy(truth: &[usize], predicted: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// Mean over targets of the positive-class F1 of each 0/1 indicator, skipping
/// targets that are neither present nor predicted.
pub fn indicator_macro_f1(truth: &[Vec<bool>], predicted: &[Vec<bool>]) -> f64 {
    let n_targets = truth.first().map_or(0, Vec::len);
    let mut f1s = Vec::new();
    for j in 0..n_targets {
        let mut c = ConfusionCounts::new(2);
        for (t, p) in truth.iter().zip(predicted) {
            match (t[j], p[j]) {
                (true, true) => c.true_positives[1] += 1,
                (false, true) => c.false_positives[1] += 1,
                (true, false) => c.false_negatives[1] += 1,
                (false, false) => {}
            }
        }
        if c.present_classes().contains(&1) {
            f1s.push(precision_recall_f1(&c, 1).f1);
        }
    }
    macro_f1(&f1s)
}
