use serde::Serialize;

use crate::error::{contract, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self { k, counts: vec![0; k * k] }
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.k + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|c| self.get(c, c)).sum()
    }

    pub fn row_sum(&self, truth: usize) -> u64 {
        (0..self.k).map(|p| self.get(truth, p)).sum()
    }

    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.k).map(|t| self.get(t, pred)).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub confusion: ConfusionMatrix,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro precision / recall / F1, averaged over the classes
/// that occur among labels or predictions.
pub fn classification_metrics(preds: &[usize], labels: &[usize], k: usize) -> Result<ClassificationMetrics> {
    if preds.len() != labels.len() || preds.is_empty() {
        contract!("need equal, non-empty prediction and label lists ({} vs {})", preds.len(), labels.len());
    }
    let mut cm = ConfusionMatrix::new(k);
    for (&p, &t) in preds.iter().zip(labels) {
        if p >= k || t >= k {
            contract!("class id out of range for K={k}: pred {p}, label {t}");
        }
        cm.counts[t * k + p] += 1;
    }
    let (mut sp, mut sr, mut sf, mut n) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..k {
        let (row, col) = (cm.row_sum(c), cm.col_sum(c));
        if row == 0 && col == 0 {
            continue;
        }
        let tp = cm.get(c, c);
        let p = ratio(tp, col);
        let r = ratio(tp, row);
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        sp += p;
        sr += r;
        sf += f;
        n += 1;
    }
    let n = n as f64;
    Ok(ClassificationMetrics {
        accuracy: ratio(cm.trace(), cm.total()),
        macro_precision: sp / n,
        macro_recall: sr / n,
        macro_f1: sf / n,
        confusion: cm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_fixture() {
        let m = classification_metrics(&[1, 1, 0], &[1, 0, 0], 2).unwrap();
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-12);
        assert!((m.macro_precision - 0.75).abs() < 1e-12);
        assert!((m.macro_recall - 0.75).abs() < 1e-12);
        assert!((m.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect() {
        let m = classification_metrics(&[0, 2, 2], &[0, 2, 2], 5).unwrap();
        assert_eq!((m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn bad_input() {
        assert!(classification_metrics(&[0], &[0, 1], 2).is_err());
        assert!(classification_metrics(&[], &[], 2).is_err());
        assert!(classification_metrics(&[2], &[0], 2).is_err());
    }
}
