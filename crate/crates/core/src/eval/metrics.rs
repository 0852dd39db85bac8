use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Pixel tallies with cloud as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

impl AddAssign for ConfusionCounts {
    fn add_assign(&mut self, o: Self) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.tn += o.tn;
        self.fn_ += o.fn_;
    }
}

impl Add for ConfusionCounts {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self += o;
        self
    }
}

impl std::iter::Sum for ConfusionCounts {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// Tally a predicted mask against the truth. Nonzero means cloud.
pub fn accumulate(pred: &[u8], truth: &[u8]) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(
            "accumulate",
            format!("prediction has {} pixels, truth {}", pred.len(), truth.len()),
        ));
    }
    let mut c = ConfusionCounts::default();
    for (&p, &t) in pred.iter().zip(truth) {
        match (p != 0, t != 0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tpr: f64,
    pub tnr: f64,
    pub miou: f64,
    pub accuracy: f64,
    pub iou_cloud: f64,
    pub iou_clear: f64,
}

// A ratio whose denominator is empty means the class was never present nor
// predicted; that counts as perfect.
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(c: &ConfusionCounts) -> Metrics {
    let iou_cloud = ratio(c.tp, c.tp + c.fp + c.fn_);
    let iou_clear = ratio(c.tn, c.tn + c.fp + c.fn_);
    Metrics {
        tpr: ratio(c.tp, c.tp + c.fn_),
        tnr: ratio(c.tn, c.tn + c.fp),
        miou: (iou_cloud + iou_clear) / 2.0,
        accuracy: ratio(c.tp + c.tn, c.total()),
        iou_cloud,
        iou_clear,
    }
}

impl Metrics {
    /// Componentwise mean, used for per-image averages.
    pub fn mean(items: &[Metrics]) -> Option<Metrics> {
        if items.is_empty() {
            return None;
        }
        let n = items.len() as f64;
        let avg = |f: fn(&Metrics) -> f64| items.iter().map(f).sum::<f64>() / n;
        Some(Metrics {
            tpr: avg(|m| m.tpr),
            tnr: avg(|m| m.tnr),
            miou: avg(|m| m.miou),
            accuracy: avg(|m| m.accuracy),
            iou_cloud: avg(|m| m.iou_cloud),
            iou_clear: avg(|m| m.iou_clear),
        })
    }
}

/// Area under the ROC curve for `scores` ranking positives (`labels == 1`)
/// above negatives, via the rank-sum statistic with averaged tie ranks.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::invalid("roc_auc", "scores and labels differ in length"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::invalid("roc_auc", "NaN score"));
    }
    let pos = labels.iter().filter(|&&l| l != 0).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i + 1;
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share their mean.
        let rank = (i + 1 + j) as f64 / 2.0;
        let hits = idx[i..j].iter().filter(|&&k| labels[k] != 0).count();
        rank_sum += rank * hits as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_arithmetic_case() {
        let c = ConfusionCounts { tp: 50, fn_: 10, tn: 30, fp: 10 };
        let m = metrics(&c);
        assert!((m.tpr - 0.83333).abs() < 1e-5);
        assert_eq!(m.tnr, 0.75);
        assert_eq!(m.accuracy, 0.8);
        assert!((m.iou_cloud - 0.71429).abs() < 1e-5);
        assert_eq!(m.iou_clear, 0.6);
        assert!((m.miou - 0.65714).abs() < 1e-5);
    }

    #[test]
    fn degenerate_all_cloud() {
        let all = vec![1u8; 16];
        let m = metrics(&accumulate(&all, &all).unwrap());
        assert_eq!((m.tpr, m.tnr, m.iou_clear, m.miou, m.accuracy), (1.0, 1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn inverted_prediction() {
        let truth = [1u8, 0, 1, 1, 0];
        let pred: Vec<u8> = truth.iter().map(|&t| 1 - t).collect();
        let c = accumulate(&pred, &truth).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
        assert!(accumulate(&pred[..3], &truth).is_err());
    }

    #[test]
    fn auc_known_values() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        // One inversion out of four pairs.
        assert_eq!(roc_auc(&[0.1, 0.6, 0.5, 0.9], &[0, 0, 1, 1]).unwrap(), 0.75);
    }
}
