//! Accuracy, confusion matrix and multi-class Matthews correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion counts, `counts[truth][pred]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_labels(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        check_lengths(pred, truth)?;
        let mut counts = vec![vec![0u64; num_classes]; num_classes];
        for (&p, &t) in pred.iter().zip(truth) {
            if p >= num_classes || t >= num_classes {
                return Err(Error::InvalidArgument(format!(
                    "label {} outside 0..{num_classes}",
                    p.max(t)
                )));
            }
            counts[t][p] += 1;
        }
        Ok(Self {
            num_classes,
            counts,
        })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|k| self.counts[k][k]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        self.trace() as f64 / self.total() as f64
    }

    /// Gorodkin's R_K statistic; 0 when either marginal is degenerate.
    pub fn mcc(&self) -> f64 {
        let k = self.num_classes;
        let s = self.total() as f64;
        let c = self.trace() as f64;
        let true_counts: Vec<f64> = self.counts.iter().map(|r| r.iter().sum::<u64>() as f64).collect();
        let pred_counts: Vec<f64> = (0..k)
            .map(|j| self.counts.iter().map(|r| r[j]).sum::<u64>() as f64)
            .collect();
        let pt: f64 = pred_counts.iter().zip(&true_counts).map(|(p, t)| p * t).sum();
        let pp: f64 = pred_counts.iter().map(|p| p * p).sum();
        let tt: f64 = true_counts.iter().map(|t| t * t).sum();
        let denom = ((s * s - pp) * (s * s - tt)).sqrt();
        if denom == 0.0 {
            return 0.0;
        }
        ((c * s - pt) / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub mcc: f64,
    pub confusion: ConfusionMatrix,
}

impl Metrics {
    pub fn compute(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<Self> {
        let confusion = ConfusionMatrix::from_labels(pred, truth, num_classes)?;
        Ok(Self {
            accuracy: confusion.accuracy(),
            mcc: confusion.mcc(),
            confusion,
        })
    }
}

fn check_lengths(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::LengthMismatch {
            left: pred.len(),
            right: truth.len(),
        });
    }
    Ok(())
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_lengths(pred, truth)?;
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

pub fn mcc(pred: &[usize], truth: &[usize], num_classes: usize) -> Result<f64> {
    Ok(ConfusionMatrix::from_labels(pred, truth, num_classes)?.mcc())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[0, 1, 0, 0]).unwrap(), 0.75);
        assert!(matches!(
            accuracy(&[0], &[0, 1]),
            Err(Error::LengthMismatch { .. })
        ));
        assert!(accuracy(&[], &[]).is_err());
    }

    #[test]
    fn mcc_examples() {
        assert_eq!(mcc(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap(), 1.0);
        assert_eq!(mcc(&[1, 1, 1, 1], &[0, 1, 0, 1], 2).unwrap(), 0.0);
        // TP=2, TN=1, FP=0, FN=1 with class 1 positive
        let truth = [1, 1, 1, 0];
        let pred = [1, 1, 0, 0];
        let expect = 2.0 / 12f64.sqrt();
        assert!((mcc(&pred, &truth, 2).unwrap() - expect).abs() < 1e-12);
        assert_eq!(mcc(&[1, 0], &[0, 1], 2).unwrap(), -1.0);
    }

    #[test]
    fn confusion_rows_sum_to_truth_counts() {
        let truth = [0, 0, 1, 2, 2, 2];
        let pred = [0, 1, 1, 2, 0, 2];
        let cm = ConfusionMatrix::from_labels(&pred, &truth, 3).unwrap();
        let rows: Vec<u64> = cm.counts.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 1, 3]);
        assert_eq!(cm.accuracy(), accuracy(&pred, &truth).unwrap());
    }
}
