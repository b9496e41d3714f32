//! Binary classification metrics with Overfitting as the positive class, and
//! the training loss.

use apsg::Label;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PROB_CLAMP: f64 = 1e-12;

/// Cross-entropy of a predicted Overfitting probability `p` against `y ∈ {0,1}`,
/// with `p` clamped to `[1e-12, 1 − 1e-12]`.
pub fn loss(p: f64, y: u8) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    let y = f64::from(y);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no predictions to score")]
    EmptyInput,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
}

/// Raw confusion counts and the ratios derived from them; a ratio whose
/// denominator is zero is `None` (serialized as `null`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

impl Metrics {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let accuracy = ratio(tp + tn, tp + fp + fn_ + tn);
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = match (precision, recall) {
            (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
            _ => None,
        };
        Metrics {
            tp,
            fp,
            fn_,
            tn,
            accuracy,
            precision,
            recall,
            f1,
        }
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn compute_metrics(predictions: &[Label], labels: &[Label]) -> Result<Metrics, MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (p, y) in predictions.iter().zip(labels) {
        match (p, y) {
            (Label::Overfitting, Label::Overfitting) => tp += 1,
            (Label::Overfitting, Label::Correct) => fp += 1,
            (Label::Correct, Label::Overfitting) => fn_ += 1,
            (Label::Correct, Label::Correct) => tn += 1,
        }
    }
    Ok(Metrics::from_counts(tp, fp, fn_, tn))
}

/// Unweighted per-metric mean over the folds where that metric is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    /// Number of folds contributing to each mean, in field order.
    pub defined_folds: [usize; 4],
}

fn mean_defined(xs: impl Iterator<Item = Option<f64>>) -> (Option<f64>, usize) {
    let vals: Vec<f64> = xs.flatten().collect();
    let n = vals.len();
    ((n > 0).then(|| vals.iter().sum::<f64>() / n as f64), n)
}

pub fn mean_metrics(folds: &[Metrics]) -> MeanMetrics {
    let (accuracy, na) = mean_defined(folds.iter().map(|m| m.accuracy));
    let (precision, np) = mean_defined(folds.iter().map(|m| m.precision));
    let (recall, nr) = mean_defined(folds.iter().map(|m| m.recall));
    let (f1, nf) = mean_defined(folds.iter().map(|m| m.f1));
    MeanMetrics {
        accuracy,
        precision,
        recall,
        f1,
        defined_folds: [na, np, nr, nf],
    }
}

/// Metrics of the summed confusion counts.
pub fn pooled_metrics(folds: &[Metrics]) -> Metrics {
    let sum = |f: fn(&Metrics) -> usize| folds.iter().map(f).sum();
    Metrics::from_counts(sum(|m| m.tp), sum(|m| m.fp), sum(|m| m.fn_), sum(|m| m.tn))
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Correct as C, Overfitting as O};

    #[test]
    fn loss_examples() {
        assert!(loss(1.0 - 1e-12, 1) < 1e-11);
        assert!((loss(0.5, 1) - 2f64.ln()).abs() < 1e-15);
        assert!((loss(0.9, 0) - std::f64::consts::LN_10).abs() < 1e-12);
        assert!(loss(0.0, 1).is_finite());
        assert!(loss(1.0, 0).is_finite());
    }

    #[test]
    fn metric_examples() {
        let m = compute_metrics(&[O, O, C, C], &[O, O, C, C]).unwrap();
        assert_eq!(
            (m.accuracy, m.precision, m.recall, m.f1),
            (Some(1.0), Some(1.0), Some(1.0), Some(1.0))
        );
        let m = compute_metrics(&[O, O, O, O], &[O, O, O, C]).unwrap();
        assert_eq!((m.tp, m.fp, m.fn_, m.tn), (3, 1, 0, 0));
        assert_eq!(m.precision, Some(0.75));
        assert!((m.f1.unwrap() - 6.0 / 7.0).abs() < 1e-15);
        let m = compute_metrics(&[C, C], &[C, C]).unwrap();
        assert_eq!((m.precision, m.recall, m.f1), (None, None, None));
        assert_eq!(compute_metrics(&[], &[]), Err(MetricsError::EmptyInput));
        assert!(compute_metrics(&[C], &[]).is_err());
    }

    #[test]
    fn json_uses_null_and_fn_key() {
        let json = serde_json::to_string(&Metrics::from_counts(0, 0, 0, 2)).unwrap();
        assert!(json.contains("\"fn\":0"));
        assert!(json.contains("\"precision\":null"));
    }

    #[test]
    fn means_skip_undefined() {
        let folds = [
            Metrics::from_counts(1, 0, 0, 1),
            Metrics::from_counts(0, 0, 0, 2),
        ];
        let mean = mean_metrics(&folds);
        assert_eq!(mean.accuracy, Some(1.0));
        assert_eq!(mean.precision, Some(1.0));
        assert_eq!(mean.defined_folds, [2, 1, 1, 1]);
        assert_eq!(pooled_metrics(&folds), Metrics::from_counts(1, 0, 0, 3));
    }
}
