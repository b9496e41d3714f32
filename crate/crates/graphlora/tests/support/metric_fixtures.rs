//! Prediction/label fixtures with confusion matrices and ratios counted by
//! hand. `O` is Overfitting (the positive class) and `C` is Correct. Ratios are
//! written as numerator/denominator pairs; `None` marks a zero denominator.

#![allow(dead_code)]

use apsg::Label;
use graphlora::metrics::{compute_metrics, Metrics};

pub struct Fixture {
    pub name: &'static str,
    pub predicted: &'static str,
    pub labels: &'static str,
    /// `(tp, fp, fn, tn)`.
    pub counts: (usize, usize, usize, usize),
    pub accuracy: Option<(u32, u32)>,
    pub precision: Option<(u32, u32)>,
    pub recall: Option<(u32, u32)>,
    pub f1: Option<(u32, u32)>,
}

pub const FIXTURES: [Fixture; 10] = [
    Fixture {
        name: "balanced all right",
        predicted: "OOCC",
        labels: "OOCC",
        counts: (2, 0, 0, 2),
        accuracy: Some((4, 4)),
        precision: Some((2, 2)),
        recall: Some((2, 2)),
        f1: Some((4, 4)),
    },
    Fixture {
        name: "balanced all wrong",
        predicted: "OOCC",
        labels: "CCOO",
        counts: (0, 2, 2, 0),
        accuracy: Some((0, 4)),
        precision: Some((0, 2)),
        recall: Some((0, 2)),
        f1: None,
    },
    Fixture {
        name: "never predicts overfitting",
        predicted: "CCC",
        labels: "OCC",
        counts: (0, 0, 1, 2),
        accuracy: Some((2, 3)),
        precision: None,
        recall: Some((0, 1)),
        f1: None,
    },
    Fixture {
        name: "no overfitting labels",
        predicted: "OCC",
        labels: "CCC",
        counts: (0, 1, 0, 2),
        accuracy: Some((2, 3)),
        precision: Some((0, 1)),
        recall: None,
        f1: None,
    },
    Fixture {
        name: "no positives anywhere",
        predicted: "CCCC",
        labels: "CCCC",
        counts: (0, 0, 0, 4),
        accuracy: Some((4, 4)),
        precision: None,
        recall: None,
        f1: None,
    },
    Fixture {
        name: "all positive on three positives and one negative",
        predicted: "OOOO",
        labels: "OOOC",
        counts: (3, 1, 0, 0),
        accuracy: Some((3, 4)),
        precision: Some((3, 4)),
        recall: Some((3, 3)),
        f1: Some((6, 7)),
    },
    Fixture {
        name: "mixed ten",
        predicted: "OOOCCCCOOC",
        labels: "OCOCOCOOCC",
        counts: (3, 2, 2, 3),
        accuracy: Some((6, 10)),
        precision: Some((3, 5)),
        recall: Some((3, 5)),
        f1: Some((6, 10)),
    },
    Fixture {
        name: "single false positive",
        predicted: "O",
        labels: "C",
        counts: (0, 1, 0, 0),
        accuracy: Some((0, 1)),
        precision: Some((0, 1)),
        recall: None,
        f1: None,
    },
    Fixture {
        name: "single false negative",
        predicted: "C",
        labels: "O",
        counts: (0, 0, 1, 0),
        accuracy: Some((0, 1)),
        precision: None,
        recall: Some((0, 1)),
        f1: None,
    },
    Fixture {
        name: "imbalanced eight",
        predicted: "OOOOOOOC",
        labels: "OOOOOCCO",
        counts: (5, 2, 1, 0),
        accuracy: Some((5, 8)),
        precision: Some((5, 7)),
        recall: Some((5, 6)),
        f1: Some((10, 13)),
    },
];

pub fn labels(s: &str) -> Vec<Label> {
    s.chars()
        .map(|c| match c {
            'O' => Label::Overfitting,
            'C' => Label::Correct,
            other => panic!("fixture character {other:?}"),
        })
        .collect()
}

fn frac(r: Option<(u32, u32)>) -> Option<f64> {
    r.map(|(n, d)| f64::from(n) / f64::from(d))
}

/// Mismatches between `compute_metrics` and the hand-counted fixture. Counts,
/// accuracy, precision and recall must match bit for bit; F1 is evaluated by
/// the implementation as `2PR/(P+R)` and by the fixture as a reduced fraction,
/// so it may differ by rounding in the last place.
pub fn check(f: &Fixture) -> Vec<String> {
    let got: Metrics = match compute_metrics(&labels(f.predicted), &labels(f.labels)) {
        Ok(m) => m,
        Err(e) => return vec![format!("{}: {e}", f.name)],
    };
    let mut bad = Vec::new();
    if (got.tp, got.fp, got.fn_, got.tn) != f.counts {
        bad.push(format!(
            "{}: counts {:?}",
            f.name,
            (got.tp, got.fp, got.fn_, got.tn)
        ));
    }
    for (what, g, want) in [
        ("accuracy", got.accuracy, frac(f.accuracy)),
        ("precision", got.precision, frac(f.precision)),
        ("recall", got.recall, frac(f.recall)),
    ] {
        if g != want {
            bad.push(format!("{}: {what} {g:?}, expected {want:?}", f.name));
        }
    }
    match (got.f1, frac(f.f1)) {
        (None, None) => {}
        (Some(g), Some(w)) if (g - w).abs() <= 4.0 * f64::EPSILON => {}
        (g, w) => bad.push(format!("{}: f1 {g:?}, expected {w:?}", f.name)),
    }
    bad
}
