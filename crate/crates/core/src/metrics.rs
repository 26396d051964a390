//! Confusion matrices and macro-averaged F1.
//!
//! Every 0/0 ratio (precision, recall or F1 of a class with no relevant
//! samples) is defined as 0, so a class absent from both predictions and
//! truths drags the macro mean down by `1/10`.

use serde::{Deserialize, Serialize};

use crate::NUM_CLASSES;

#[derive(Debug, thiserror::Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("{predictions} predictions but {truths} truths")]
    LengthMismatch { predictions: usize, truths: usize },
    #[error("class {value} at position {index} is outside 0..{NUM_CLASSES}")]
    ClassOutOfRange { index: usize, value: usize },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
}

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; NUM_CLASSES]; NUM_CLASSES]) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[[u64; NUM_CLASSES]; NUM_CLASSES] {
        &self.counts
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }
}

pub fn confusion<P, Q>(predictions: &[P], truths: &[Q]) -> Result<ConfusionMatrix, MetricsError>
where
    P: Copy + Into<usize>,
    Q: Copy + Into<usize>,
{
    if predictions.len() != truths.len() {
        return Err(MetricsError::LengthMismatch { predictions: predictions.len(), truths: truths.len() });
    }
    let mut cm = ConfusionMatrix::default();
    for (index, (&p, &t)) in predictions.iter().zip(truths).enumerate() {
        let (p, t) = (p.into(), t.into());
        for value in [p, t] {
            if value >= NUM_CLASSES {
                return Err(MetricsError::ClassOutOfRange { index, value });
            }
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Number of samples whose true class is this one.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct F1Report {
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    /// Pooled over classes; equals accuracy for single-label predictions.
    pub micro_f1: f64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    ratio(2.0 * p * r, p + r)
}

pub fn macro_f1(cm: &ConfusionMatrix) -> Result<F1Report, MetricsError> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::EmptyMatrix);
    }
    let per_class: Vec<ClassScores> = (0..NUM_CLASSES)
        .map(|c| {
            let tp = cm.counts[c][c] as f64;
            let predicted: u64 = (0..NUM_CLASSES).map(|t| cm.counts[t][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted as f64);
            let recall = ratio(tp, support as f64);
            ClassScores { precision, recall, f1: harmonic(precision, recall), support }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|s| s.f1).sum::<f64>() / NUM_CLASSES as f64;
    let micro_f1 = cm.trace() as f64 / total as f64;
    Ok(F1Report { macro_f1, per_class, micro_f1 })
}

/// Shorthand: macro-F1 of `predictions` against `truths`.
pub fn macro_f1_of<P, Q>(predictions: &[P], truths: &[Q]) -> Result<f64, MetricsError>
where
    P: Copy + Into<usize>,
    Q: Copy + Into<usize>,
{
    Ok(macro_f1(&confusion(predictions, truths)?)?.macro_f1)
}
