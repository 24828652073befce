//! Dataset-level segmentation metrics: confusion matrices, per-class IoU,
//! mean IoU including background, and binarized object IoU.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::model::{LabelMask, PartTaxonomy};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    DimensionMismatch {
        pred: (usize, usize),
        gt: (usize, usize),
    },
    LabelOutOfRange {
        which: &'static str,
        index: usize,
        value: u8,
        max: u8,
    },
    EmptyMatrix,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::DimensionMismatch { pred, gt } => write!(
                f,
                "prediction is {}x{} but ground truth is {}x{}",
                pred.0, pred.1, gt.0, gt.1
            ),
            EvalError::LabelOutOfRange {
                which,
                index,
                value,
                max,
            } => {
                write!(
                    f,
                    "{which} mask label {value} at pixel {index} exceeds {max}"
                )
            }
            EvalError::EmptyMatrix => write!(f, "confusion matrix holds no pixels"),
        }
    }
}

impl core::error::Error for EvalError {}

/// Pixel counts indexed `[ground truth][prediction]`, summed over the
/// dataset. Accumulation is commutative, so per-image matrices may be
/// built in parallel and merged.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    label_count: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(label_count: usize) -> Self {
        assert!(label_count > 0);
        Self {
            label_count,
            counts: vec![0; label_count * label_count],
        }
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn count(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.label_count + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum over one ground-truth row.
    pub fn row_sum(&self, gt: usize) -> u64 {
        (0..self.label_count).map(|p| self.count(gt, p)).sum()
    }

    /// Sum over one prediction column.
    pub fn col_sum(&self, pred: usize) -> u64 {
        (0..self.label_count).map(|g| self.count(g, pred)).sum()
    }

    /// Adds one prediction/ground-truth mask pair into the matrix.
    pub fn accumulate(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<(), EvalError> {
        if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
            return Err(EvalError::DimensionMismatch {
                pred: (pred.width(), pred.height()),
                gt: (gt.width(), gt.height()),
            });
        }
        let max = (self.label_count - 1) as u8;
        for (index, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
            if p > max {
                return Err(EvalError::LabelOutOfRange {
                    which: "prediction",
                    index,
                    value: p,
                    max,
                });
            }
            if g > max {
                return Err(EvalError::LabelOutOfRange {
                    which: "ground truth",
                    index,
                    value: g,
                    max,
                });
            }
            self.counts[g as usize * self.label_count + p as usize] += 1;
        }
        Ok(())
    }

    /// Merges another matrix by element-wise addition.
    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.label_count, other.label_count);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

/// Per-class IoU (None for classes absent from both masks), their mean,
/// and the foreground-vs-background object IoU.
#[derive(Debug, Clone, PartialEq)]
pub struct IouReport {
    pub per_class: Vec<Option<f64>>,
    pub mean: Option<f64>,
    pub object: Option<f64>,
}

/// Arithmetic mean over the present classes; None when every class is
/// absent.
pub fn mean_present(per_class: &[Option<f64>]) -> Option<f64> {
    let present: Vec<f64> = per_class.iter().filter_map(|v| *v).collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

/// Computes the IoU report from a dataset-summed matrix.
///
/// `IoU_c = diag_c / (row_c + col_c - diag_c)`; the mean runs over all
/// `K + 1` classes including background, skipping classes absent from both
/// ground truth and prediction. The object IoU binarizes all part labels
/// into one foreground class first.
pub fn iou_report(
    matrix: &ConfusionMatrix,
    taxonomy: &PartTaxonomy,
) -> Result<IouReport, EvalError> {
    assert_eq!(
        matrix.label_count(),
        taxonomy.label_count(),
        "matrix/taxonomy label mismatch"
    );
    if matrix.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let labels = matrix.label_count();
    let per_class: Vec<Option<f64>> = (0..labels)
        .map(|c| {
            let diag = matrix.count(c, c);
            let union = matrix.row_sum(c) + matrix.col_sum(c) - diag;
            if union == 0 {
                None
            } else {
                Some(diag as f64 / union as f64)
            }
        })
        .collect();
    let mean = mean_present(&per_class);

    // binarized foreground: any part label
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for g in 0..labels {
        for p in 0..labels {
            let c = matrix.count(g, p);
            match (g > 0, p > 0) {
                (true, true) => tp += c,
                (false, true) => fp += c,
                (true, false) => fn_ += c,
                (false, false) => {}
            }
        }
    }
    let union = tp + fp + fn_;
    let object = if union == 0 {
        None
    } else {
        Some(tp as f64 / union as f64)
    };
    Ok(IouReport {
        per_class,
        mean,
        object,
    })
}
