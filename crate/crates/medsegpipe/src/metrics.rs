//! Segmentation losses and evaluation metrics: Dice (hard, soft, class-wise),
//! Jaccard, Tversky loss, categorical cross-entropy and the combined loss.
//!
//! All reductions accumulate in double precision. Soft metrics stabilize
//! empty classes with an epsilon in both numerator and denominator; hard
//! metrics score a class absent from both maps as 1.0.

use crate::error::{Error, Result};
use crate::volume::{ClassMap, ScoreVolume};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const CROSSENTROPY_CLAMP: f64 = 1e-7;

/// Loss selected for training.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    Tversky,
    CrossEntropy,
    Combined,
}

impl LossKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Tversky => "tversky",
            Self::CrossEntropy => "crossentropy",
            Self::Combined => "combined",
        }
    }
}

/// A training loss plus its Tversky weights (ignored by the other kinds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSpec {
    pub kind: LossKind,
    pub tversky_alpha: f64,
    pub tversky_beta: f64,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self {
            kind: LossKind::Tversky,
            tversky_alpha: 0.5,
            tversky_beta: 0.5,
        }
    }
}

impl LossSpec {
    pub fn new(kind: LossKind, tversky_alpha: f64, tversky_beta: f64) -> Self {
        Self {
            kind,
            tversky_alpha,
            tversky_beta,
        }
    }
}

/// One-vs-rest confusion counts for a single class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub true_pos: u64,
    pub false_pos: u64,
    pub false_neg: u64,
    pub true_neg: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.true_pos + self.false_pos + self.false_neg + self.true_neg
    }
}

fn check_shapes(pred: &ClassMap, truth: &ClassMap) -> Result<()> {
    if pred.shape() != truth.shape() {
        return Err(Error::ShapeMismatch(format!(
            "prediction {:?} vs truth {:?}",
            pred.shape(),
            truth.shape()
        )));
    }
    Ok(())
}

fn check_score_shapes(pred: &ScoreVolume, truth: &ScoreVolume) -> Result<()> {
    if pred.shape() != truth.shape() || pred.n_classes() != truth.n_classes() {
        return Err(Error::ShapeMismatch(format!(
            "scores {:?}x{} vs truth {:?}x{}",
            pred.shape(),
            pred.n_classes(),
            truth.shape(),
            truth.n_classes()
        )));
    }
    Ok(())
}

/// Count tp/fp/fn/tn of class `c`, one-vs-rest.
pub fn confusion_counts(pred: &ClassMap, truth: &ClassMap, c: u32) -> Result<ConfusionCounts> {
    check_shapes(pred, truth)?;
    let mut counts = ConfusionCounts {
        true_pos: 0,
        false_pos: 0,
        false_neg: 0,
        true_neg: 0,
    };
    for (&p, &t) in pred.data().iter().zip(truth.data()) {
        match (p == c, t == c) {
            (true, true) => counts.true_pos += 1,
            (true, false) => counts.false_pos += 1,
            (false, true) => counts.false_neg += 1,
            (false, false) => counts.true_neg += 1,
        }
    }
    Ok(counts)
}

fn dice_from_counts(c: ConfusionCounts) -> f64 {
    let denom = 2 * c.true_pos + c.false_pos + c.false_neg;
    if denom == 0 {
        1.0
    } else {
        2.0 * c.true_pos as f64 / denom as f64
    }
}

/// Hard Dice coefficient of one class: `2 tp / (2 tp + fp + fn)`.
/// A class absent from both maps scores 1.0.
pub fn dice_hard(pred: &ClassMap, truth: &ClassMap, c: u32) -> Result<f64> {
    Ok(dice_from_counts(confusion_counts(pred, truth, c)?))
}

/// Hard Dice per class id, in class order.
pub fn dice_classwise(pred: &ClassMap, truth: &ClassMap) -> Result<Vec<f64>> {
    check_shapes(pred, truth)?;
    (0..truth.n_classes() as u32)
        .map(|c| dice_hard(pred, truth, c))
        .collect()
}

/// Jaccard index of one class: `tp / (tp + fp + fn)`; both-empty scores 1.0.
pub fn jaccard(pred: &ClassMap, truth: &ClassMap, c: u32) -> Result<f64> {
    let counts = confusion_counts(pred, truth, c)?;
    let denom = counts.true_pos + counts.false_pos + counts.false_neg;
    if denom == 0 {
        Ok(1.0)
    } else {
        Ok(counts.true_pos as f64 / denom as f64)
    }
}

/// Per-class soft Dice values `(2 sum(p*g) + eps) / (sum(p) + sum(g) + eps)`.
pub fn dice_soft_classwise(pred: &ScoreVolume, truth: &ScoreVolume, eps: f64) -> Result<Vec<f64>> {
    check_score_shapes(pred, truth)?;
    let voxels = pred.voxels();
    let mut out = Vec::with_capacity(pred.n_classes());
    for c in 0..pred.n_classes() {
        let (mut inter, mut p_sum, mut g_sum) = (0f64, 0f64, 0f64);
        let pc = &pred.data()[c * voxels..(c + 1) * voxels];
        let gc = &truth.data()[c * voxels..(c + 1) * voxels];
        for (&p, &g) in pc.iter().zip(gc) {
            let (p, g) = (p as f64, g as f64);
            inter += p * g;
            p_sum += p;
            g_sum += g;
        }
        out.push((2.0 * inter + eps) / (p_sum + g_sum + eps));
    }
    Ok(out)
}

/// Soft Dice: unweighted mean over the per-class values.
pub fn dice_soft(pred: &ScoreVolume, truth: &ScoreVolume, eps: f64) -> Result<f64> {
    let per_class = dice_soft_classwise(pred, truth, eps)?;
    Ok(per_class.iter().sum::<f64>() / per_class.len() as f64)
}

/// Tversky loss `1 - mean_c TI_c` with
/// `TI_c = (I + eps) / (I + alpha*FP + beta*FN + eps)` computed on soft
/// scores. `alpha = beta = 0.5` makes the index coincide with soft Dice
/// (when called with half of the Dice epsilon).
pub fn tversky_loss(
    pred: &ScoreVolume,
    truth: &ScoreVolume,
    alpha: f64,
    beta: f64,
    eps: f64,
) -> Result<f64> {
    check_score_shapes(pred, truth)?;
    let voxels = pred.voxels();
    let mut index_sum = 0f64;
    for c in 0..pred.n_classes() {
        let (mut inter, mut fp, mut fneg) = (0f64, 0f64, 0f64);
        let pc = &pred.data()[c * voxels..(c + 1) * voxels];
        let gc = &truth.data()[c * voxels..(c + 1) * voxels];
        for (&p, &g) in pc.iter().zip(gc) {
            let (p, g) = (p as f64, g as f64);
            inter += p * g;
            fp += p * (1.0 - g);
            fneg += (1.0 - p) * g;
        }
        index_sum += (inter + eps) / (inter + alpha * fp + beta * fneg + eps);
    }
    Ok(1.0 - index_sum / pred.n_classes() as f64)
}

/// Mean over voxels of `-sum_c g_c * log(p_c)`, with scores clamped into
/// `[1e-7, 1 - 1e-7]` before the log.
pub fn categorical_crossentropy(pred: &ScoreVolume, truth: &ScoreVolume) -> Result<f64> {
    check_score_shapes(pred, truth)?;
    let voxels = pred.voxels();
    let mut total = 0f64;
    for c in 0..pred.n_classes() {
        let pc = &pred.data()[c * voxels..(c + 1) * voxels];
        let gc = &truth.data()[c * voxels..(c + 1) * voxels];
        for (&p, &g) in pc.iter().zip(gc) {
            if g != 0.0 {
                let p = (p as f64).clamp(CROSSENTROPY_CLAMP, 1.0 - CROSSENTROPY_CLAMP);
                total -= g as f64 * p.ln();
            }
        }
    }
    Ok(total / voxels as f64)
}

/// Cross-entropy minus soft Dice; lower is better and perfect predictions
/// approach -1.
pub fn combined_loss(pred: &ScoreVolume, truth: &ScoreVolume) -> Result<f64> {
    Ok(categorical_crossentropy(pred, truth)? - dice_soft(pred, truth, DEFAULT_EPS)?)
}
