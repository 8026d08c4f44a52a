//! Segmentation training losses: class-balanced weights and the masked,
//! weighted negative log likelihood.
//!
//! The same loss serves both supervised stages — dense ground truth labels
//! and pseudo labels differ only in how many pixels are UNKNOWN, and UNKNOWN
//! pixels never contribute. Reduction is the mean over contributing pixels,
//! so the value is comparable across image sizes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::class::{ClassId, NUM_CLASSES};
use crate::label::LabelMap;
use crate::score::ScoreVolume;

#[derive(Debug, Error)]
pub enum LossError {
    #[error("not a class distribution: {0}")]
    BadDistribution(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("every pixel is UNKNOWN; the loss is undefined")]
    AllPixelsUnknown,
}

/// Positive per-class loss weights.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassWeights {
    w: [f64; NUM_CLASSES],
}

impl ClassWeights {
    pub fn new(w: [f64; NUM_CLASSES]) -> Result<ClassWeights, LossError> {
        if let Some(i) = w.iter().position(|v| !v.is_finite() || *v <= 0.0) {
            return Err(LossError::BadDistribution(format!(
                "weight {i} is {}; weights must be positive and finite",
                w[i]
            )));
        }
        Ok(ClassWeights { w })
    }

    /// All-ones weights (plain NLL).
    pub fn uniform() -> ClassWeights {
        ClassWeights { w: [1.0; NUM_CLASSES] }
    }

    pub fn get(&self, class: ClassId) -> f64 {
        self.w[class.index()]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.w
    }
}

impl TryFrom<Vec<f64>> for ClassWeights {
    type Error = String;

    fn try_from(v: Vec<f64>) -> Result<ClassWeights, String> {
        let arr: [f64; NUM_CLASSES] = v
            .try_into()
            .map_err(|v: Vec<f64>| format!("expected {NUM_CLASSES} weights, got {}", v.len()))?;
        ClassWeights::new(arr).map_err(|e| e.to_string())
    }
}

impl From<ClassWeights> for Vec<f64> {
    fn from(w: ClassWeights) -> Vec<f64> {
        w.w.to_vec()
    }
}

/// A loss value together with how many pixels produced it.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct LossReport {
    pub loss: f64,
    pub pixels: usize,
}

/// Inverse-log class balancing: `w_c = 1 / ln(1.02 + p_c)` from per-class
/// pixel frequencies. Rare classes get weights up to ~50; a class owning
/// every pixel still gets ~1.42, so no weight vanishes.
pub fn class_balance_weights(freq: &[f64]) -> Result<ClassWeights, LossError> {
    if freq.len() != NUM_CLASSES {
        return Err(LossError::BadDistribution(format!(
            "expected {NUM_CLASSES} frequencies, got {}",
            freq.len()
        )));
    }
    if let Some(i) = freq.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(LossError::BadDistribution(format!(
            "frequency {i} is {}",
            freq[i]
        )));
    }
    let sum: f64 = freq.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(LossError::BadDistribution(format!(
            "frequencies sum to {sum}, not 1"
        )));
    }
    let mut w = [0.0; NUM_CLASSES];
    for (wc, &p) in w.iter_mut().zip(freq) {
        *wc = 1.0 / (1.02 + p).ln();
    }
    ClassWeights::new(w)
}

/// Mean weighted negative log likelihood over the labeled pixels:
/// `-w_y · log softmax(logits)_y` per pixel, UNKNOWN pixels skipped.
pub fn weighted_nll(
    logits: &ScoreVolume,
    labels: &LabelMap,
    w: &ClassWeights,
) -> Result<LossReport, LossError> {
    let (report, _) = nll_impl(logits, labels, w, false)?;
    Ok(report)
}

/// [`weighted_nll`] plus its analytic gradient with respect to every logit,
/// laid out like the volume's own data (H×W×13, channel-minor). Gradients at
/// UNKNOWN pixels are zero.
pub fn weighted_nll_with_grad(
    logits: &ScoreVolume,
    labels: &LabelMap,
    w: &ClassWeights,
) -> Result<(LossReport, Vec<f64>), LossError> {
    let (report, grad) = nll_impl(logits, labels, w, true)?;
    Ok((report, grad.expect("gradient requested")))
}

fn nll_impl(
    logits: &ScoreVolume,
    labels: &LabelMap,
    w: &ClassWeights,
    want_grad: bool,
) -> Result<(LossReport, Option<Vec<f64>>), LossError> {
    if logits.width() != labels.width() || logits.height() != labels.height() {
        return Err(LossError::ShapeMismatch(format!(
            "logits {}x{} vs labels {}x{}",
            logits.width(),
            logits.height(),
            labels.width(),
            labels.height()
        )));
    }
    let count = labels.labeled_count();
    if count == 0 {
        return Err(LossError::AllPixelsUnknown);
    }

    let mut total = 0.0;
    let mut grad = want_grad.then(|| vec![0.0; logits.as_slice().len()]);
    for y in 0..logits.height() {
        for x in 0..logits.width() {
            let Some(class) = labels.get(x, y) else {
                continue;
            };
            let px = logits.pixel(x, y);
            // Stable log-softmax: log p_c = (v_c - m) - ln Σ exp(v - m).
            let m = px.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = px.iter().map(|&v| (v - m).exp()).sum();
            let log_z = z.ln();
            let wy = w.get(class);
            total += wy * (log_z - (px[class.index()] - m));
            if let Some(grad) = grad.as_mut() {
                let base = (y * logits.width() + x) * NUM_CLASSES;
                for c in 0..NUM_CLASSES {
                    let softmax_c = (px[c] - m).exp() / z;
                    let delta = if c == class.index() { 1.0 } else { 0.0 };
                    grad[base + c] = wy * (softmax_c - delta) / count as f64;
                }
            }
        }
    }
    Ok((
        LossReport {
            loss: total / count as f64,
            pixels: count,
        },
        grad,
    ))
}
