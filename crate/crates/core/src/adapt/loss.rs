//! The three scalar losses of the adaptation game.
//!
//! `gan_loss` is the discriminator's objective for one direction:
//! `mean(log D(real)) + mean(log(1 - D(fake)))`. The same function serves
//! both directions — only which samples count as "real" changes. The
//! discriminator ascends it; the mappings descend the total objective.
//!
//! `cycle_loss` is the L1 roundtrip penalty tying the two mappings together,
//! and `total_objective` is the plain unweighted sum of all three terms.

use crate::adapt::{AdaptError, NormalizedDepthMap};

/// `mean(log real) + mean(log(1 - fake))`. Scores must already be clamped
/// inside (0, 1); the discriminator in this crate guarantees that.
///
/// All scores at 0.5 give `-2 ln 2`; a perfect discriminator approaches 0
/// from below.
pub fn gan_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64, AdaptError> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(AdaptError::EmptyBatch);
    }
    let real: f64 = real_scores.iter().map(|&s| s.ln()).sum::<f64>() / real_scores.len() as f64;
    let fake: f64 =
        fake_scores.iter().map(|&s| (1.0 - s).ln()).sum::<f64>() / fake_scores.len() as f64;
    Ok(real + fake)
}

/// Mean L1 roundtrip error, both directions:
/// `mean_syn ‖roundtrip - original‖_1 + mean_real ‖roundtrip - original‖_1`,
/// where each pair's L1 is averaged over its valid pixels. An empty direction
/// contributes 0.
pub fn cycle_loss(
    x_syn: &[NormalizedDepthMap],
    x_syn_roundtrip: &[NormalizedDepthMap],
    x_real: &[NormalizedDepthMap],
    x_real_roundtrip: &[NormalizedDepthMap],
) -> Result<f64, AdaptError> {
    Ok(direction_l1(x_syn, x_syn_roundtrip, "synthetic")?
        + direction_l1(x_real, x_real_roundtrip, "real")?)
}

fn direction_l1(
    originals: &[NormalizedDepthMap],
    roundtrips: &[NormalizedDepthMap],
    which: &str,
) -> Result<f64, AdaptError> {
    if originals.len() != roundtrips.len() {
        return Err(AdaptError::ShapeMismatch(format!(
            "{which}: {} originals vs {} roundtrips",
            originals.len(),
            roundtrips.len()
        )));
    }
    if originals.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (i, (orig, trip)) in originals.iter().zip(roundtrips).enumerate() {
        if orig.width() != trip.width() || orig.height() != trip.height() {
            return Err(AdaptError::ShapeMismatch(format!(
                "{which} pair {i}: {}x{} vs {}x{}",
                orig.width(),
                orig.height(),
                trip.width(),
                trip.height()
            )));
        }
        let mut sum = 0.0;
        let mut count = 0usize;
        for (x, y, v) in orig.iter_valid() {
            let w = *trip.values().get(x, y);
            sum += (v - w).abs();
            count += 1;
        }
        if count == 0 {
            return Err(AdaptError::EmptyInput);
        }
        total += sum / count as f64;
    }
    Ok(total / originals.len() as f64)
}

/// The complete objective: the two adversarial terms plus the cycle term,
/// summed with unit weights.
pub fn total_objective(
    noise_term: f64,
    restore_term: f64,
    cycle_term: f64,
) -> Result<f64, AdaptError> {
    for (v, name) in [
        (noise_term, "noise term"),
        (restore_term, "restore term"),
        (cycle_term, "cycle term"),
    ] {
        if !v.is_finite() {
            return Err(AdaptError::NonFinite(name));
        }
    }
    Ok(noise_term + restore_term + cycle_term)
}
