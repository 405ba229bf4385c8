//! Log-energy voice activity detection.

use crate::error::{Error, Result};
use crate::frontend::features::FeatureMatrix;
use crate::scalar::Real;

/// Width of the majority-vote smoothing window.
pub const SMOOTHING_FRAMES: usize = 5;

/// Marks frame `t` voiced iff its log-energy (column 0) exceeds the utterance
/// mean plus `offset`, then applies a centred majority vote.
/// `offset = -inf` marks every frame voiced.
pub fn vad_mask<T: Real>(fm: &FeatureMatrix<T>, offset: f64) -> Result<FeatureMatrix<T>> {
    let n = fm.n_frames();
    if n == 0 {
        return Err(Error::NoVoicedFrames);
    }
    let mut out = fm.clone();
    if offset == f64::NEG_INFINITY {
        out.set_vad_mask(vec![true; n])?;
        return Ok(out);
    }
    if offset.is_nan() {
        return Err(Error::Config("VAD offset is NaN".into()));
    }
    let energy: Vec<f64> = (0..n).map(|t| fm.frame(t)[0].as_f64()).collect();
    // Shifted mean: exact when all energies are equal.
    let pivot = energy[0];
    let mean = pivot + energy.iter().map(|e| e - pivot).sum::<f64>() / n as f64;
    let threshold = mean + offset;
    let raw: Vec<bool> = energy.iter().map(|e| *e > threshold).collect();

    let half = SMOOTHING_FRAMES / 2;
    let smoothed: Vec<bool> = (0..n)
        .map(|t| {
            let lo = t.saturating_sub(half);
            let hi = (t + half + 1).min(n);
            let votes = raw[lo..hi].iter().filter(|v| **v).count();
            2 * votes > hi - lo
        })
        .collect();
    if !smoothed.iter().any(|v| *v) {
        return Err(Error::NoVoicedFrames);
    }
    out.set_vad_mask(smoothed)?;
    Ok(out)
}
