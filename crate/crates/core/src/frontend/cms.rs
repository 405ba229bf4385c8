//! Sliding-window cepstral mean subtraction.

use crate::frontend::features::FeatureMatrix;
use crate::scalar::Real;

/// Subtracts from every column except the log-energy (column 0) its mean
/// over a window of `window_ms`. The window is centred on each frame and
/// shifted inward near the edges so that it stays inside the utterance;
/// an utterance shorter than the window gets its global mean removed.
pub fn apply_cms<T: Real>(fm: &FeatureMatrix<T>, window_ms: f64) -> FeatureMatrix<T> {
    let n = fm.n_frames();
    let d = fm.dim();
    let mut out = fm.clone();
    if n == 0 || d < 2 {
        return out;
    }
    let win = ((window_ms / fm.frame_hop_ms()).round() as usize).max(1).min(n);
    let half = win / 2;

    // Column prefix sums in f64.
    let mut prefix = vec![0.0f64; (n + 1) * d];
    for t in 0..n {
        let row = fm.frame(t);
        for j in 1..d {
            prefix[(t + 1) * d + j] = prefix[t * d + j] + row[j].as_f64();
        }
    }
    let frames = out.frames_mut();
    for t in 0..n {
        let start = t.saturating_sub(half).min(n - win);
        let end = start + win;
        let inv = 1.0 / win as f64;
        let row = frames.row_mut(t);
        for j in 1..d {
            let mean = (prefix[end * d + j] - prefix[start * d + j]) * inv;
            row[j] = T::of(row[j].as_f64() - mean);
        }
    }
    out
}
