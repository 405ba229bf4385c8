//! Splitting voiced speech into embedding-network-sized segments.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::frontend::features::FeatureMatrix;
use crate::scalar::Real;
use crate::seed;

/// Fewest frames the embedding network accepts (its receptive field).
pub const MIN_SEGMENT_FRAMES: usize = 15;
/// Longest segment handed to the network; longer spans become fragments.
pub const MAX_SEGMENT_SECONDS: f64 = 100.0;

/// Maximal runs of voiced frames, as `start..end` ranges.
fn voiced_spans(mask: &[bool]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (t, v) in mask.iter().enumerate() {
        match (v, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                spans.push((s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, mask.len()));
    }
    spans
}

/// Cuts each contiguous voiced span into segments whose durations are drawn
/// uniformly from `[min_s, max_s]`.
///
/// A trailing remainder shorter than `min_s` joins the previous segment; a
/// span shorter than `min_s` is kept whole. Segments under
/// [`MIN_SEGMENT_FRAMES`] are dropped and segments over
/// [`MAX_SEGMENT_SECONDS`] are split into equal fragments that share a
/// `fragment_group`.
pub fn chunk_segments<T: Real>(fm: &FeatureMatrix<T>, min_s: f64, max_s: f64, seed: u64) -> Result<Vec<FeatureMatrix<T>>> {
    if !(min_s > 0.0 && min_s < max_s) {
        return Err(Error::Config(format!("segment range [{min_s}, {max_s}] s is invalid")));
    }
    let hop_s = fm.frame_hop_ms() / 1000.0;
    let min_frames = ((min_s / hop_s).round() as usize).max(1);
    let max_frames = ((max_s / hop_s).round() as usize).max(min_frames);
    let cap = (MAX_SEGMENT_SECONDS / hop_s).round() as usize;
    let mut rng = seed::rng(seed);

    let mut cuts: Vec<(usize, usize)> = Vec::new();
    for (s, e) in voiced_spans(fm.vad_mask()) {
        let len = e - s;
        if len < min_frames {
            cuts.push((s, e));
            continue;
        }
        let first = cuts.len();
        let mut pos = s;
        while pos < e {
            let want = rng.random_range(min_frames..=max_frames);
            let remaining = e - pos;
            if remaining <= want {
                if remaining < min_frames && cuts.len() > first {
                    cuts.last_mut().expect("previous segment exists").1 = e;
                } else {
                    cuts.push((pos, e));
                }
                break;
            }
            cuts.push((pos, pos + want));
            pos += want;
        }
    }

    let mut out = Vec::new();
    let mut group = 0usize;
    for (s, e) in cuts {
        let len = e - s;
        if len < MIN_SEGMENT_FRAMES {
            continue;
        }
        if len > cap {
            let parts = len.div_ceil(cap);
            for p in 0..parts {
                let a = s + p * len / parts;
                let b = s + (p + 1) * len / parts;
                let mut seg = fm.slice(a, b);
                seg.meta.segment = Some(out.len());
                seg.meta.fragment_group = Some(group);
                out.push(seg);
            }
            group += 1;
        } else {
            let mut seg = fm.slice(s, e);
            seg.meta.segment = Some(out.len());
            out.push(seg);
        }
    }
    Ok(out)
}
