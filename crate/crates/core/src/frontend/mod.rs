//! Audio to voiced, mean-normalized cepstral features.

mod audio;
mod cms;
mod deltas;
mod features;
mod mfcc;
mod resample;
mod segment;
mod specsub;
mod vad;

pub use audio::{load_wav, write_wav, AudioBuffer};
pub use cms::apply_cms;
pub use deltas::{append_deltas, DELTA_WINDOW};
pub use features::{FeatureMatrix, FeatureMeta};
pub use mfcc::{compute_features, hz_to_mel, Dct2, FrontendConfig, MelFilterbank, MfccExtractor, LOG_FLOOR, PRE_EMPHASIS};
pub use resample::resample;
pub use segment::{chunk_segments, MAX_SEGMENT_SECONDS, MIN_SEGMENT_FRAMES};
pub use specsub::{spectral_subtract, SpectralSubtraction, MIN_NOISE_SECONDS};
pub use vad::{vad_mask, SMOOTHING_FRAMES};

use crate::error::Result;
use crate::scalar::Real;

/// Full chain: optional spectral subtraction, MFCC, deltas, VAD (silent
/// frames dropped), sliding CMS.
pub fn extract<T: Real>(buf: &AudioBuffer<T>, noise: Option<&AudioBuffer<T>>, cfg: &FrontendConfig) -> Result<FeatureMatrix<T>> {
    let denoised;
    let audio = match noise {
        Some(n) => {
            denoised = spectral_subtract(buf, n)?;
            &denoised
        }
        None => buf,
    };
    let mut fm = compute_features(audio, cfg)?;
    if cfg.use_deltas && cfg.deltas_before_vad {
        fm = append_deltas(&fm, 2)?;
    }
    if let Some(offset) = cfg.vad_offset {
        fm = vad_mask(&fm, offset)?.retain_voiced();
    }
    if cfg.use_deltas && !cfg.deltas_before_vad {
        fm = append_deltas(&fm, 2)?;
    }
    Ok(apply_cms(&fm, cfg.cms_window_ms))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bursts_survive_the_chain() {
        let rate = 8000;
        let s: Vec<f64> = (0..rate * 2)
            .map(|i| {
                let t = i as f64 / f64::from(rate as u32);
                let on = ((t * 2.0) as usize) % 2 == 0;
                if on {
                    0.3 * (2.0 * std::f64::consts::PI * 220.0 * t).sin() + 0.05 * (t * 9000.0).sin()
                } else {
                    1e-4 * (t * 5000.0).sin()
                }
            })
            .collect();
        let buf = AudioBuffer::new(s, rate as u32).unwrap();
        let fm = extract(&buf, None, &FrontendConfig::gmm_telephone()).unwrap();
        assert_eq!(fm.dim(), 60);
        let total = (rate * 2 - 160) / 80 + 1;
        assert!(fm.n_frames() > total / 3 && fm.n_frames() < 2 * total / 3, "{} of {total}", fm.n_frames());
    }
}
