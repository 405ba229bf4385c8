//! Log-energy + MFCC extraction.
//!
//! Per frame: DC removal, pre-emphasis, Hamming window, zero-padded power
//! spectrum, triangular mel filterbank, log, orthonormal DCT-II. Cepstra
//! `1..=n_mfcc` are kept (`0..n_mfcc` when there are only `n_mfcc` mel
//! bins); the log-energy of the raw frame goes in column 0.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::audio::AudioBuffer;
use crate::frontend::features::{FeatureMatrix, FeatureMeta};
use crate::linalg::Matrix;
use crate::scalar::Real;

pub const PRE_EMPHASIS: f64 = 0.97;
/// Floor applied before every logarithm.
pub const LOG_FLOOR: f64 = f32::EPSILON as f64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub frame_len_ms: f64,
    pub frame_hop_ms: f64,
    pub n_mfcc: usize,
    pub n_mel_bins: usize,
    pub mel_low_hz: f64,
    pub mel_high_hz: f64,
    pub use_deltas: bool,
    pub cms_window_ms: f64,
    /// Log-energy offset above the utterance mean; `None` disables VAD.
    pub vad_offset: Option<f64>,
    /// Compute deltas on the full track before dropping silent frames.
    pub deltas_before_vad: bool,
}

impl FrontendConfig {
    fn base(n_mfcc: usize, n_mel_bins: usize, low: f64, high: f64, use_deltas: bool) -> Self {
        Self {
            frame_len_ms: 20.0,
            frame_hop_ms: 10.0,
            n_mfcc,
            n_mel_bins,
            mel_low_hz: low,
            mel_high_hz: high,
            use_deltas,
            cms_window_ms: 300.0,
            vad_offset: Some(0.0),
            deltas_before_vad: true,
        }
    }

    /// GMM baseline, high-quality microphone: log-energy + 19 MFCC over
    /// 23 bins in [20, 7000] Hz, with deltas and delta-deltas.
    pub fn gmm_highquality() -> Self {
        Self::base(19, 23, 20.0, 7000.0, true)
    }

    /// GMM baseline, telephone: mel range [300, 3700] Hz.
    pub fn gmm_telephone() -> Self {
        Self::base(19, 23, 300.0, 3700.0, true)
    }

    /// x-vector input, telephone: log-energy + 23 MFCC over [20, 3700] Hz.
    pub fn xvec_telephone() -> Self {
        Self::base(23, 23, 20.0, 3700.0, false)
    }

    /// x-vector input, high quality: log-energy + 30 MFCC over [20, 7600] Hz.
    pub fn xvec_highquality() -> Self {
        Self::base(30, 30, 20.0, 7600.0, false)
    }

    /// Static feature width: log-energy plus cepstra.
    pub fn base_dim(&self) -> usize {
        1 + self.n_mfcc
    }

    pub fn dim(&self) -> usize {
        self.base_dim() * if self.use_deltas { 3 } else { 1 }
    }

    pub fn validate(&self, sample_rate_hz: u32) -> Result<()> {
        let nyquist = f64::from(sample_rate_hz) / 2.0;
        if !(self.mel_low_hz >= 0.0 && self.mel_low_hz < self.mel_high_hz && self.mel_high_hz <= nyquist) {
            return Err(Error::Config(format!(
                "mel range [{}, {}] Hz invalid for {} Hz audio",
                self.mel_low_hz, self.mel_high_hz, sample_rate_hz
            )));
        }
        if self.n_mfcc == 0 || self.n_mfcc >= self.n_mel_bins + 1 {
            return Err(Error::Config(format!("n_mfcc {} must be in 1..={}", self.n_mfcc, self.n_mel_bins)));
        }
        if !(self.frame_len_ms > 0.0 && self.frame_hop_ms > 0.0 && self.cms_window_ms > 0.0) {
            return Err(Error::Config("durations must be positive".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn hz_to_mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Triangular filters on the mel scale, stored sparsely as `(first_bin, weights)`.
#[derive(Debug, Clone)]
pub struct MelFilterbank<T> {
    filters: Vec<(usize, Vec<T>)>,
}

impl<T: Real> MelFilterbank<T> {
    pub fn new(n_bins: usize, nfft: usize, sample_rate_hz: u32, low_hz: f64, high_hz: f64) -> Self {
        let mel_lo = hz_to_mel(low_hz);
        let mel_hi = hz_to_mel(high_hz);
        let step = (mel_hi - mel_lo) / (n_bins + 1) as f64;
        let n_spec = nfft / 2 + 1;
        let bin_hz = f64::from(sample_rate_hz) / nfft as f64;
        let filters = (0..n_bins)
            .map(|b| {
                let left = mel_lo + b as f64 * step;
                let centre = left + step;
                let right = centre + step;
                let mut first = None;
                let mut weights = Vec::new();
                for k in 0..n_spec {
                    let mel = hz_to_mel(k as f64 * bin_hz);
                    if mel > left && mel < right {
                        let w = if mel <= centre { (mel - left) / (centre - left) } else { (right - mel) / (right - centre) };
                        first.get_or_insert(k);
                        weights.push(T::of(w));
                    }
                }
                (first.unwrap_or(0), weights)
            })
            .collect();
        Self { filters }
    }

    pub fn n_bins(&self) -> usize {
        self.filters.len()
    }

    pub fn apply(&self, power: &[T], out: &mut [T]) {
        for ((first, w), o) in self.filters.iter().zip(out.iter_mut()) {
            *o = w.iter().zip(&power[*first..]).map(|(a, b)| *a * *b).sum();
        }
    }
}

/// Orthonormal DCT-II evaluated through an `N`-point FFT (Makhoul's reordering).
#[derive(Clone)]
pub struct Dct2<T: Real> {
    n: usize,
    fft: Arc<dyn Fft<T>>,
    twiddles: Vec<Complex<T>>,
}

impl<T: Real> Dct2<T> {
    pub fn new(n: usize) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(n);
        let twiddles = (0..n)
            .map(|k| {
                let theta = -std::f64::consts::PI * k as f64 / (2.0 * n as f64);
                let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                Complex::new(T::of(theta.cos() * s), T::of(theta.sin() * s))
            })
            .collect();
        Self { n, fft, twiddles }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn transform(&self, x: &[T]) -> Vec<T> {
        let n = self.n;
        assert_eq!(x.len(), n, "DCT input length");
        let mut v = vec![Complex::new(T::zero(), T::zero()); n];
        for i in 0..n.div_ceil(2) {
            v[i].re = x[2 * i];
        }
        for i in 0..n / 2 {
            v[n - 1 - i].re = x[2 * i + 1];
        }
        self.fft.process(&mut v);
        v.iter().zip(&self.twiddles).map(|(a, w)| (*a * *w).re).collect()
    }
}

/// Reusable extractor for one configuration and sample rate.
pub struct MfccExtractor<T: Real> {
    cfg: FrontendConfig,
    sample_rate_hz: u32,
    frame_len: usize,
    hop: usize,
    nfft: usize,
    window: Vec<T>,
    fft: Arc<dyn Fft<T>>,
    mel: MelFilterbank<T>,
    dct: Dct2<T>,
}

impl<T: Real> MfccExtractor<T> {
    pub fn new(cfg: &FrontendConfig, sample_rate_hz: u32) -> Result<Self> {
        cfg.validate(sample_rate_hz)?;
        let rate = f64::from(sample_rate_hz);
        let frame_len = (rate * cfg.frame_len_ms / 1000.0).round() as usize;
        let hop = (rate * cfg.frame_hop_ms / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 {
            return Err(Error::Config("frame too short for the sample rate".into()));
        }
        let nfft = frame_len.next_power_of_two();
        let window = (0..frame_len)
            .map(|i| T::of(0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (frame_len - 1) as f64).cos()))
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            sample_rate_hz,
            frame_len,
            hop,
            nfft,
            window,
            fft: FftPlanner::new().plan_fft_forward(nfft),
            mel: MelFilterbank::new(cfg.n_mel_bins, nfft, sample_rate_hz, cfg.mel_low_hz, cfg.mel_high_hz),
            dct: Dct2::new(cfg.n_mel_bins),
        })
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn nfft(&self) -> usize {
        self.nfft
    }

    /// `1 + floor((len - frame_len) / hop)`, or 0 when shorter than a frame.
    pub fn n_frames(&self, n_samples: usize) -> usize {
        if n_samples < self.frame_len {
            0
        } else {
            1 + (n_samples - self.frame_len) / self.hop
        }
    }

    /// Log mel energies of one raw frame.
    pub fn log_mel(&self, raw: &[T]) -> Vec<T> {
        let n = self.frame_len;
        let mean = raw.iter().copied().sum::<T>() / T::of(n as f64);
        let mut frame: Vec<T> = raw.iter().map(|x| *x - mean).collect();
        let pre = T::of(PRE_EMPHASIS);
        for i in (1..n).rev() {
            frame[i] = frame[i] - pre * frame[i - 1];
        }
        frame[0] = frame[0] - pre * frame[0];
        let mut spec: Vec<Complex<T>> = frame.iter().zip(&self.window).map(|(x, w)| Complex::new(*x * *w, T::zero())).collect();
        spec.resize(self.nfft, Complex::new(T::zero(), T::zero()));
        self.fft.process(&mut spec);
        let power: Vec<T> = spec[..self.nfft / 2 + 1].iter().map(|c| c.norm_sqr()).collect();
        let mut mel = vec![T::zero(); self.mel.n_bins()];
        self.mel.apply(&power, &mut mel);
        let floor = T::of(LOG_FLOOR);
        mel.iter().map(|e| e.max(floor).ln()).collect()
    }

    pub fn dct(&self) -> &Dct2<T> {
        &self.dct
    }

    /// Static features (log-energy + cepstra) for a whole buffer.
    pub fn compute(&self, buf: &AudioBuffer<T>) -> Result<FeatureMatrix<T>> {
        if buf.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::SampleRateMismatch(buf.sample_rate_hz(), self.sample_rate_hz));
        }
        let t_frames = self.n_frames(buf.len());
        if t_frames == 0 {
            return Err(Error::TooShort(format!(
                "{} samples, one {} ms frame needs {}",
                buf.len(),
                self.cfg.frame_len_ms,
                self.frame_len
            )));
        }
        let d = self.cfg.base_dim();
        let floor = T::of(LOG_FLOOR);
        let x = buf.samples();
        let mut data = Vec::with_capacity(t_frames * d);
        for t in 0..t_frames {
            let raw = &x[t * self.hop..t * self.hop + self.frame_len];
            let energy: T = raw.iter().map(|s| *s * *s).sum();
            data.push(energy.max(floor).ln());
            let cep = self.dct.transform(&self.log_mel(raw));
            let first = (self.cfg.n_mfcc < self.cfg.n_mel_bins) as usize;
            data.extend_from_slice(&cep[first..first + self.cfg.n_mfcc]);
        }
        FeatureMatrix::new(Matrix::from_vec(t_frames, d, data)?, self.cfg.frame_hop_ms, FeatureMeta::default())
    }
}

/// Log-energy + MFCC matrix for `buf`; deltas, VAD and CMS are separate steps.
pub fn compute_features<T: Real>(buf: &AudioBuffer<T>, cfg: &FrontendConfig) -> Result<FeatureMatrix<T>> {
    MfccExtractor::new(cfg, buf.sample_rate_hz())?.compute(buf)
}
