//! Magnitude spectral subtraction with overlap-add resynthesis.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::audio::AudioBuffer;
use crate::scalar::Real;

/// Minimum length of the noise reference.
pub const MIN_NOISE_SECONDS: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralSubtraction {
    pub frame_ms: f64,
    pub hop_ms: f64,
    /// Over-subtraction factor.
    pub alpha: f64,
    /// Spectral floor relative to the input magnitude.
    pub beta: f64,
}

impl Default for SpectralSubtraction {
    fn default() -> Self {
        Self { frame_ms: 20.0, hop_ms: 10.0, alpha: 1.0, beta: 0.02 }
    }
}

fn hann_periodic<T: Real>(n: usize) -> Vec<T> {
    (0..n).map(|i| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())).collect()
}

impl SpectralSubtraction {
    /// `|Y| = max(|X| - alpha |N|, beta |X|)` per bin, phase of `X` kept.
    /// Output length equals input length.
    pub fn apply<T: Real>(&self, buf: &AudioBuffer<T>, noise: &AudioBuffer<T>) -> Result<AudioBuffer<T>> {
        if buf.sample_rate_hz() != noise.sample_rate_hz() {
            return Err(Error::SampleRateMismatch(buf.sample_rate_hz(), noise.sample_rate_hz()));
        }
        if noise.duration_s() < MIN_NOISE_SECONDS {
            return Err(Error::TooShort(format!(
                "noise reference is {:.3} s, at least {MIN_NOISE_SECONDS} s required",
                noise.duration_s()
            )));
        }
        let rate = f64::from(buf.sample_rate_hz());
        let frame_len = (rate * self.frame_ms / 1000.0).round() as usize;
        let hop = (rate * self.hop_ms / 1000.0).round() as usize;
        if frame_len < 2 || hop == 0 || hop > frame_len {
            return Err(Error::Config("invalid spectral subtraction framing".into()));
        }
        let nfft = frame_len.next_power_of_two();
        let window = hann_periodic::<T>(frame_len);
        let mut planner = FftPlanner::<T>::new();
        let fwd = planner.plan_fft_forward(nfft);
        let inv = planner.plan_fft_inverse(nfft);
        let mut scratch = vec![Complex::new(T::zero(), T::zero()); nfft];

        let spectrum = |frame: &[T], out: &mut Vec<Complex<T>>| {
            out.clear();
            out.extend(frame.iter().zip(&window).map(|(x, w)| Complex::new(*x * *w, T::zero())));
            out.resize(nfft, Complex::new(T::zero(), T::zero()));
        };

        // Average noise magnitude spectrum.
        let mut noise_mag = vec![T::zero(); nfft / 2 + 1];
        let ns = noise.samples();
        let mut buf_c = Vec::with_capacity(nfft);
        let mut n_frames = 0usize;
        let mut start = 0;
        while start + frame_len <= ns.len() {
            spectrum(&ns[start..start + frame_len], &mut buf_c);
            fwd.process_with_scratch(&mut buf_c, &mut scratch);
            for (m, c) in noise_mag.iter_mut().zip(&buf_c) {
                *m += c.norm();
            }
            n_frames += 1;
            start += hop;
        }
        let inv_n = T::of(1.0 / n_frames as f64);
        noise_mag.iter_mut().for_each(|m| *m *= inv_n);

        // Pad by one frame on each side so every real sample sees full overlap.
        let x = buf.samples();
        let padded_len = x.len() + 2 * frame_len;
        let mut padded = vec![T::zero(); padded_len + hop];
        padded[frame_len..frame_len + x.len()].copy_from_slice(x);
        let mut acc = vec![T::zero(); padded.len() + nfft];
        let mut wsum = vec![T::zero(); padded.len() + nfft];
        let alpha = T::of(self.alpha);
        let beta = T::of(self.beta);
        let scale = T::of(1.0 / nfft as f64);
        let mut gains = vec![T::zero(); nfft / 2 + 1];
        let mut start = 0;
        while start + frame_len <= padded.len() {
            spectrum(&padded[start..start + frame_len], &mut buf_c);
            fwd.process_with_scratch(&mut buf_c, &mut scratch);
            for (k, g) in gains.iter_mut().enumerate() {
                let mag = buf_c[k].norm();
                *g = if mag > T::zero() { (T::one() - alpha * noise_mag[k] / mag).max(beta) } else { T::zero() };
            }
            for k in 0..nfft {
                let g = if k <= nfft / 2 { gains[k] } else { gains[nfft - k] };
                buf_c[k] = buf_c[k] * g;
            }
            inv.process_with_scratch(&mut buf_c, &mut scratch);
            for i in 0..frame_len {
                acc[start + i] += buf_c[i].re * scale;
                wsum[start + i] += window[i];
            }
            start += hop;
        }
        let tiny = T::of(1e-8);
        let out = (frame_len..frame_len + x.len())
            .map(|i| if wsum[i] > tiny { acc[i] / wsum[i] } else { T::zero() })
            .collect();
        AudioBuffer::new(out, buf.sample_rate_hz())
    }
}

/// Spectral subtraction with default parameters.
pub fn spectral_subtract<T: Real>(buf: &AudioBuffer<T>, noise_sample: &AudioBuffer<T>) -> Result<AudioBuffer<T>> {
    SpectralSubtraction::default().apply(buf, noise_sample)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    const RATE: u32 = 16000;
    const TAU: f64 = 2.0 * std::f64::consts::PI;

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    // Steady multi-tone: same magnitude spectrum in every frame.
    fn multitone(n: usize, phase_seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::rng(phase_seed);
        let tones: Vec<(f64, f64)> = (1..14).map(|k| (k as f64 * 550.0 + 120.0, rng.random::<f64>() * TAU)).collect();
        (0..n)
            .map(|i| {
                let t = i as f64 / f64::from(RATE);
                tones.iter().map(|(f, p)| 0.03 * (TAU * f * t + p).sin()).sum()
            })
            .collect()
    }

    fn white(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
        let mut rng = crate::seed::rng(seed);
        (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sigma * z }).collect()
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = white(RATE as usize, 0.1, 3);
        let buf = AudioBuffer::new(x.clone(), RATE).unwrap();
        let noise = AudioBuffer::silence(RATE as usize, RATE).unwrap();
        let y = spectral_subtract(&buf, &noise).unwrap();
        assert_eq!(y.len(), buf.len());
        let err: Vec<f64> = x.iter().zip(y.samples()).map(|(a, b)| a - b).collect();
        assert!(rms(&err) < 1e-6, "rms err {}", rms(&err));
    }

    #[test]
    fn matched_stationary_noise_is_removed() {
        let n = 2 * RATE as usize;
        let buf = AudioBuffer::new(multitone(n, 1), RATE).unwrap();
        let noise = AudioBuffer::new(multitone(RATE as usize, 1), RATE).unwrap();
        let y = spectral_subtract(&buf, &noise).unwrap();
        let ratio = rms(y.samples()) / rms(buf.samples());
        assert!(ratio <= 0.02 + 0.05, "residual ratio {ratio}");
    }

    #[test]
    fn sine_in_white_noise_gains_snr() {
        let n = 3 * RATE as usize;
        let clean: Vec<f64> = (0..n).map(|i| 0.1 * (TAU * 440.0 * i as f64 / f64::from(RATE)).sin()).collect();
        let sigma = rms(&clean);
        let noise = white(n, sigma, 11);
        let noisy: Vec<f64> = clean.iter().zip(&noise).map(|(a, b)| a + b).collect();
        let reference = AudioBuffer::new(white(RATE as usize, sigma, 12), RATE).unwrap();
        let y = spectral_subtract(&AudioBuffer::new(noisy.clone(), RATE).unwrap(), &reference).unwrap();
        let snr = |x: &[f64]| {
            let e: Vec<f64> = x.iter().zip(&clean).map(|(a, b)| a - b).collect();
            20.0 * (rms(&clean) / rms(&e)).log10()
        };
        let gain = snr(y.samples()) - snr(&noisy);
        assert!(gain >= 5.0, "SNR gain {gain} dB");
    }

    #[test]
    fn contract_errors() {
        let buf = AudioBuffer::new(vec![0.1f64; 8000], 8000).unwrap();
        let short = AudioBuffer::silence(3000, 8000).unwrap();
        assert!(matches!(spectral_subtract(&buf, &short), Err(Error::TooShort(_))));
        let other = AudioBuffer::silence(16000, 16000).unwrap();
        assert!(matches!(spectral_subtract(&buf, &other), Err(Error::SampleRateMismatch(..))));
    }
}
