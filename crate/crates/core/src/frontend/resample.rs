//! Rational-ratio polyphase resampler built on a Kaiser-windowed sinc.

use crate::error::{Error, Result};
use crate::frontend::audio::AudioBuffer;
use crate::scalar::Real;

/// Zero crossings of the sinc kernel kept on each side of its centre.
const ZERO_CROSSINGS: f64 = 32.0;
/// Passband edge as a fraction of the lower Nyquist frequency.
const ROLLOFF: f64 = 0.9;
/// Kaiser shape parameter, roughly 85 dB of stopband rejection.
const KAISER_BETA: f64 = 8.6;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Modified Bessel function of the first kind, order zero.
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Resamples to `target_hz`. Identical rates return the input unchanged.
pub fn resample<T: Real>(buf: &AudioBuffer<T>, target_hz: u32) -> Result<AudioBuffer<T>> {
    if target_hz < 4000 {
        return Err(Error::Config(format!("target rate {target_hz} Hz is below 4000 Hz")));
    }
    let source_hz = buf.sample_rate_hz();
    if source_hz == target_hz {
        return Ok(buf.clone());
    }
    let g = gcd(u64::from(source_hz), u64::from(target_hz));
    let up = (u64::from(target_hz) / g) as usize;
    let down = (u64::from(source_hz) / g) as usize;

    // Cutoff in cycles per input sample.
    let fc = 0.5 * ROLLOFF * (up as f64 / down as f64).min(1.0);
    let half = (ZERO_CROSSINGS / (2.0 * fc)).ceil() as isize;
    let taps = (2 * half) as usize;
    let i0_beta = bessel_i0(KAISER_BETA);

    // One row of taps per fractional phase; tap j covers input offset j - half + 1.
    let mut table = vec![0.0f64; up * taps];
    for phase in 0..up {
        let frac = phase as f64 / up as f64;
        let row = &mut table[phase * taps..(phase + 1) * taps];
        for (j, w) in row.iter_mut().enumerate() {
            let offset = j as isize - half + 1;
            let delta = frac - offset as f64;
            let r = delta / half as f64;
            if r.abs() <= 1.0 {
                let window = bessel_i0(KAISER_BETA * (1.0 - r * r).sqrt()) / i0_beta;
                *w = 2.0 * fc * sinc(2.0 * fc * delta) * window;
            }
        }
        let sum: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= sum);
    }

    let x = buf.samples();
    let n_in = x.len();
    let n_out = (n_in * up).div_ceil(down).max(1);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        let num = m * down;
        let base = (num / up) as isize;
        let phase = num % up;
        let row = &table[phase * taps..(phase + 1) * taps];
        let start = base - half + 1;
        let mut acc = 0.0f64;
        for (j, w) in row.iter().enumerate() {
            let i = start + j as isize;
            if i >= 0 && (i as usize) < n_in {
                acc += w * x[i as usize].as_f64();
            }
        }
        out.push(T::of(acc));
    }
    AudioBuffer::new(out, target_hz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(freq: f64, rate: u32, seconds: f64) -> AudioBuffer<f64> {
        let n = (seconds * f64::from(rate)) as usize;
        let s = (0..n).map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / f64::from(rate)).sin() * 0.5).collect();
        AudioBuffer::new(s, rate).unwrap()
    }

    // RMS over the interior, away from filter start-up transients.
    fn interior_rms(x: &[f64], margin: usize) -> f64 {
        let s = &x[margin..x.len() - margin];
        (s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64).sqrt()
    }

    #[test]
    fn identity_rate_is_bit_identical() {
        let a = sine(440.0, 16000, 0.1);
        assert_eq!(resample(&a, 16000).unwrap(), a);
    }

    #[test]
    fn length_scales_with_ratio() {
        let a = sine(440.0, 96000, 1.0);
        let b = resample(&a, 16000).unwrap();
        assert!((b.len() as i64 - 16000).abs() <= 1);
        let c = sine(300.0, 44100, 0.5);
        let d = resample(&c, 16000).unwrap();
        assert!((d.len() as f64 - 0.5 * 16000.0).abs() <= 1.0);
    }

    #[test]
    fn passband_sine_keeps_rms() {
        let a = sine(1000.0, 96000, 1.0);
        let b = resample(&a, 16000).unwrap();
        let rin = interior_rms(a.samples(), 4800);
        let rout = interior_rms(b.samples(), 800);
        assert!((rout / rin - 1.0).abs() < 0.01, "ratio {}", rout / rin);
    }

    #[test]
    fn stopband_sine_is_rejected() {
        let a = sine(5000.0, 16000, 1.0);
        let b = resample(&a, 8000).unwrap();
        let rin = interior_rms(a.samples(), 1600);
        let rout = interior_rms(b.samples(), 800);
        assert!(rout <= 1e-3 * rin, "ratio {}", rout / rin);
    }

    #[test]
    fn round_trip_band_limited() {
        let rate = 16000;
        let n = 16000;
        let s: Vec<f64> = (0..n)
            .map(|i| {
                let t = i as f64 / f64::from(rate);
                0.3 * (2.0 * std::f64::consts::PI * 310.0 * t).sin() + 0.2 * (2.0 * std::f64::consts::PI * 1730.0 * t + 0.4).sin()
            })
            .collect();
        let a = AudioBuffer::new(s, rate).unwrap();
        let back = resample(&resample(&a, 8000).unwrap(), rate).unwrap();
        let m = 1600;
        let err: Vec<f64> = a.samples()[m..n - m].iter().zip(&back.samples()[m..n - m]).map(|(x, y)| x - y).collect();
        let rel = interior_rms(&err, 0) / interior_rms(&a.samples()[m..n - m], 0);
        assert!(rel <= 0.01, "round-trip error {rel}");
    }

    #[test]
    fn rejects_low_target() {
        assert!(resample(&sine(100.0, 8000, 0.1), 3000).is_err());
    }
}
