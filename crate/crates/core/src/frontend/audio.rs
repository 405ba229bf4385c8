use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Mono waveform, amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer<T> {
    samples: Vec<T>,
    sample_rate_hz: u32,
}

impl<T: Real> AudioBuffer<T> {
    pub fn new(samples: Vec<T>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Empty("audio has no samples"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::Config("sample rate must be positive".into()));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::Numerical("non-finite audio sample".into()));
        }
        Ok(Self { samples, sample_rate_hz })
    }

    pub fn silence(len: usize, sample_rate_hz: u32) -> Result<Self> {
        Self::new(vec![T::zero(); len], sample_rate_hz)
    }

    #[inline]
    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    #[inline]
    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate_hz)
    }

    pub fn power(&self) -> T {
        mean_power(&self.samples)
    }

    pub fn rms(&self) -> T {
        self.power().sqrt()
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, s| m.max(s.abs()))
    }

    pub fn cast<U: Real>(&self) -> AudioBuffer<U> {
        AudioBuffer { samples: self.samples.iter().map(|s| U::of(s.as_f64())).collect(), sample_rate_hz: self.sample_rate_hz }
    }

    /// Same rate, new samples. Used by processing stages that keep the rate.
    pub(crate) fn with_samples(&self, samples: Vec<T>) -> Self {
        Self { samples, sample_rate_hz: self.sample_rate_hz }
    }

    pub fn slice(&self, start: usize, end: usize) -> Result<Self> {
        let end = end.min(self.len());
        if start >= end {
            return Err(Error::Empty("empty audio slice"));
        }
        Ok(self.with_samples(self.samples[start..end].to_vec()))
    }
}

pub(crate) fn mean_power<T: Real>(x: &[T]) -> T {
    if x.is_empty() {
        return T::zero();
    }
    x.iter().map(|s| *s * *s).sum::<T>() / T::of(x.len() as f64)
}

/// Reads a PCM WAV (16- or 24-bit integer).
///
/// Multi-channel files are rejected unless `channel` selects one of them.
pub fn load_wav<T: Real>(path: impl AsRef<Path>, channel: Option<u16>) -> Result<AudioBuffer<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "file not found")));
    }
    let wav_err = |e: hound::Error| Error::Wav { path: path.to_path_buf(), message: e.to_string() };
    let mut reader = WavReader::open(path).map_err(wav_err)?;
    let spec = reader.spec();
    if spec.sample_format != SampleFormat::Int || !(spec.bits_per_sample == 16 || spec.bits_per_sample == 24) {
        return Err(Error::UnsupportedFormat(format!(
            "{:?} {}-bit (expected 16- or 24-bit integer PCM)",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let n_ch = spec.channels;
    let pick = match (n_ch, channel) {
        (1, None) => 0,
        (_, Some(c)) if c < n_ch => c,
        (_, Some(c)) => return Err(Error::Config(format!("channel {c} requested from a {n_ch}-channel file"))),
        (n, None) => return Err(Error::UnsupportedChannels(n)),
    };
    let scale = 1.0 / f64::from(1u32 << (spec.bits_per_sample - 1));
    let mut samples = Vec::with_capacity(reader.len() as usize / usize::from(n_ch));
    for (i, s) in reader.samples::<i32>().enumerate() {
        let s = s.map_err(wav_err)?;
        if i % usize::from(n_ch) == usize::from(pick) {
            samples.push(T::of(f64::from(s) * scale));
        }
    }
    if samples.is_empty() {
        return Err(Error::Empty("zero-length audio"));
    }
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV, clamping to the representable range.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, buf: &AudioBuffer<T>) -> Result<()> {
    let path = path.as_ref();
    let spec = WavSpec { channels: 1, sample_rate: buf.sample_rate_hz(), bits_per_sample: 16, sample_format: SampleFormat::Int };
    let wav_err = |e: hound::Error| Error::Wav { path: path.to_path_buf(), message: e.to_string() };
    let mut w = WavWriter::create(path, spec).map_err(wav_err)?;
    for s in buf.samples() {
        let v = (s.as_f64() * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
        w.write_sample(v).map_err(wav_err)?;
    }
    w.finalize().map_err(wav_err)
}
