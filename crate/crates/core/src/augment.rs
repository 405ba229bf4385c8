//! Training-data corruption: reverberation, additive noise, music and
//! babble. Each utterance gains two of four corrupted copies.

use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{load_wav, resample, AudioBuffer};
use crate::seed;

/// Peak level that mixed outputs are scaled back to when they would clip.
pub const CLAMP_PEAK: f64 = 0.99;
/// Frames quieter than this (relative to the loudest frame) do not count
/// toward the signal power used for SNR.
pub const ACTIVE_FLOOR_DB: f64 = -40.0;
/// Frame length for the active-region estimate, in seconds.
const ACTIVE_FRAME_S: f64 = 0.02;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorruptionKind {
    Reverb,
    Noise,
    Music,
    Babble,
}

impl CorruptionKind {
    pub const ALL: [CorruptionKind; 4] = [Self::Reverb, Self::Noise, Self::Music, Self::Babble];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Reverb => "reverb",
            Self::Noise => "noise",
            Self::Music => "music",
            Self::Babble => "babble",
        }
    }

    /// SNR range drawn from when none is configured. Unused for reverb.
    pub fn default_snr_db(self) -> [f64; 2] {
        match self {
            Self::Reverb => [f64::INFINITY, f64::INFINITY],
            Self::Noise => [0.0, 15.0],
            Self::Music => [5.0, 15.0],
            Self::Babble => [13.0, 20.0],
        }
    }
}

impl std::fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for CorruptionKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s).ok_or_else(|| Error::Config(format!("unknown corruption kind '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    /// Uniform range the per-utterance SNR is drawn from.
    pub snr_db: [f64; 2],
    pub source_pool: Vec<PathBuf>,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, source_pool: Vec<PathBuf>) -> Self {
        Self { kind, snr_db: kind.default_snr_db(), source_pool, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_pool.is_empty() {
            return Err(Error::Config(format!("{} corruption has an empty source pool", self.kind)));
        }
        if self.kind != CorruptionKind::Reverb && !(self.snr_db.iter().all(|v| v.is_finite()) && self.snr_db[0] <= self.snr_db[1]) {
            return Err(Error::Config(format!("{} corruption: invalid SNR range {:?}", self.kind, self.snr_db)));
        }
        Ok(())
    }

    /// Reads the pool, resampling each entry to `target_hz`.
    pub fn load(&self, target_hz: u32) -> Result<Corruption> {
        self.validate()?;
        let audio = self
            .source_pool
            .iter()
            .map(|p| {
                let a = load_wav::<f64>(p, Some(0))?;
                if a.sample_rate_hz() == target_hz {
                    Ok(a)
                } else {
                    resample(&a, target_hz)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Corruption::new(self.clone(), audio)
    }
}

/// A spec with its pool in memory.
#[derive(Debug, Clone)]
pub struct Corruption {
    pub spec: CorruptionSpec,
    pub audio: Arc<Vec<AudioBuffer<f64>>>,
}

impl Corruption {
    pub fn new(spec: CorruptionSpec, audio: Vec<AudioBuffer<f64>>) -> Result<Self> {
        spec.validate()?;
        if audio.len() != spec.source_pool.len() {
            return Err(Error::DimensionMismatch { expected: spec.source_pool.len(), got: audio.len() });
        }
        if spec.kind == CorruptionKind::Babble && audio.len() < 3 {
            return Err(Error::Config("babble needs at least three pool entries".into()));
        }
        Ok(Self { spec, audio: Arc::new(audio) })
    }
}

fn check_rates(a: &AudioBuffer<f64>, b: &AudioBuffer<f64>) -> Result<()> {
    if a.sample_rate_hz() != b.sample_rate_hz() {
        return Err(Error::SampleRateMismatch(a.sample_rate_hz(), b.sample_rate_hz()));
    }
    Ok(())
}

/// Linear convolution via FFT, first `len` output samples.
fn fft_convolve(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    let n = (x.len() + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(n);
    let inv = planner.plan_fft_inverse(n);
    let spectrum = |v: &[f64]| {
        let mut buf: Vec<Complex<f64>> = v.iter().map(|r| Complex::new(*r, 0.0)).collect();
        buf.resize(n, Complex::new(0.0, 0.0));
        fwd.process(&mut buf);
        buf
    };
    let mut y = spectrum(x);
    y.iter_mut().zip(spectrum(h)).for_each(|(a, b)| *a *= b);
    inv.process(&mut y);
    let scale = 1.0 / n as f64;
    y.iter().take(len).map(|c| c.re * scale).collect()
}

/// Convolution with a room impulse response, truncated to the input length
/// and scaled back to the input's peak.
pub fn convolve_rir(buf: &AudioBuffer<f64>, rir: &AudioBuffer<f64>) -> Result<AudioBuffer<f64>> {
    check_rates(buf, rir)?;
    let mut y = fft_convolve(buf.samples(), rir.samples(), buf.len());
    let peak_out = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak_out > 0.0 {
        let g = buf.peak() / peak_out;
        y.iter_mut().for_each(|v| *v *= g);
    }
    AudioBuffer::new(y, buf.sample_rate_hz())
}

/// Power of `x` over the frames where `reference` is active.
fn active_power(reference: &[f64], x: &[f64], sample_rate_hz: u32) -> f64 {
    let frame = ((ACTIVE_FRAME_S * f64::from(sample_rate_hz)) as usize).max(1);
    let frame_power = |v: &[f64]| v.iter().map(|s| s * s).sum::<f64>() / v.len() as f64;
    let powers: Vec<f64> = reference.chunks(frame).map(frame_power).collect();
    let loudest = powers.iter().fold(0.0f64, |a, b| a.max(*b));
    let floor = loudest * 10f64.powf(ACTIVE_FLOOR_DB / 10.0);
    let (mut sum, mut n) = (0.0, 0usize);
    for (i, p) in powers.iter().enumerate() {
        if *p > floor {
            let chunk = &x[i * frame..((i + 1) * frame).min(x.len())];
            sum += chunk.iter().map(|s| s * s).sum::<f64>();
            n += chunk.len();
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Signal-to-interference ratio of two aligned components over the
/// signal's active region, in dB.
pub fn measured_snr_db(signal: &AudioBuffer<f64>, interference: &[f64]) -> f64 {
    let ps = active_power(signal.samples(), signal.samples(), signal.sample_rate_hz());
    let pi = active_power(signal.samples(), interference, signal.sample_rate_hz());
    10.0 * (ps / pi).log10()
}

/// Tiles or crops `x` to exactly `len` samples.
fn tile(x: &[f64], len: usize) -> Vec<f64> {
    x.iter().copied().cycle().take(len).collect()
}

/// Gain applied to the interference so that the mixture has the requested
/// SNR over the active region of `buf`.
pub fn mixing_gain(buf: &AudioBuffer<f64>, interference: &AudioBuffer<f64>, snr_db: f64) -> Result<f64> {
    check_rates(buf, interference)?;
    let noise = tile(interference.samples(), buf.len());
    let ps = active_power(buf.samples(), buf.samples(), buf.sample_rate_hz());
    if ps <= 0.0 {
        return Err(Error::Empty("signal has no energy to mix against"));
    }
    let pi = active_power(buf.samples(), &noise, buf.sample_rate_hz());
    if pi <= 0.0 {
        return Err(Error::Empty("interference is silent over the signal's active region"));
    }
    Ok((ps / (pi * 10f64.powf(snr_db / 10.0))).sqrt())
}

/// `buf + g·interference`, with the interference tiled or cropped to the
/// length of `buf`. `snr_db = +inf` returns the input unchanged.
pub fn mix_additive(buf: &AudioBuffer<f64>, interference: &AudioBuffer<f64>, snr_db: f64) -> Result<AudioBuffer<f64>> {
    if snr_db == f64::INFINITY {
        check_rates(buf, interference)?;
        return Ok(buf.clone());
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Config(format!("invalid SNR {snr_db} dB")));
    }
    let g = mixing_gain(buf, interference, snr_db)?;
    let noise = tile(interference.samples(), buf.len());
    AudioBuffer::new(buf.samples().iter().zip(&noise).map(|(s, n)| s + g * n).collect(), buf.sample_rate_hz())
}

fn unit_power(x: &[f64]) -> Result<Vec<f64>> {
    let p = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
    if p <= 0.0 {
        return Err(Error::Empty("silent babble source"));
    }
    let g = 1.0 / p.sqrt();
    Ok(x.iter().map(|v| v * g).collect())
}

/// Sum of `n_speakers` distinct pool entries, each scaled to unit power.
/// Shorter entries are tiled to the longest chosen one.
pub fn make_babble(pool: &[AudioBuffer<f64>], n_speakers: usize, seed: u64) -> Result<AudioBuffer<f64>> {
    if !(3..=7).contains(&n_speakers) {
        return Err(Error::Config(format!("babble needs 3 to 7 speakers, got {n_speakers}")));
    }
    if pool.len() < n_speakers {
        return Err(Error::Config(format!("babble pool has {} entries, {n_speakers} needed", pool.len())));
    }
    let rate = pool[0].sample_rate_hz();
    if let Some(b) = pool.iter().find(|b| b.sample_rate_hz() != rate) {
        return Err(Error::SampleRateMismatch(rate, b.sample_rate_hz()));
    }
    let mut rng = seed::rng(seed);
    let mut chosen = rand::seq::index::sample(&mut rng, pool.len(), n_speakers).into_vec();
    chosen.sort_unstable();
    let len = chosen.iter().map(|i| pool[*i].len()).max().expect("n_speakers >= 3");
    let mut out = vec![0.0; len];
    for i in chosen {
        let v = unit_power(&tile(pool[i].samples(), len))?;
        out.iter_mut().zip(v).for_each(|(o, v)| *o += v);
    }
    AudioBuffer::new(out, rate)
}

/// Interference for the noise kind: a fresh excerpt from a random pool entry
/// starts every second.
fn noise_track(pool: &[AudioBuffer<f64>], len: usize, rate: u32, rng: &mut seed::Rng) -> Vec<f64> {
    let block = rate as usize;
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let src = pool.choose(rng).expect("validated non-empty");
        let start = rng.random_range(0..src.len());
        let n = block.min(len - out.len());
        out.extend(src.samples().iter().copied().cycle().skip(start).take(n));
    }
    out
}

/// One excerpt from a random entry, starting at a random offset.
fn excerpt(pool: &[AudioBuffer<f64>], len: usize, rng: &mut seed::Rng) -> Vec<f64> {
    let src = pool.choose(rng).expect("validated non-empty");
    let start = rng.random_range(0..src.len());
    src.samples().iter().copied().cycle().skip(start).take(len).collect()
}

/// Scales the whole buffer down to `CLAMP_PEAK` if it would clip.
pub fn safety_clamp(samples: &mut [f64]) {
    let peak = samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > CLAMP_PEAK {
        let g = CLAMP_PEAK / peak;
        samples.iter_mut().for_each(|v| *v *= g);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: String,
    pub audio: AudioBuffer<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub source: String,
    pub kind: Option<CorruptionKind>,
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedUtterance {
    pub id: String,
    pub audio: AudioBuffer<f64>,
    pub provenance: Provenance,
}

/// The two corruption kinds kept for an utterance.
pub fn kept_kinds(seed: u64, utterance_id: &str) -> [CorruptionKind; 2] {
    let mut rng = seed::rng(seed::derive_str(seed, utterance_id));
    let mut kinds = CorruptionKind::ALL;
    kinds.shuffle(&mut rng);
    let mut kept = [kinds[0], kinds[1]];
    kept.sort();
    kept
}

/// Applies one corruption to one utterance.
pub fn corrupt(u: &Utterance, c: &Corruption, seed: u64) -> Result<AugmentedUtterance> {
    let mut rng = seed::rng(seed);
    let (len, rate) = (u.audio.len(), u.audio.sample_rate_hz());
    if let Some(b) = c.audio.iter().find(|b| b.sample_rate_hz() != rate) {
        return Err(Error::SampleRateMismatch(rate, b.sample_rate_hz()));
    }
    let kind = c.spec.kind;
    let [lo, hi] = c.spec.snr_db;
    let mut snr = if kind == CorruptionKind::Reverb || lo == hi { lo } else { rng.random_range(lo..=hi) };
    let out = match kind {
        CorruptionKind::Reverb => {
            snr = f64::INFINITY;
            let rir = c.audio.choose(&mut rng).expect("validated non-empty");
            convolve_rir(&u.audio, rir)?
        }
        CorruptionKind::Noise => mix_additive(&u.audio, &AudioBuffer::new(noise_track(&c.audio, len, rate, &mut rng), rate)?, snr)?,
        CorruptionKind::Music => mix_additive(&u.audio, &AudioBuffer::new(excerpt(&c.audio, len, &mut rng), rate)?, snr)?,
        CorruptionKind::Babble => {
            let n = rng.random_range(3..=7usize.min(c.audio.len()));
            mix_additive(&u.audio, &make_babble(&c.audio, n, rng.random())?, snr)?
        }
    };
    let mut samples = out.into_samples();
    safety_clamp(&mut samples);
    Ok(AugmentedUtterance {
        id: format!("{}-{kind}", u.id),
        audio: AudioBuffer::new(samples, rate)?,
        provenance: Provenance { source: u.id.clone(), kind: Some(kind), snr_db: snr.is_finite().then_some(snr), seed },
    })
}

/// Every original followed by two of its four corrupted copies.
/// `corruptions` must configure each kind exactly once.
pub fn augment_corpus(utterances: &[Utterance], corruptions: &[Corruption], seed: u64) -> Result<Vec<AugmentedUtterance>> {
    let mut by_kind: [Option<&Corruption>; 4] = [None; 4];
    for c in corruptions {
        if by_kind[c.spec.kind.index()].replace(c).is_some() {
            return Err(Error::Config(format!("{} corruption configured twice", c.spec.kind)));
        }
    }
    if let Some(k) = CorruptionKind::ALL.into_iter().find(|k| by_kind[k.index()].is_none()) {
        return Err(Error::Config(format!("{k} corruption is not configured")));
    }
    let per: Vec<Vec<AugmentedUtterance>> = utterances
        .par_iter()
        .map(|u| {
            let base = seed::derive_str(seed, &u.id);
            let mut out = vec![AugmentedUtterance { id: u.id.clone(), audio: u.audio.clone(), provenance: Provenance { source: u.id.clone(), kind: None, snr_db: None, seed: base } }];
            for kind in kept_kinds(seed, &u.id) {
                let c = by_kind[kind.index()].expect("checked above");
                out.push(corrupt(u, c, seed::derive(base, c.spec.seed ^ kind.index() as u64))?);
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    Ok(per.into_iter().flatten().collect())
}
