//! Synthetic two-class cohort so the whole pipeline runs without clinical
//! recordings.
//!
//! Every subject is a source-filter "voice": a jittered pulse train mixed
//! with breath noise, shaped by three time-varying formant resonators that
//! step through a random vowel sequence in phrases separated by pauses.
//! The classes differ in how far the vowels are pulled toward the centre of
//! the vowel space: PD subjects articulate with reduced vowel contrast. All
//! other traits (pitch, rate, breathiness, channel tilt, level) vary
//! independently of class.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::augment::CorruptionKind;
use crate::error::{Error, Result};
use crate::frontend::{write_wav, AudioBuffer};
use crate::manifest::{Channel, DatasetManifest, Group, Record, Sex, Task};
use crate::seed;

/// Male vowel formants (F1, F2, F3) in Hz: /a/, /i/, /u/, /e/, /o/.
const VOWELS: [[f64; 3]; 5] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [300.0, 870.0, 2240.0], [530.0, 1840.0, 2480.0], [570.0, 840.0, 2410.0]];
const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 150.0];
const TRANSITION_S: f64 = 0.04;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemoConfig {
    pub n_pd: usize,
    pub n_hc: usize,
    /// Extra speakers outside the cohort, for training the embedding network.
    pub n_background: usize,
    pub tasks: Vec<Task>,
    pub duration_s: f64,
    pub channel: Channel,
    /// Vowel centralization ranges for HC and PD subjects.
    pub hc_centralization: [f64; 2],
    pub pd_centralization: [f64; 2],
    pub seed: u64,
}

impl Default for DemoConfig {
    fn default() -> Self {
        Self {
            n_pd: 60,
            n_hc: 60,
            n_background: 24,
            tasks: vec![Task::Reading, Task::Monologue],
            duration_s: 3.0,
            channel: Channel::Telephone,
            hc_centralization: [0.0, 0.2],
            pd_centralization: [0.45, 0.65],
            seed: 1,
        }
    }
}

impl DemoConfig {
    pub fn sample_rate_hz(&self) -> u32 {
        match self.channel {
            Channel::Telephone => 8000,
            Channel::Highquality => 16000,
        }
    }
}

/// Traits of one synthetic speaker.
#[derive(Debug, Clone, PartialEq)]
pub struct Voice {
    pub sex: Sex,
    pub f0: f64,
    pub vibrato: f64,
    pub centralization: f64,
    pub syllable_s: f64,
    pub breathiness: f64,
    pub tilt: f64,
    pub gain: f64,
}

impl Voice {
    pub fn random(sex: Sex, centralization: f64, rng: &mut seed::Rng) -> Self {
        let f0 = match sex {
            Sex::M => rng.random_range(95.0..145.0),
            Sex::F => rng.random_range(180.0..240.0),
        };
        Self {
            sex,
            f0,
            vibrato: rng.random_range(0.01..0.04),
            centralization,
            syllable_s: rng.random_range(0.15..0.25),
            breathiness: rng.random_range(0.05..0.3),
            tilt: rng.random_range(-0.3..0.3),
            gain: rng.random_range(0.3..0.7),
        }
    }

    fn formants(&self, vowel: usize) -> [f64; 3] {
        let scale = if self.sex == Sex::F { 1.15 } else { 1.0 };
        let mut out = [0.0; 3];
        for (k, o) in out.iter_mut().enumerate() {
            let centre = VOWELS.iter().map(|v| v[k]).sum::<f64>() / VOWELS.len() as f64;
            *o = scale * (centre + (1.0 - self.centralization) * (VOWELS[vowel][k] - centre));
        }
        out
    }
}

struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn step(&mut self, x: f64, freq: f64, bw: f64, rate: f64) -> f64 {
        let r = (-PI * bw / rate).exp();
        let a1 = 2.0 * r * (2.0 * PI * freq / rate).cos();
        let a2 = -r * r;
        let y = (1.0 - r) * x + a1 * self.y1 + a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn gauss(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Renders `duration_s` of speech-like audio with a stationary noise floor
/// `snr_db` below the speech level.
pub fn render(voice: &Voice, duration_s: f64, rate: u32, snr_db: f64, rng: &mut seed::Rng) -> Vec<f64> {
    let fs = f64::from(rate);
    let n = (duration_s * fs) as usize;
    // Syllable plan: (start, end, vowel) with pauses between phrases.
    let mut plan = Vec::new();
    let mut t = rng.random_range(0.1..0.3);
    while t < duration_s {
        let phrase = rng.random_range(3..=6);
        for _ in 0..phrase {
            let d = voice.syllable_s * rng.random_range(0.8..1.2);
            plan.push((t, (t + d).min(duration_s), rng.random_range(0..VOWELS.len())));
            t += d;
        }
        t += rng.random_range(0.15..0.35);
    }
    let mut out = vec![0.0; n];
    let mut res = [Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }, Resonator { y1: 0.0, y2: 0.0 }];
    let mut phase = 0.0;
    let mut glottal = 0.0;
    let mut prev = voice.formants(plan.first().map_or(0, |p| p.2));
    let mut si = 0;
    let mut tilt_prev = 0.0;
    let ramp = 0.02;
    for (i, o) in out.iter_mut().enumerate() {
        let ti = i as f64 / fs;
        while si + 1 < plan.len() && ti >= plan[si].1 {
            prev = voice.formants(plan[si].2);
            si += 1;
        }
        let (s0, s1, v) = plan.get(si).copied().unwrap_or((duration_s, duration_s, 0));
        let env = if ti < s0 || ti >= s1 { 0.0 } else { ((ti - s0) / ramp).min((s1 - ti) / ramp).min(1.0) };
        let target = voice.formants(v);
        let a = ((ti - s0) / TRANSITION_S).clamp(0.0, 1.0);
        let f0 = voice.f0 * (1.0 + voice.vibrato * (2.0 * PI * 4.5 * ti).sin());
        phase += f0 / fs;
        let pulse = if phase >= 1.0 {
            phase -= 1.0;
            1.0
        } else {
            0.0
        };
        glottal = pulse + 0.9 * glottal;
        let excitation = (1.0 - voice.breathiness) * glottal * 0.3 + voice.breathiness * gauss(rng);
        let mut y = excitation * env;
        for k in 0..3 {
            let f = prev[k] + a * (target[k] - prev[k]);
            y = res[k].step(y, f, BANDWIDTHS[k], fs);
        }
        let shaped = y + voice.tilt * tilt_prev;
        tilt_prev = y;
        *o = shaped;
    }
    let speech_power = {
        let active: Vec<f64> = out.iter().copied().filter(|v| v.abs() > 0.0).collect();
        active.iter().map(|v| v * v).sum::<f64>() / active.len().max(1) as f64
    };
    let noise_sd = (speech_power / 10f64.powf(snr_db / 10.0)).sqrt();
    out.iter_mut().for_each(|v| *v += noise_sd * gauss(rng));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        let g = voice.gain / peak;
        out.iter_mut().for_each(|v| *v *= g);
    }
    out
}

/// Stationary noise resembling a recording's room tone.
fn room_tone(duration_s: f64, rate: u32, level: f64, rng: &mut seed::Rng) -> Vec<f64> {
    let mut lp = 0.0;
    (0..(duration_s * f64::from(rate)) as usize)
        .map(|_| {
            lp = 0.7 * lp + gauss(rng);
            level * lp
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DemoOutput {
    pub manifest: PathBuf,
    pub background: PathBuf,
    pub pools: PathBuf,
}

fn write(path: &Path, samples: Vec<f64>, rate: u32) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_wav(path, &AudioBuffer::new(samples, rate)?)
}

fn speaker_records(dir: &Path, root: &Path, id: &str, group: Group, voice: &Voice, cfg: &DemoConfig, rng: &mut seed::Rng) -> Result<Vec<Record>> {
    let rate = cfg.sample_rate_hz();
    let mut out = Vec::new();
    for task in &cfg.tasks {
        let rel = PathBuf::from(format!("{}/{id}/s1_{task}.wav", dir.display()));
        let mut audio = render(voice, cfg.duration_s, rate, 35.0, rng);
        let noise = if cfg.channel == Channel::Highquality {
            // Session room tone, added to the take and recorded on its own.
            let level = voice.gain * 0.01;
            let tone = room_tone(cfg.duration_s + 1.0, rate, level, rng);
            audio.iter_mut().zip(&tone).for_each(|(a, t)| *a += t);
            let nrel = PathBuf::from(format!("{}/{id}/s1_{task}_silence.wav", dir.display()));
            write(&root.join(&nrel), tone[audio.len()..].to_vec(), rate)?;
            Some(nrel)
        } else {
            None
        };
        write(&root.join(&rel), audio, rate)?;
        out.push(Record { subject_id: id.to_string(), group, sex: voice.sex, task: *task, session_id: "s1".into(), audio: rel, channel: cfg.channel, noise, corruption: None });
    }
    Ok(out)
}

fn write_pools(dir: &Path, rate: u32, rng: &mut seed::Rng) -> Result<()> {
    let fs_ = f64::from(rate);
    for i in 0..4 {
        let t60 = rng.random_range(0.2..0.6);
        let len = (rng.random_range(0.3..0.6) * fs_) as usize;
        let rir: Vec<f64> = (0..len).map(|n| if n == 0 { 1.0 } else { 0.5 * gauss(rng) * (-6.9 * n as f64 / (t60 * fs_)).exp() }).collect();
        write(&dir.join(format!("{}/rir{i}.wav", CorruptionKind::Reverb)), rir.iter().map(|v| v * 0.5).collect(), rate)?;
    }
    for i in 0..4 {
        let pole = rng.random_range(0.0..0.95);
        let hum = rng.random_range(0.0..0.3);
        let mut lp = 0.0;
        let noise: Vec<f64> = (0..3 * rate as usize)
            .map(|n| {
                lp = pole * lp + gauss(rng);
                0.1 * (lp * (1.0 - pole) + hum * (2.0 * PI * 50.0 * n as f64 / fs_).sin())
            })
            .collect();
        write(&dir.join(format!("{}/noise{i}.wav", CorruptionKind::Noise)), noise, rate)?;
    }
    for i in 0..3 {
        let mut music = Vec::with_capacity(4 * rate as usize);
        while music.len() < 4 * rate as usize {
            let note = 110.0 * 2f64.powf(rng.random_range(0..24) as f64 / 12.0);
            let len = (rng.random_range(0.25..0.5) * fs_) as usize;
            music.extend((0..len).map(|n| {
                let t = n as f64 / fs_;
                (1..=4).map(|h| (2.0 * PI * note * h as f64 * t).sin() / h as f64).sum::<f64>() * 0.15 * (-3.0 * t).exp()
            }));
        }
        write(&dir.join(format!("{}/music{i}.wav", CorruptionKind::Music)), music, rate)?;
    }
    for i in 0..8 {
        let sex = if i % 2 == 0 { Sex::M } else { Sex::F };
        let c = rng.random_range(0.0..0.7);
        let v = Voice::random(sex, c, rng);
        write(&dir.join(format!("{}/talker{i}.wav", CorruptionKind::Babble)), render(&v, 3.0, rate, 40.0, rng), rate)?;
    }
    Ok(())
}

/// Writes the cohort (`manifest.jsonl`), background speakers
/// (`background.jsonl`) and corruption pools under `out`. Sexes alternate
/// within each class.
pub fn generate(cfg: &DemoConfig, out: impl AsRef<Path>) -> Result<DemoOutput> {
    let out = out.as_ref();
    if cfg.n_pd == 0 || cfg.n_hc == 0 || cfg.tasks.is_empty() || !(cfg.duration_s >= 1.0) {
        return Err(Error::Config("demo needs subjects in both classes, at least one task and 1 s of audio".into()));
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut records = Vec::new();
    for (group, n, range, tag) in [(Group::Pd, cfg.n_pd, cfg.pd_centralization, "pd"), (Group::Hc, cfg.n_hc, cfg.hc_centralization, "hc")] {
        for i in 0..n {
            let id = format!("{tag}{i:03}");
            let mut rng = seed::rng(seed::derive_str(cfg.seed, &id));
            let sex = if i % 2 == 0 { Sex::M } else { Sex::F };
            let c = rng.random_range(range[0]..=range[1]);
            let v = Voice::random(sex, c, &mut rng);
            records.extend(speaker_records(Path::new("cohort"), out, &id, group, &v, cfg, &mut rng)?);
        }
    }
    let mut background = Vec::new();
    for i in 0..cfg.n_background {
        let id = format!("bg{i:03}");
        let mut rng = seed::rng(seed::derive_str(cfg.seed, &id));
        let sex = if i % 2 == 0 { Sex::M } else { Sex::F };
        let c = rng.random_range(0.0..0.7);
        let v = Voice::random(sex, c, &mut rng);
        let group = if c > 0.35 { Group::Pd } else { Group::Hc };
        background.extend(speaker_records(Path::new("background"), out, &id, group, &v, cfg, &mut rng)?);
    }
    let pools = out.join("pools");
    write_pools(&pools, cfg.sample_rate_hz(), &mut seed::rng(seed::derive_str(cfg.seed, "pools")))?;
    let manifest = out.join("manifest.jsonl");
    DatasetManifest::new(records, out)?.save(&manifest)?;
    let bg = out.join("background.jsonl");
    DatasetManifest::new(background, out)?.save(&bg)?;
    Ok(DemoOutput { manifest, background: bg, pools })
}
