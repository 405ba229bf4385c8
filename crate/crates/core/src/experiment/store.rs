//! On-disk feature store: one feature container per utterance plus a
//! sorted JSON index.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{channel_rate_hz, sha_hex, Preset};
use crate::augment::CorruptionKind;
use crate::error::{Error, Result};
use crate::frontend::{extract, load_wav, resample, AudioBuffer, FeatureMatrix};
use crate::manifest::{Channel, DatasetManifest, Group, Record, Sex, Task};
use crate::persist::{persist_load, to_bytes, Stamp};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreEntry {
    pub utterance_id: String,
    pub subject_id: String,
    pub group: Group,
    pub sex: Sex,
    pub task: Task,
    pub channel: Channel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionKind>,
    pub spectral_subtraction: bool,
    /// File name inside the store directory.
    pub file: String,
    pub n_frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreFailure {
    pub utterance_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreIndex {
    /// Hash of the front-end settings.
    pub fingerprint: String,
    /// Extraction draws no random numbers; always 0.
    pub seed: u64,
    pub preset: Preset,
    pub manifest_hash: String,
    pub entries: Vec<StoreEntry>,
    pub failures: Vec<StoreFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    pub dir: PathBuf,
    pub index: StoreIndex,
}

impl FeatureStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        let path = dir.join(INDEX_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(Self { dir, index: serde_json::from_str(&text)? })
    }

    pub fn features(&self, e: &StoreEntry) -> Result<FeatureMatrix<f64>> {
        Ok(persist_load::<FeatureMatrix<f64>>(self.dir.join(&e.file))?.0)
    }

    /// Every entry with its features, in index order.
    pub fn load_all(&self) -> Result<Vec<(StoreEntry, FeatureMatrix<f64>)>> {
        self.index.entries.par_iter().map(|e| Ok((e.clone(), self.features(e)?))).collect()
    }
}

fn preset_fingerprint(p: Preset) -> String {
    sha_hex(&serde_json::to_vec(&(p, p.frontend())).expect("serializable"))[..16].to_string()
}

pub fn manifest_hash(m: &DatasetManifest) -> String {
    let lines: Vec<String> = m.records.iter().map(|r| serde_json::to_string(r).expect("serializable")).collect();
    sha_hex(lines.join("\n").as_bytes())
}

fn load_at(path: &Path, rate: u32) -> Result<AudioBuffer<f64>> {
    let a = load_wav::<f64>(path, Some(0))?;
    if a.sample_rate_hz() == rate {
        Ok(a)
    } else {
        resample(&a, rate)
    }
}

/// Front-end for one record. Spectral subtraction runs only on
/// high-quality recordings that have a noise reference.
fn extract_record(m: &DatasetManifest, r: &Record, preset: Preset) -> Result<(FeatureMatrix<f64>, bool)> {
    let rate = channel_rate_hz(r.channel);
    let audio = load_at(&m.resolve(&r.audio), rate)?;
    let noise = match (&r.noise, r.channel) {
        (Some(p), Channel::Highquality) => Some(load_at(&m.resolve(p), rate)?),
        _ => None,
    };
    let mut fm = extract(&audio, noise.as_ref(), &preset.frontend())?;
    if fm.n_frames() == 0 {
        return Err(Error::NoVoicedFrames);
    }
    fm.meta.utterance_id = r.utterance_id();
    Ok((fm, noise.is_some()))
}

/// Runs the front-end over every record and rewrites `dir` from scratch.
/// Per-record failures are logged and listed in the index.
pub fn extract_store(m: &DatasetManifest, preset: Preset, dir: impl AsRef<Path>) -> Result<FeatureStore> {
    let dir = dir.as_ref();
    if m.is_empty() {
        log::warn!("manifest is empty; writing an empty feature store");
    }
    let mut ids: Vec<String> = m.records.iter().map(Record::utterance_id).collect();
    ids.sort();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::Format(format!("utterance {} listed twice", w[0])));
    }
    let fingerprint = preset_fingerprint(preset);
    let stamp = Stamp { fingerprint: fingerprint.clone(), seed: 0 };
    let results: Vec<(String, Result<(StoreEntry, Vec<u8>)>)> = m
        .records
        .par_iter()
        .map(|r| {
            let id = r.utterance_id();
            let res = extract_record(m, r, preset).and_then(|(fm, ss)| {
                let file = format!("{}.pvt", &sha_hex(id.as_bytes())[..16]);
                let entry = StoreEntry {
                    utterance_id: id.clone(),
                    subject_id: r.subject_id.clone(),
                    group: r.group,
                    sex: r.sex,
                    task: r.task,
                    channel: r.channel,
                    corruption: r.corruption,
                    spectral_subtraction: ss,
                    file,
                    n_frames: fm.n_frames(),
                };
                Ok((entry, to_bytes(&fm, &stamp)?))
            });
            (id, res)
        })
        .collect();

    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::new();
    let mut failures = Vec::new();
    for (id, res) in results {
        match res {
            Ok((entry, bytes)) => {
                let path = dir.join(&entry.file);
                fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
                entries.push(entry);
            }
            Err(e) => {
                log::error!("{id}: {e}");
                failures.push(StoreFailure { utterance_id: id, error: e.to_string() });
            }
        }
    }
    entries.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    failures.sort_by(|a, b| a.utterance_id.cmp(&b.utterance_id));
    if !failures.is_empty() {
        log::warn!("{} of {} recordings failed feature extraction", failures.len(), m.len());
    }
    let index = StoreIndex { fingerprint, seed: 0, preset, manifest_hash: manifest_hash(m), entries, failures };
    let path = dir.join(INDEX_FILE);
    let mut text = serde_json::to_string_pretty(&index)?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(FeatureStore { dir: dir.to_path_buf(), index })
}

/// Store directory for a manifest under `work`.
pub fn store_dir(work: &Path, m: &DatasetManifest, preset: Preset) -> PathBuf {
    work.join("store").join(format!("{preset}-{}", &manifest_hash(m)[..12]))
}

/// Reuses an existing store for the same manifest and preset, extracting
/// it otherwise.
pub fn ensure_store(m: &DatasetManifest, preset: Preset, work: &Path) -> Result<FeatureStore> {
    let dir = store_dir(work, m, preset);
    if let Ok(s) = FeatureStore::open(&dir) {
        if s.index.manifest_hash == manifest_hash(m) && s.index.fingerprint == preset_fingerprint(preset) {
            return Ok(s);
        }
    }
    extract_store(m, preset, dir)
}
