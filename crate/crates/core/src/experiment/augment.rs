//! Manifest-level augmentation: corrupted WAVs plus a provenance trail.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::channel_rate_hz;
use crate::augment::{augment_corpus, Corruption, CorruptionKind, CorruptionSpec, Utterance};
use crate::error::{Error, Result};
use crate::frontend::{load_wav, resample, write_wav};
use crate::manifest::{DatasetManifest, Record};

/// Loads `<pools>/<kind>/*.wav` for all four kinds at `rate_hz`.
pub fn load_pools(pools: &Path, rate_hz: u32) -> Result<Vec<Corruption>> {
    CorruptionKind::ALL
        .into_iter()
        .map(|kind| {
            let dir = pools.join(kind.as_str());
            let rd = fs::read_dir(&dir).map_err(|e| Error::Config(format!("missing {kind} pool {}: {e}", dir.display())))?;
            let mut files: Vec<PathBuf> = rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
                .collect();
            files.sort();
            CorruptionSpec::new(kind, files).load(rate_hz)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRow {
    pub utterance_id: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kind: Option<CorruptionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentReport {
    pub manifest: DatasetManifest,
    pub manifest_path: PathBuf,
    pub provenance: Vec<ProvenanceRow>,
}

fn absolute(p: PathBuf) -> Result<PathBuf> {
    std::path::absolute(&p).map_err(|e| Error::io(p, e))
}

/// Writes every original plus two corrupted copies per recording into
/// `out_dir` (`manifest.jsonl`, `provenance.jsonl`, `audio/`). Originals
/// keep their files, referenced by absolute path; the input manifest is not
/// touched.
pub fn augment_manifest(m: &DatasetManifest, pools: &Path, out_dir: &Path, seed: u64) -> Result<AugmentReport> {
    if let Some(r) = m.records.iter().find(|r| r.corruption.is_some()) {
        return Err(Error::Config(format!("{} is already an augmented copy", r.utterance_id())));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut by_rate: BTreeMap<u32, Vec<&Record>> = BTreeMap::new();
    for r in &m.records {
        by_rate.entry(channel_rate_hz(r.channel)).or_default().push(r);
    }
    let mut records = Vec::new();
    let mut provenance = Vec::new();
    for (rate, recs) in by_rate {
        let corruptions = load_pools(pools, rate)?;
        let utts = recs
            .iter()
            .map(|r| {
                let a = load_wav::<f64>(m.resolve(&r.audio), Some(0))?;
                let audio = if a.sample_rate_hz() == rate { a } else { resample(&a, rate)? };
                Ok(Utterance { id: r.utterance_id(), audio })
            })
            .collect::<Result<Vec<_>>>()?;
        let out = augment_corpus(&utts, &corruptions, seed)?;
        for (r, copies) in recs.iter().zip(out.chunks(3)) {
            for c in copies {
                let mut rec = (*r).clone();
                rec.noise = r.noise.as_ref().map(|p| absolute(m.resolve(p))).transpose()?;
                match c.provenance.kind {
                    None => rec.audio = absolute(m.resolve(&r.audio))?,
                    Some(kind) => {
                        let stem = r.audio.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                        let rel = PathBuf::from("audio").join(&r.subject_id).join(&r.session_id).join(format!("{stem}-{kind}.wav"));
                        let path = out_dir.join(&rel);
                        if let Some(d) = path.parent() {
                            fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
                        }
                        write_wav(&path, &c.audio)?;
                        rec.audio = rel;
                        rec.corruption = Some(kind);
                    }
                }
                provenance.push(ProvenanceRow {
                    utterance_id: rec.utterance_id(),
                    source: c.provenance.source.clone(),
                    kind: c.provenance.kind,
                    snr_db: c.provenance.snr_db,
                    seed: c.provenance.seed,
                });
                records.push(rec);
            }
        }
    }
    let manifest = DatasetManifest::new(records, out_dir)?;
    let manifest_path = out_dir.join("manifest.jsonl");
    manifest.save(&manifest_path)?;
    let prov_path = out_dir.join("provenance.jsonl");
    let mut f = fs::File::create(&prov_path).map_err(|e| Error::io(&prov_path, e))?;
    for p in &provenance {
        writeln!(f, "{}", serde_json::to_string(p)?).map_err(|e| Error::io(&prov_path, e))?;
    }
    Ok(AugmentReport { manifest, manifest_path, provenance })
}
