//! Per-sex training and evaluation over repeated random splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::augment::augment_manifest;
use super::store::{ensure_store, FeatureStore};
use super::{Classifier, ExperimentConfig, ExtractorConfig, Preset, Workspace};
use crate::augment::CorruptionKind;
use crate::backend::{classify_subject, Backend, BackendKind, ClassCentroids, LdaProjection, PldaModel};
use crate::error::{Error, Result};
use crate::eval::{check_coverage, compute_eer, det_curve, make_splits, run_experiment, simple_model_from_runs, AggregatedScores, SplitPlan};
use crate::frontend::{chunk_segments, FeatureMatrix, FeatureMeta};
use crate::gmm::{em_fit, kmeans_init, score_subject, GmmModel};
use crate::linalg::Matrix;
use crate::manifest::{Channel, DatasetManifest, Group, Sex};
use crate::persist::{persist_load, persist_save, Artifact, Stamp};
use crate::seed;
use crate::tdnn::{extract_xvectors, init_weights, Sgd, TdnnConfig, TdnnWeights, XVector};

const CONFIG_FILE: &str = "config.json";
const PLANS_FILE: &str = "plans.json";
const XVECTORS_FILE: &str = "xvectors.json";
const EXTRACTOR_FILE: &str = "extractor.pvt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PlansFile {
    fingerprint: String,
    seed: u64,
    sex: Sex,
    n_train: usize,
    plans: Vec<SplitPlan>,
}

/// Embeddings of one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct UtteranceXvectors {
    utterance_id: String,
    subject_id: String,
    group: Group,
    sex: Sex,
    corruption: Option<CorruptionKind>,
    xvectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct XvectorsFile {
    fingerprint: String,
    seed: u64,
    utterances: Vec<UtteranceXvectors>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_dir: PathBuf,
    pub fingerprint: String,
    /// Plans trained per sex.
    pub plans: BTreeMap<Sex, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SexReport {
    pub sex: Sex,
    pub n_pd: usize,
    pub n_hc: usize,
    pub n_train: usize,
    pub n_runs: usize,
    pub eer_aggregated: f64,
    pub threshold: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eer_simple: Option<f64>,
    pub min_tests: usize,
    pub max_tests: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub fingerprint: String,
    pub seed: u64,
    pub classifier: Classifier,
    pub channel: Channel,
    pub reports: Vec<SexReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SexSummary {
    fingerprint: String,
    seed: u64,
    classifier: Classifier,
    channel: Channel,
    #[serde(flatten)]
    report: SexReport,
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<S: Serialize>(path: &Path, v: &S) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    write_text(path, &text)
}

fn read_json<S: serde::de::DeserializeOwned>(path: &Path) -> Result<S> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn save<A: Artifact>(a: &A, path: &Path, stamp: &Stamp) -> Result<()> {
    if let Some(d) = path.parent() {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }
    persist_save(a, path, stamp)
}

fn sex_dir(run: &Path, sex: Sex) -> PathBuf {
    run.join(sex.to_string())
}

fn plan_dir(run: &Path, sex: Sex, plan: &SplitPlan) -> PathBuf {
    sex_dir(run, sex).join(format!("run{:03}", plan.run_index))
}

/// Cohort recordings for this experiment: matching channel and tasks, no
/// corrupted copies.
fn cohort_manifest(ws: &Workspace, cfg: &ExperimentConfig) -> Result<DatasetManifest> {
    let m = DatasetManifest::load(&ws.manifest)?;
    let m = m.filter(|r| r.channel == cfg.channel && r.corruption.is_none() && (cfg.tasks.is_empty() || cfg.tasks.contains(&r.task)));
    if m.is_empty() {
        return Err(Error::Empty("cohort after channel and task filtering"));
    }
    Ok(m)
}

fn default_n_train(cohort: &BTreeMap<String, Group>) -> usize {
    let pd = cohort.values().filter(|g| g.is_pd()).count();
    let hc = cohort.len() - pd;
    2 * pd.min(hc) / 3
}

/// Stacks feature matrices of one layout into one.
fn stack(mats: &[&FeatureMatrix<f64>], id: &str) -> Result<FeatureMatrix<f64>> {
    let first = mats.first().ok_or(Error::Empty("feature list"))?;
    let mut data = Vec::with_capacity(mats.iter().map(|m| m.frames().as_slice().len()).sum());
    for m in mats {
        if m.dim() != first.dim() {
            return Err(Error::DimensionMismatch { expected: first.dim(), got: m.dim() });
        }
        data.extend_from_slice(m.frames().as_slice());
    }
    let rows = data.len() / first.dim();
    let meta = FeatureMeta { utterance_id: id.to_string(), ..FeatureMeta::default() };
    FeatureMatrix::with_layout(Matrix::from_vec(rows, first.dim(), data)?, first.frame_hop_ms(), first.base_dim(), first.delta_order(), meta)
}

/// Original recordings of one sex, grouped per subject.
struct SexCohort {
    sex: Sex,
    groups: BTreeMap<String, Group>,
    features: BTreeMap<String, Vec<FeatureMatrix<f64>>>,
}

fn load_cohorts(store: &FeatureStore, sexes: &[Sex]) -> Result<Vec<SexCohort>> {
    let all = store.load_all()?;
    Ok(sexes
        .iter()
        .map(|&sex| {
            let mut c = SexCohort { sex, groups: BTreeMap::new(), features: BTreeMap::new() };
            for (e, fm) in all.iter().filter(|(e, _)| e.sex == sex && e.corruption.is_none()) {
                c.groups.insert(e.subject_id.clone(), e.group);
                c.features.entry(e.subject_id.clone()).or_default().push(fm.clone());
            }
            c
        })
        .collect())
}

fn n_train_for(cfg: &ExperimentConfig, c: &SexCohort) -> Result<usize> {
    let n = cfg.n_train.unwrap_or_else(|| default_n_train(&c.groups));
    if n == 0 {
        return Err(Error::Infeasible(format!("sex {}: too few subjects to train on", c.sex)));
    }
    Ok(n)
}

fn train_gmm_plan(cfg: &ExperimentConfig, c: &SexCohort, plan: &SplitPlan, dir: &Path, stamp: &Stamp) -> Result<()> {
    for (group, ids, tag, k) in [(Group::Pd, &plan.train_pd, "pd", 1), (Group::Hc, &plan.train_hc, "hc", 2)] {
        let mats: Vec<&FeatureMatrix<f64>> = ids.iter().flat_map(|s| c.features.get(s).into_iter().flatten()).collect();
        let frames = stack(&mats, tag)?;
        let mut init = kmeans_init(&frames, cfg.gmm_components(), seed::derive(plan.seed, k))?;
        init.label = Some(group);
        let (model, trace) = em_fit(&init, &frames, cfg.gmm_max_iter, cfg.gmm_tol)?;
        log::debug!("sex {} run {} {tag}: {} EM iterations", c.sex, plan.run_index, trace.iterations);
        save(&model, &dir.join(format!("gmm_{tag}.pvt")), stamp)?;
    }
    Ok(())
}

fn score_gmm_plan(cfg: &ExperimentConfig, c: &SexCohort, plan: &SplitPlan, dir: &Path) -> Result<Vec<(String, f64)>> {
    let (pd, _) = persist_load::<GmmModel<f64>>(dir.join("gmm_pd.pvt"))?;
    let (hc, _) = persist_load::<GmmModel<f64>>(dir.join("gmm_hc.pvt"))?;
    plan.test()
        .map(|(s, _)| {
            let mats: Vec<&FeatureMatrix<f64>> = c.features.get(s).into_iter().flatten().collect();
            let fm = stack(&mats, s)?;
            Ok((s.to_string(), score_subject(&fm, &pd, &hc, cfg.sigmoid_slope)?.score))
        })
        .collect()
}

/// Trains the embedding network as a speaker classifier over the
/// background speakers, on random crops.
pub(crate) fn train_extractor(store: &FeatureStore, cfg: &ExtractorConfig, seed_: u64) -> Result<TdnnWeights<f32>> {
    let items: Vec<(usize, FeatureMatrix<f32>)> = {
        let all = store.load_all()?;
        let speakers: BTreeSet<&str> = all.iter().map(|(e, _)| e.subject_id.as_str()).collect();
        let index: BTreeMap<&str, usize> = speakers.iter().enumerate().map(|(i, s)| (*s, i)).collect();
        all.iter().filter(|(e, _)| e.corruption.is_none()).map(|(e, fm)| (index[e.subject_id.as_str()], fm.cast())).collect()
    };
    let n_classes = items.iter().map(|(k, _)| k + 1).max().unwrap_or(0);
    if n_classes < 2 {
        return Err(Error::Config("training the embedding network needs at least two background speakers".into()));
    }
    let input_dim = items[0].1.dim();
    let mut tcfg = TdnnConfig::xvector(input_dim, n_classes);
    if let Some(w) = cfg.widths {
        tcfg = tcfg.with_widths(w.frame, w.embed, w.hidden);
    }
    let min = tcfg.min_frames();
    let usable: Vec<&(usize, FeatureMatrix<f32>)> = items.iter().filter(|(_, fm)| fm.n_frames() >= min).collect();
    if usable.is_empty() {
        return Err(Error::TooShort(format!("no background recording reaches {min} voiced frames")));
    }
    let mut w = init_weights::<f32>(&tcfg, seed::derive_str(seed_, "extractor-init"))?;
    let mut opt = Sgd::new(cfg.lr, cfg.momentum);
    let batch_seed = seed::derive_str(seed_, "extractor-batches");
    for step in 0..cfg.steps {
        let mut rng = seed::rng(seed::derive(batch_seed, step as u64));
        let batch: Vec<(FeatureMatrix<f32>, usize)> = (0..cfg.batch)
            .map(|_| {
                let (k, fm) = usable[rng.random_range(0..usable.len())];
                let len = cfg.segment_frames.clamp(min, fm.n_frames());
                let start = rng.random_range(0..=fm.n_frames() - len);
                (fm.slice(start, start + len), *k)
            })
            .collect();
        let loss = opt.step(&mut w, &batch)?;
        if step % 10 == 0 || step + 1 == cfg.steps {
            log::info!("extractor step {step}: loss {loss:.4}");
        }
    }
    Ok(w)
}

fn embed_store(w: &TdnnWeights<f32>, store: &FeatureStore, segment_s: [f64; 2], seed_: u64) -> Result<Vec<UtteranceXvectors>> {
    store
        .index
        .entries
        .par_iter()
        .map(|e| {
            let fm = store.features(e)?.cast::<f32>();
            let segs = chunk_segments(&fm, segment_s[0], segment_s[1], seed::derive_str(seed_, &e.utterance_id))?;
            let xv = if segs.is_empty() { Vec::new() } else { extract_xvectors(w, &segs)? };
            if xv.is_empty() {
                log::warn!("{}: no segment long enough for an x-vector", e.utterance_id);
            }
            Ok(UtteranceXvectors {
                utterance_id: e.utterance_id.clone(),
                subject_id: e.subject_id.clone(),
                group: e.group,
                sex: e.sex,
                corruption: e.corruption,
                xvectors: xv.into_iter().map(|x| x.values).collect(),
            })
        })
        .collect()
}

fn xvectors_of<'a>(all: &'a [UtteranceXvectors], subjects: impl Iterator<Item = (&'a str, Group)>, with_corrupted: bool) -> (Vec<XVector>, Vec<Group>) {
    let wanted: BTreeMap<&str, Group> = subjects.collect();
    let mut xs = Vec::new();
    let mut gs = Vec::new();
    for u in all.iter().filter(|u| (with_corrupted || u.corruption.is_none()) && wanted.contains_key(u.subject_id.as_str())) {
        for (i, v) in u.xvectors.iter().enumerate() {
            xs.push(XVector { values: v.clone(), segment: Some(i), subject_id: u.subject_id.clone() });
            gs.push(u.group);
        }
    }
    (xs, gs)
}

fn train_xvec_plan(cfg: &ExperimentConfig, kind: BackendKind, xv: &[UtteranceXvectors], plan: &SplitPlan, dir: &Path, stamp: &Stamp) -> Result<()> {
    let (xs, gs) = xvectors_of(xv, plan.train(), cfg.augment_backend);
    let backend = Backend::fit(kind, &cfg.backend, &xs, &gs)?;
    let centroids = ClassCentroids::fit(&xs, &gs)?;
    match &backend {
        Backend::Cos => {}
        Backend::LdaCos(lda) => save(lda, &dir.join("lda.pvt"), stamp)?,
        Backend::Plda(lda, plda) => {
            save(lda, &dir.join("lda.pvt"), stamp)?;
            save(plda, &dir.join("plda.pvt"), stamp)?;
        }
    }
    save(&centroids, &dir.join("centroids.pvt"), stamp)
}

fn score_xvec_plan(cfg: &ExperimentConfig, kind: BackendKind, xv: &[UtteranceXvectors], plan: &SplitPlan, dir: &Path) -> Result<Vec<(String, f64)>> {
    let backend = match kind {
        BackendKind::Cos => Backend::Cos,
        BackendKind::LdaCos => Backend::LdaCos(persist_load::<LdaProjection<f64>>(dir.join("lda.pvt"))?.0),
        BackendKind::Plda => Backend::Plda(persist_load::<LdaProjection<f64>>(dir.join("lda.pvt"))?.0, persist_load::<PldaModel<f64>>(dir.join("plda.pvt"))?.0),
    };
    let (centroids, _) = persist_load::<ClassCentroids>(dir.join("centroids.pvt"))?;
    plan.test()
        .map(|(s, g)| {
            let (xs, _) = xvectors_of(xv, std::iter::once((s, g)), false);
            if xs.is_empty() {
                return Err(Error::NoVoicedFrames);
            }
            Ok((s.to_string(), classify_subject(&xs, &backend, &centroids, cfg.sigmoid_slope)?.score))
        })
        .collect()
}

fn stamp(cfg: &ExperimentConfig) -> Stamp {
    Stamp { fingerprint: cfg.fingerprint(), seed: cfg.seed }
}

fn extractor(ws: &Workspace, cfg: &ExperimentConfig, preset: Preset, run: &Path) -> Result<TdnnWeights<f32>> {
    let w = match &cfg.extractor.weights {
        Some(p) => persist_load::<TdnnWeights<f32>>(p)?.0,
        None => {
            let bg = ws.background.as_ref().ok_or_else(|| Error::Config("x-vector classifiers need background speakers or pretrained weights".into()))?;
            let m = DatasetManifest::load(bg)?.filter(|r| r.channel == cfg.channel && r.corruption.is_none());
            let store = ensure_store(&m, preset, &ws.work)?;
            train_extractor(&store, &cfg.extractor, cfg.seed)?
        }
    };
    if w.config().input_dim != preset.frontend().dim() {
        return Err(Error::DimensionMismatch { expected: preset.frontend().dim(), got: w.config().input_dim });
    }
    save(&w, &run.join(EXTRACTOR_FILE), &stamp(cfg))?;
    Ok(w)
}

/// Fits every per-plan model for each requested sex and saves it under the
/// run directory.
pub fn train(ws: &Workspace, cfg: &ExperimentConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let preset = cfg.preset();
    let fp = cfg.fingerprint();
    let run = ws.run_dir(cfg);
    let st = stamp(cfg);
    let cohort = cohort_manifest(ws, cfg)?;
    let store = ensure_store(&cohort, preset, &ws.work)?;
    if !store.index.failures.is_empty() {
        return Err(Error::Format(format!("{} cohort recordings failed feature extraction", store.index.failures.len())));
    }
    let sexes = cfg.sex.sexes();
    let cohorts = load_cohorts(&store, &sexes)?;
    let mut all_plans = Vec::new();
    for c in &cohorts {
        let n_train = n_train_for(cfg, c)?;
        let plans = make_splits(&c.groups, n_train, cfg.n_runs, seed::derive_str(cfg.seed, &format!("splits-{}", c.sex)))?;
        check_coverage(&plans)?;
        write_json(&sex_dir(&run, c.sex).join(PLANS_FILE), &PlansFile { fingerprint: fp.clone(), seed: cfg.seed, sex: c.sex, n_train, plans: plans.clone() })?;
        all_plans.push(plans);
    }
    write_json(&run.join(CONFIG_FILE), cfg)?;

    match cfg.classifier.backend() {
        None => {
            for (c, plans) in cohorts.iter().zip(&all_plans) {
                plans.par_iter().map(|p| train_gmm_plan(cfg, c, p, &plan_dir(&run, c.sex, p), &st)).collect::<Result<Vec<()>>>()?;
            }
        }
        Some(kind) => {
            let w = extractor(ws, cfg, preset, &run)?;
            let mut utts = embed_store(&w, &store, cfg.segment_s, cfg.seed)?;
            if cfg.augment_backend {
                let pools = ws.pools.as_ref().ok_or_else(|| Error::Config("back-end augmentation needs corruption pools".into()))?;
                let aug = augment_manifest(&cohort, pools, &run.join("augmented"), cfg.seed)?;
                let corrupted = aug.manifest.filter(|r| r.corruption.is_some());
                let aug_store = ensure_store(&corrupted, preset, &ws.work)?;
                utts.extend(embed_store(&w, &aug_store, cfg.segment_s, cfg.seed)?);
            }
            utts.retain(|u| sexes.contains(&u.sex));
            write_json(&run.join(XVECTORS_FILE), &XvectorsFile { fingerprint: fp.clone(), seed: cfg.seed, utterances: utts.clone() })?;
            for (c, plans) in cohorts.iter().zip(&all_plans) {
                plans.par_iter().map(|p| train_xvec_plan(cfg, kind, &utts, p, &plan_dir(&run, c.sex, p), &st)).collect::<Result<Vec<()>>>()?;
            }
        }
    }
    let plans = cohorts.iter().zip(&all_plans).map(|(c, p)| (c.sex, p.len())).collect();
    Ok(TrainReport { run_dir: run, fingerprint: fp, plans })
}

fn csv_header(cfg: &ExperimentConfig) -> String {
    format!("# fingerprint={} seed={}\n", cfg.fingerprint(), cfg.seed)
}

fn report(sex: Sex, n_train: usize, agg: &AggregatedScores, compare_simple: bool) -> Result<SexReport> {
    let (eer, threshold) = compute_eer(&agg.labelled())?;
    let tests: Vec<usize> = agg.subjects.values().map(|a| a.runs.len()).collect();
    Ok(SexReport {
        sex,
        n_pd: agg.subjects.values().filter(|a| a.group.is_pd()).count(),
        n_hc: agg.subjects.values().filter(|a| !a.group.is_pd()).count(),
        n_train,
        n_runs: agg.runs.len(),
        eer_aggregated: eer,
        threshold,
        eer_simple: if compare_simple { Some(simple_model_from_runs(&agg.runs)?.eer) } else { None },
        min_tests: tests.iter().copied().min().unwrap_or(0),
        max_tests: tests.iter().copied().max().unwrap_or(0),
    })
}

/// Scores every plan's test subjects with the trained models and writes
/// `scores.csv`, `det_curve.csv` and `summary.json` per sex, plus a
/// top-level `summary.json`.
pub fn evaluate(ws: &Workspace, cfg: &ExperimentConfig, compare_simple: bool) -> Result<Summary> {
    cfg.validate()?;
    let run = ws.run_dir(cfg);
    if !run.join(CONFIG_FILE).exists() {
        return Err(Error::Untrained("run directory (run train first)"));
    }
    let fp = cfg.fingerprint();
    let sexes = cfg.sex.sexes();
    let xv = match cfg.classifier.backend() {
        Some(_) => Some(read_json::<XvectorsFile>(&run.join(XVECTORS_FILE))?.utterances),
        None => None,
    };
    let cohorts = match cfg.classifier.backend() {
        None => {
            let store = ensure_store(&cohort_manifest(ws, cfg)?, cfg.preset(), &ws.work)?;
            load_cohorts(&store, &sexes)?
        }
        Some(_) => Vec::new(),
    };
    let mut reports = Vec::new();
    for (i, &sex) in sexes.iter().enumerate() {
        let plans_file: PlansFile = read_json(&sex_dir(&run, sex).join(PLANS_FILE))?;
        if plans_file.fingerprint != fp {
            return Err(Error::Config(format!("plans in {} belong to another configuration", run.display())));
        }
        let plans = &plans_file.plans;
        let agg = match (cfg.classifier.backend(), &xv) {
            (Some(kind), Some(xv)) => run_experiment(plans, |p| score_xvec_plan(cfg, kind, xv, p, &plan_dir(&run, sex, p)))?,
            _ => run_experiment(plans, |p| score_gmm_plan(cfg, &cohorts[i], p, &plan_dir(&run, sex, p)))?,
        };
        let dir = sex_dir(&run, sex);
        write_text(&dir.join("scores.csv"), &(csv_header(cfg) + &agg.to_csv(|_| sex.to_string())))?;
        write_text(&dir.join("det_curve.csv"), &(csv_header(cfg) + &det_curve(&agg.labelled())?.to_csv()))?;
        let rep = report(sex, plans_file.n_train, &agg, compare_simple)?;
        log::info!("sex {sex}: aggregated EER {:.4}", rep.eer_aggregated);
        write_json(&dir.join("summary.json"), &SexSummary { fingerprint: fp.clone(), seed: cfg.seed, classifier: cfg.classifier, channel: cfg.channel, report: rep.clone() })?;
        reports.push(rep);
    }
    let summary = Summary { fingerprint: fp, seed: cfg.seed, classifier: cfg.classifier, channel: cfg.channel, reports };
    write_json(&run.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{generate, DemoConfig};
    use crate::experiment::TdnnWidths;

    fn small_demo(dir: &Path) -> Workspace {
        let cfg = DemoConfig { n_pd: 6, n_hc: 6, n_background: 4, duration_s: 2.0, ..DemoConfig::default() };
        generate(&cfg, dir).unwrap();
        Workspace::from_root(dir)
    }

    fn tiny_extractor() -> ExtractorConfig {
        ExtractorConfig { steps: 3, batch: 4, segment_frames: 60, widths: Some(TdnnWidths { frame: [16, 16, 16, 16, 48], embed: 16, hidden: 16 }), ..ExtractorConfig::default() }
    }

    #[test]
    fn default_split_size_is_two_thirds_of_smaller_class() {
        let mut c = BTreeMap::new();
        for i in 0..9 {
            c.insert(format!("p{i}"), Group::Pd);
        }
        for i in 0..6 {
            c.insert(format!("h{i}"), Group::Hc);
        }
        assert_eq!(default_n_train(&c), 4);
    }

    #[test]
    fn gmm_train_then_evaluate() {
        let dir = tempfile::tempdir().unwrap();
        let ws = small_demo(dir.path());
        let cfg = ExperimentConfig { sex: super::super::SexFilter::M, n_runs: 12, gmm_components: Some(4), gmm_max_iter: 5, ..ExperimentConfig::default() };
        assert!(matches!(evaluate(&ws, &cfg, false), Err(Error::Untrained(_))));
        let t = train(&ws, &cfg).unwrap();
        assert_eq!(t.plans[&Sex::M], 12);
        let s = evaluate(&ws, &cfg, true).unwrap();
        assert_eq!(s.reports.len(), 1);
        let r = &s.reports[0];
        assert_eq!((r.n_pd, r.n_hc, r.n_train), (3, 3, 2));
        assert!(r.eer_simple.is_some());
        let scores = fs::read_to_string(t.run_dir.join("M/scores.csv")).unwrap();
        assert!(scores.starts_with(&format!("# fingerprint={} seed=1\nsubject,sex,label,score,n_tests\n", cfg.fingerprint())));
        let sub: serde_json::Value = serde_json::from_str(&fs::read_to_string(t.run_dir.join("M/summary.json")).unwrap()).unwrap();
        assert_eq!(sub["fingerprint"], cfg.fingerprint());
        assert_eq!(sub["seed"], 1);
    }

    #[test]
    fn xvec_pipeline_with_augmented_backend() {
        let dir = tempfile::tempdir().unwrap();
        let ws = small_demo(dir.path());
        let cfg = ExperimentConfig {
            classifier: Classifier::XvecPlda,
            sex: super::super::SexFilter::F,
            n_runs: 12,
            augment_backend: true,
            extractor: tiny_extractor(),
            backend: crate::backend::BackendConfig { plda_lda_dim: 3, ..Default::default() },
            ..ExperimentConfig::default()
        };
        let t = train(&ws, &cfg).unwrap();
        assert!(t.run_dir.join(EXTRACTOR_FILE).exists());
        assert!(t.run_dir.join("F/run000/plda.pvt").exists());
        let xv: XvectorsFile = read_json(&t.run_dir.join(XVECTORS_FILE)).unwrap();
        let n_orig = xv.utterances.iter().filter(|u| u.corruption.is_none()).count();
        assert_eq!(xv.utterances.len(), 3 * n_orig);
        let s = evaluate(&ws, &cfg, false).unwrap();
        assert!(s.reports[0].eer_aggregated <= 0.5 + 1e-12);
    }

    #[test]
    fn infeasible_split_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let ws = small_demo(dir.path());
        let cfg = ExperimentConfig { sex: super::super::SexFilter::M, n_train: Some(3), n_runs: 2, ..ExperimentConfig::default() };
        assert!(matches!(train(&ws, &cfg), Err(Error::Infeasible(_))));
    }
}
