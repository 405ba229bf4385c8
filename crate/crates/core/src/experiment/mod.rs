//! Experiment orchestration: configuration, feature store, per-sex training
//! and evaluation under a run directory named by the config fingerprint.

mod augment;
mod pipeline;
mod store;

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use self::augment::{augment_manifest, load_pools, AugmentReport};
pub use self::pipeline::{evaluate, train, SexReport, Summary, TrainReport};
pub use self::store::{ensure_store, extract_store, store_dir, FeatureStore, StoreEntry, StoreFailure, StoreIndex};

use crate::backend::{BackendConfig, BackendKind};
use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::gmm::{DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::manifest::{Channel, Sex, Task};

/// Named front-end settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    GmmHighquality,
    GmmTelephone,
    XvecHighquality,
    XvecTelephone,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Self::GmmHighquality, Self::GmmTelephone, Self::XvecHighquality, Self::XvecTelephone];

    pub fn frontend(self) -> FrontendConfig {
        match self {
            Self::GmmHighquality => FrontendConfig::gmm_highquality(),
            Self::GmmTelephone => FrontendConfig::gmm_telephone(),
            Self::XvecHighquality => FrontendConfig::xvec_highquality(),
            Self::XvecTelephone => FrontendConfig::xvec_telephone(),
        }
    }

    pub fn channel(self) -> Channel {
        match self {
            Self::GmmHighquality | Self::XvecHighquality => Channel::Highquality,
            Self::GmmTelephone | Self::XvecTelephone => Channel::Telephone,
        }
    }

    pub fn is_gmm(self) -> bool {
        matches!(self, Self::GmmHighquality | Self::GmmTelephone)
    }

    pub fn for_classifier(classifier: Classifier, channel: Channel) -> Self {
        match (classifier == Classifier::Gmm, channel) {
            (true, Channel::Highquality) => Self::GmmHighquality,
            (true, Channel::Telephone) => Self::GmmTelephone,
            (false, Channel::Highquality) => Self::XvecHighquality,
            (false, Channel::Telephone) => Self::XvecTelephone,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::GmmHighquality => "gmm-highquality",
            Self::GmmTelephone => "gmm-telephone",
            Self::XvecHighquality => "xvec-highquality",
            Self::XvecTelephone => "xvec-telephone",
        }
    }
}

/// Working sample rate for a channel.
pub fn channel_rate_hz(channel: Channel) -> u32 {
    match channel {
        Channel::Telephone => 8000,
        Channel::Highquality => 16000,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Classifier {
    Gmm,
    XvecCos,
    XvecLdaCos,
    XvecPlda,
}

impl Classifier {
    pub const ALL: [Classifier; 4] = [Self::Gmm, Self::XvecCos, Self::XvecLdaCos, Self::XvecPlda];

    pub fn backend(self) -> Option<BackendKind> {
        match self {
            Self::Gmm => None,
            Self::XvecCos => Some(BackendKind::Cos),
            Self::XvecLdaCos => Some(BackendKind::LdaCos),
            Self::XvecPlda => Some(BackendKind::Plda),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gmm => "gmm",
            Self::XvecCos => "xvec-cos",
            Self::XvecLdaCos => "xvec-lda-cos",
            Self::XvecPlda => "xvec-plda",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SexFilter {
    M,
    F,
    Both,
}

impl SexFilter {
    pub fn sexes(self) -> Vec<Sex> {
        match self {
            Self::M => vec![Sex::M],
            Self::F => vec![Sex::F],
            Self::Both => vec![Sex::M, Sex::F],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::M => "m",
            Self::F => "f",
            Self::Both => "both",
        }
    }
}

macro_rules! named {
    ($t:ty) => {
        impl fmt::Display for $t {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
        impl FromStr for $t {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::ALL
                    .into_iter()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| Error::Config(format!("unknown {} '{s}'", stringify!($t).to_lowercase())))
            }
        }
    };
}

impl SexFilter {
    const ALL: [SexFilter; 3] = [Self::M, Self::F, Self::Both];
}

named!(Preset);
named!(Classifier);
named!(SexFilter);

/// Frame widths, embedding width and segment hidden width of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TdnnWidths {
    pub frame: [usize; 5],
    pub embed: usize,
    pub hidden: usize,
}

/// Speaker-classification training of the embedding network on the
/// background speakers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub steps: usize,
    pub batch: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Length of the random crops fed to training.
    pub segment_frames: usize,
    /// `None` keeps the full-size topology.
    pub widths: Option<TdnnWidths>,
    /// Pretrained weights; skips training when set.
    pub weights: Option<PathBuf>,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { steps: 40, batch: 8, lr: 0.01, momentum: 0.9, segment_frames: 200, widths: None, weights: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    /// `None` picks the preset matching classifier and channel.
    pub preset: Option<Preset>,
    pub channel: Channel,
    pub sex: SexFilter,
    /// Empty keeps every task.
    pub tasks: Vec<Task>,
    pub classifier: Classifier,
    /// Add augmented copies of the training subjects to back-end training.
    pub augment_backend: bool,
    /// Training subjects per class; `None` takes two thirds of the smaller class.
    pub n_train: Option<usize>,
    pub n_runs: usize,
    /// Segment duration range for x-vector extraction, seconds.
    pub segment_s: [f64; 2],
    pub seed: u64,
    /// `None` selects 20 components for high-quality audio and 50 for telephone.
    pub gmm_components: Option<usize>,
    pub gmm_max_iter: usize,
    pub gmm_tol: f64,
    pub sigmoid_slope: f64,
    pub backend: BackendConfig,
    pub extractor: ExtractorConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            preset: None,
            channel: Channel::Telephone,
            sex: SexFilter::Both,
            tasks: Vec::new(),
            classifier: Classifier::Gmm,
            augment_backend: false,
            n_train: None,
            n_runs: crate::eval::DEFAULT_RUNS,
            segment_s: [1.0, 5.0],
            seed: 1,
            gmm_components: None,
            gmm_max_iter: DEFAULT_MAX_ITER,
            gmm_tol: DEFAULT_TOL,
            sigmoid_slope: 1.0,
            backend: BackendConfig::default(),
            extractor: ExtractorConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn preset(&self) -> Preset {
        self.preset.unwrap_or_else(|| Preset::for_classifier(self.classifier, self.channel))
    }

    pub fn gmm_components(&self) -> usize {
        self.gmm_components.unwrap_or(match self.channel {
            Channel::Highquality => 20,
            Channel::Telephone => 50,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.preset();
        if p.channel() != self.channel {
            return Err(Error::Config(format!("preset {p} does not match channel {}", self.channel)));
        }
        if p.is_gmm() != (self.classifier == Classifier::Gmm) {
            return Err(Error::Config(format!("preset {p} does not fit classifier {}", self.classifier)));
        }
        p.frontend().validate(channel_rate_hz(self.channel))?;
        if self.n_runs == 0 {
            return Err(Error::Config("n_runs must be positive".into()));
        }
        if self.n_train == Some(0) {
            return Err(Error::Config("n_train must be positive".into()));
        }
        let [lo, hi] = self.segment_s;
        if !(lo > 0.0 && lo < hi) {
            return Err(Error::Config(format!("segment range [{lo}, {hi}] s is invalid")));
        }
        if !(self.sigmoid_slope > 0.0 && self.sigmoid_slope.is_finite()) {
            return Err(Error::Config("sigmoid slope must be positive".into()));
        }
        if self.gmm_components() == 0 || self.gmm_max_iter == 0 {
            return Err(Error::Config("GMM needs at least one component and one iteration".into()));
        }
        let e = &self.extractor;
        if e.weights.is_none() && (e.steps == 0 || e.batch == 0 || e.segment_frames == 0 || !(e.lr > 0.0)) {
            return Err(Error::Config("extractor training needs positive steps, batch, crop length and rate".into()));
        }
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the config's JSON form.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(json))[..16].to_string()
    }
}

/// Where inputs live and where outputs go.
#[derive(Debug, Clone, PartialEq)]
pub struct Workspace {
    pub manifest: PathBuf,
    /// Speakers outside the cohort for training the embedding network.
    pub background: Option<PathBuf>,
    /// Corruption pools (`<kind>/*.wav`), needed for back-end augmentation.
    pub pools: Option<PathBuf>,
    /// Holds `store/` and `runs/`.
    pub work: PathBuf,
}

impl Workspace {
    /// Conventional layout of a data root: `manifest.jsonl`,
    /// `background.jsonl` and `pools/`, with outputs written alongside.
    pub fn from_root(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        let opt = |p: PathBuf| p.exists().then_some(p);
        Self { manifest: root.join("manifest.jsonl"), background: opt(root.join("background.jsonl")), pools: opt(root.join("pools")), work: root }
    }

    pub fn run_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.work.join("runs").join(cfg.fingerprint())
    }
}

pub(crate) fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
