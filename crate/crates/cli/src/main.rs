//! Command-line driver for the screening pipeline.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use parkvoice::demo::{generate, DemoConfig};
use parkvoice::eval::det_curve;
use parkvoice::experiment::{augment_manifest, evaluate, extract_store, store_dir, train, Classifier, ExperimentConfig, Preset, SexFilter, Workspace};
use parkvoice::manifest::{Channel, DatasetManifest, Group, Task};
use parkvoice::{Error, ErrorClass};

#[derive(Parser)]
#[command(name = "parkvoice", version, about = "Parkinson's screening from speech: GMM and x-vector classifiers")]
struct Cli {
    /// Data root holding manifest.jsonl, background.jsonl and pools/.
    #[arg(long, env = "PARKVOICE_DATA", default_value = ".", global = true)]
    data_root: PathBuf,
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the front-end over a manifest and write a feature store.
    Extract(ExtractArgs),
    /// Write corrupted copies of every recording plus a provenance manifest.
    Augment(AugmentArgs),
    /// Fit per-sex models for every split.
    Train(ExperimentArgs),
    /// Score the trained splits and write scores, DET curve and summary.
    Evaluate(EvaluateArgs),
    /// Recompute a DET curve from a scores.csv.
    Det(DetArgs),
    /// Generate the synthetic two-class demo cohort.
    DemoData(DemoArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Cos,
    LdaCos,
    Plda,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    preset: Preset,
    /// Store directory; defaults to <data-root>/store/<preset>-<manifest hash>.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AugmentArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Corruption pools with one sub-directory per kind.
    #[arg(long)]
    pools: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value = "on")]
    enable: Switch,
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    background: Option<PathBuf>,
    #[arg(long)]
    pools: Option<PathBuf>,
    /// Where store/ and runs/ go; defaults to the data root.
    #[arg(long)]
    work: Option<PathBuf>,
    #[arg(long)]
    preset: Option<Preset>,
    #[arg(long)]
    channel: Option<Channel>,
    #[arg(long)]
    sex: Option<SexFilter>,
    /// Restrict to a task (repeatable).
    #[arg(long = "task")]
    tasks: Vec<Task>,
    #[arg(long)]
    classifier: Option<Classifier>,
    /// x-vector back-end; implies an x-vector classifier.
    #[arg(long, value_enum)]
    backend: Option<BackendArg>,
    #[arg(long, value_enum)]
    augment_backend_training: Option<Switch>,
    /// Segment duration range in seconds, as MIN,MAX.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    segment_range: Option<Vec<f64>>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    gmm_components: Option<usize>,
    #[arg(long)]
    gmm_max_iter: Option<usize>,
    #[arg(long)]
    extractor_steps: Option<usize>,
    /// Pretrained embedding network (tensor container).
    #[arg(long)]
    extractor_weights: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    experiment: ExperimentArgs,
    /// Also report the EER of the averaged per-run DET curve.
    #[arg(long)]
    compare_simple: bool,
}

#[derive(Args)]
struct DetArgs {
    #[arg(long)]
    scores: PathBuf,
    /// Defaults to det_curve.csv next to the scores.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DemoArgs {
    /// Defaults to the data root.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 60)]
    pd: usize,
    #[arg(long, default_value_t = 60)]
    hc: usize,
    #[arg(long, default_value_t = 24)]
    background: usize,
    #[arg(long, default_value = "telephone")]
    channel: Channel,
    /// Seconds per recording.
    #[arg(long, default_value_t = 3.0)]
    duration: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

fn config_error(msg: String) -> anyhow::Error {
    Error::Config(msg).into()
}

impl ExperimentArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?
            }
            None => ExperimentConfig::default(),
        };
        if let Some(v) = self.preset {
            cfg.preset = Some(v);
            cfg.channel = v.channel();
        }
        if let Some(v) = self.channel {
            cfg.channel = v;
        }
        if let Some(v) = self.sex {
            cfg.sex = v;
        }
        if !self.tasks.is_empty() {
            cfg.tasks = self.tasks.clone();
        }
        if let Some(v) = self.classifier {
            cfg.classifier = v;
        }
        if let Some(b) = self.backend {
            if self.classifier == Some(Classifier::Gmm) {
                return Err(config_error("--backend applies to x-vector classifiers only".into()));
            }
            cfg.classifier = match b {
                BackendArg::Cos => Classifier::XvecCos,
                BackendArg::LdaCos => Classifier::XvecLdaCos,
                BackendArg::Plda => Classifier::XvecPlda,
            };
        }
        if let Some(v) = self.augment_backend_training {
            cfg.augment_backend = matches!(v, Switch::On);
        }
        if let Some(r) = &self.segment_range {
            cfg.segment_s = [r[0], r[1]];
        }
        if let Some(v) = self.runs {
            cfg.n_runs = v;
        }
        if let Some(v) = self.n_train {
            cfg.n_train = Some(v);
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.gmm_components {
            cfg.gmm_components = Some(v);
        }
        if let Some(v) = self.gmm_max_iter {
            cfg.gmm_max_iter = v;
        }
        if let Some(v) = self.extractor_steps {
            cfg.extractor.steps = v;
        }
        if let Some(v) = &self.extractor_weights {
            cfg.extractor.weights = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn workspace(&self, root: &Path) -> Workspace {
        let mut ws = Workspace::from_root(root);
        if let Some(p) = &self.manifest {
            ws.manifest = p.clone();
        }
        if let Some(p) = &self.background {
            ws.background = Some(p.clone());
        }
        if let Some(p) = &self.pools {
            ws.pools = Some(p.clone());
        }
        if let Some(p) = &self.work {
            ws.work = p.clone();
        }
        ws
    }
}

fn cmd_extract(root: &Path, a: &ExtractArgs) -> Result<ExitCode> {
    let path = a.manifest.clone().unwrap_or_else(|| root.join("manifest.jsonl"));
    let m = DatasetManifest::load(&path)?;
    let dir = a.out.clone().unwrap_or_else(|| store_dir(root, &m, a.preset));
    let store = extract_store(&m, a.preset, &dir)?;
    println!("{} utterances extracted to {}", store.index.entries.len(), dir.display());
    if store.index.failures.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        for f in &store.index.failures {
            eprintln!("failed: {}: {}", f.utterance_id, f.error);
        }
        eprintln!("{} recordings failed", store.index.failures.len());
        Ok(ExitCode::from(1))
    }
}

fn cmd_augment(root: &Path, a: &AugmentArgs) -> Result<()> {
    let path = a.manifest.clone().unwrap_or_else(|| root.join("manifest.jsonl"));
    let out = a.out.clone().unwrap_or_else(|| root.join("augmented"));
    match a.enable {
        Switch::Off => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let m = DatasetManifest::load(&path)?;
            let abs: Vec<_> = m
                .records
                .iter()
                .map(|r| {
                    let mut r = r.clone();
                    r.audio = std::path::absolute(m.resolve(&r.audio))?;
                    r.noise = r.noise.as_ref().map(|p| std::path::absolute(m.resolve(p))).transpose()?;
                    Ok(r)
                })
                .collect::<std::io::Result<_>>()?;
            DatasetManifest::new(abs, &out)?.save(out.join("manifest.jsonl"))?;
            println!("augmentation off: {} records passed through", m.len());
        }
        Switch::On => {
            let pools = a.pools.clone().unwrap_or_else(|| root.join("pools"));
            let m = DatasetManifest::load(&path)?;
            let rep = augment_manifest(&m, &pools, &out, a.seed)?;
            println!("{} records written to {}", rep.manifest.len(), rep.manifest_path.display());
        }
    }
    Ok(())
}

fn cmd_det(a: &DetArgs) -> Result<()> {
    let text = fs::read_to_string(&a.scores).with_context(|| format!("reading {}", a.scores.display()))?;
    let mut comments = String::new();
    let mut header: Option<Vec<&str>> = None;
    let mut scores = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        if line.starts_with('#') {
            comments.push_str(line);
            comments.push('\n');
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        let Some(h) = &header else {
            header = Some(cols);
            continue;
        };
        let col = |name: &str| h.iter().position(|c| *c == name).ok_or_else(|| Error::Format(format!("scores file lacks a '{name}' column")));
        let label: Group = cols.get(col("label")?).copied().unwrap_or_default().parse()?;
        let score: f64 = cols.get(col("score")?).copied().unwrap_or_default().parse().map_err(|e| Error::Format(format!("bad score in '{line}': {e}")))?;
        scores.push((score, label.is_pd()));
    }
    if scores.is_empty() {
        bail!(Error::Empty("scores file"));
    }
    let curve = det_curve(&scores)?;
    let out = a.out.clone().unwrap_or_else(|| a.scores.with_file_name("det_curve.csv"));
    fs::write(&out, comments + &curve.to_csv()).with_context(|| format!("writing {}", out.display()))?;
    println!("EER {:.4} ({} points) -> {}", curve.eer, curve.points.len(), out.display());
    Ok(())
}

fn cmd_demo(root: &Path, a: &DemoArgs) -> Result<()> {
    let cfg = DemoConfig { n_pd: a.pd, n_hc: a.hc, n_background: a.background, channel: a.channel, duration_s: a.duration, seed: a.seed, ..DemoConfig::default() };
    let out = a.out.clone().unwrap_or_else(|| root.to_path_buf());
    let d = generate(&cfg, &out)?;
    println!("cohort manifest {}", d.manifest.display());
    println!("background manifest {}", d.background.display());
    println!("corruption pools {}", d.pools.display());
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let root = cli.data_root.as_path();
    match &cli.command {
        Command::Extract(a) => return cmd_extract(root, a),
        Command::Augment(a) => cmd_augment(root, a)?,
        Command::Train(a) => {
            let cfg = a.config()?;
            let rep = train(&a.workspace(root), &cfg)?;
            println!("trained {} under {}", cfg.classifier, rep.run_dir.display());
        }
        Command::Evaluate(a) => {
            let cfg = a.experiment.config()?;
            let s = evaluate(&a.experiment.workspace(root), &cfg, a.compare_simple)?;
            println!("{}", serde_json::to_string_pretty(&s)?);
        }
        Command::Det(a) => cmd_det(a)?,
        Command::DemoData(a) => cmd_demo(root, a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()).map(Error::class) {
        Some(ErrorClass::Config) => 2,
        Some(ErrorClass::Numerical) => 3,
        _ => 1,
    }
}

/// The error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
