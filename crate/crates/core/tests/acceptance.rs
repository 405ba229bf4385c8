//! End-to-end acceptance checks. Runs without the libtest harness so every
//! criterion prints a PASS/FAIL line; exits non-zero if any fails.

use std::f64::consts::PI;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use parkvoice::augment::{augment_corpus, measured_snr_db, mix_additive, Corruption, CorruptionKind, CorruptionSpec, Utterance};
use parkvoice::backend::{plda_fit, plda_score};
use parkvoice::demo::{generate, DemoConfig};
use parkvoice::eval::compute_eer;
use parkvoice::experiment::{evaluate, train, Classifier, ExperimentConfig, Workspace};
use parkvoice::frontend::{AudioBuffer, Dct2, FeatureMatrix, FrontendConfig, MfccExtractor};
use parkvoice::gmm::{em_fit, frame_loglik, kmeans_init, GmmModel};
use parkvoice::linalg::Matrix;
use parkvoice::seed;
use parkvoice::tdnn::{batch_loss, init_weights, loss_and_grad, tdnn_forward, TdnnConfig, TdnnWeights};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;

fn gauss(rng: &mut seed::Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn em_monotonicity() -> Outcome {
    let start = Instant::now();
    let mut rng = seed::rng(101);
    let centers: Vec<Vec<f64>> = (0..5).map(|_| (0..8).map(|_| 4.0 * gauss(&mut rng)).collect()).collect();
    let rows: Vec<Vec<f64>> = (0..1000)
        .map(|i| centers[i % 5].iter().map(|c| c + (1.0 + (i % 3) as f64) * gauss(&mut rng)).collect())
        .collect();
    let fm = FeatureMatrix::from_rows(&rows, 10.0).map_err(|e| e.to_string())?;
    let init = kmeans_init(&fm, 5, 7).map_err(|e| e.to_string())?;
    let (_, trace) = em_fit(&init, &fm, 100, 0.0).map_err(|e| e.to_string())?;
    let worst = trace.loglik.windows(2).map(|w| (w[0] - w[1]) / w[0].abs()).fold(f64::NEG_INFINITY, f64::max);
    let elapsed = start.elapsed();
    check(
        worst <= 1e-8 && elapsed < Duration::from_secs(5),
        format!("{} iterations, worst relative decrease {worst:.2e}, {:.2}s", trace.iterations, elapsed.as_secs_f64()),
    )
}

/// Mixture log-density by direct summation with compensated accumulation.
fn brute_loglik(w: &[f64], means: &[Vec<f64>], vars: &[Vec<f64>], x: &[f64]) -> f64 {
    let logs: Vec<f64> = (0..w.len())
        .map(|k| {
            let mut s = w[k].ln();
            for j in 0..x.len() {
                let d = x[j] - means[k][j];
                s -= 0.5 * ((2.0 * PI * vars[k][j]).ln() + d * d / vars[k][j]);
            }
            s
        })
        .collect();
    let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for l in &logs {
        let v = (l - top).exp();
        let t = sum + v;
        comp += if sum.abs() >= v.abs() { (sum - t) + v } else { (v - t) + sum };
        sum = t;
    }
    top + (sum + comp).ln()
}

fn likelihood_oracle() -> Outcome {
    let mut rng = seed::rng(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (m, d) = (rng.random_range(1..9), 8);
        let raw: Vec<f64> = (0..m).map(|_| rng.random_range(0.05..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let w: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let means: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| 3.0 * gauss(&mut rng)).collect()).collect();
        let vars: Vec<Vec<f64>> = (0..m).map(|_| (0..d).map(|_| rng.random_range(0.1..5.0)).collect()).collect();
        let model = GmmModel::from_parts(
            w.clone(),
            Matrix::from_fn(m, d, |i, j| means[i][j]),
            Matrix::from_fn(m, d, |i, j| vars[i][j]),
            vec![1e-3; d],
            None,
        )
        .map_err(|e| e.to_string())?;
        let spread = rng.random_range(1.0..10.0);
        let x: Vec<f64> = (0..d).map(|_| spread * gauss(&mut rng)).collect();
        let got = frame_loglik(&model, &x).map_err(|e| e.to_string())?;
        worst = worst.max((got - brute_loglik(&w, &means, &vars, &x)).abs());
    }
    check(worst <= 1e-10, format!("worst absolute error {worst:.2e} over 100 pairs"))
}

fn mfcc_oracle() -> Outcome {
    let mut rng = seed::rng(303);
    let mut worst = 0.0f64;
    for n in [13usize, 23, 24, 30, 40] {
        let dct = Dct2::<f64>::new(n);
        for _ in 0..20 {
            let x: Vec<f64> = (0..n).map(|_| 10.0 * gauss(&mut rng)).collect();
            let got = dct.transform(&x);
            for (k, g) in got.iter().enumerate() {
                let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
                let want: f64 = scale * (0..n).map(|i| x[i] * (PI * k as f64 * (2 * i + 1) as f64 / (2 * n) as f64).cos()).sum::<f64>();
                worst = worst.max((g - want).abs());
            }
        }
    }
    let cfg = FrontendConfig::gmm_telephone();
    let mut mismatches = 0;
    for (rate, cfg) in [(8000u32, cfg), (16000, FrontendConfig::gmm_highquality())] {
        let ex = MfccExtractor::<f64>::new(&cfg, rate).map_err(|e| e.to_string())?;
        let (len, hop) = (rate as usize / 50, rate as usize / 100);
        for _ in 0..20 {
            let n = rng.random_range(len..4 * rate as usize);
            let buf = AudioBuffer::new((0..n).map(|i| 0.1 * (i as f64 * 0.3).sin() + 0.01 * gauss(&mut rng)).collect(), rate).map_err(|e| e.to_string())?;
            let got = ex.compute(&buf).map_err(|e| e.to_string())?.n_frames();
            if got != (n - len) / hop + 1 {
                mismatches += 1;
            }
        }
    }
    check(worst <= 1e-9 && mismatches == 0, format!("DCT worst error {worst:.2e}, {mismatches} frame-count mismatches"))
}

fn segment(len: usize, k: usize, seed_: u64) -> FeatureMatrix<f64> {
    let mut rng = seed::rng(seed_);
    let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..k).map(|_| gauss(&mut rng)).collect()).collect();
    FeatureMatrix::from_rows(&rows, 10.0).unwrap()
}

fn gradcheck(w: &mut TdnnWeights<f64>, batch: &[(FeatureMatrix<f64>, usize)], picks: &[(usize, usize)]) -> Result<f64, String> {
    const H: f64 = 1e-5;
    let (_, grad) = loss_and_grad(w, batch).map_err(|e| e.to_string())?;
    let analytic: Vec<Vec<f64>> = grad.tensors().iter().map(|(_, t)| t.to_vec()).collect();
    let mut worst = 0.0f64;
    for &(ti, i) in picks {
        let orig = w.tensors()[ti].1[i];
        w.tensors_mut()[ti].1[i] = orig + H;
        let up = batch_loss(w, batch).map_err(|e| e.to_string())?;
        w.tensors_mut()[ti].1[i] = orig - H;
        let down = batch_loss(w, batch).map_err(|e| e.to_string())?;
        w.tensors_mut()[ti].1[i] = orig;
        let fd = (up - down) / (2.0 * H);
        worst = worst.max((fd - analytic[ti][i]).abs() / fd.abs().max(analytic[ti][i].abs()).max(1e-7));
    }
    Ok(worst)
}

fn tdnn_gradient() -> Outcome {
    let start = Instant::now();
    let batch = vec![(segment(30, 24, 1), 1)];
    let narrow = TdnnConfig::xvector(24, 2).with_widths([12, 12, 12, 12, 30], 12, 12);
    let mut w = init_weights::<f64>(&narrow, 3).map_err(|e| e.to_string())?;
    let all: Vec<(usize, usize)> = w.tensors().iter().enumerate().flat_map(|(ti, (_, t))| (0..t.len()).map(move |i| (ti, i))).collect();
    let n_all = all.len();
    let worst_narrow = gradcheck(&mut w, &batch, &all)?;
    let mut full = init_weights::<f64>(&TdnnConfig::xvector(24, 2), 5).map_err(|e| e.to_string())?;
    let mut rng = seed::rng(17);
    let picks: Vec<(usize, usize)> = full
        .tensors()
        .iter()
        .enumerate()
        .flat_map(|(ti, (_, t))| {
            let n = t.len();
            (0..4).map(|_| (ti, rng.random_range(0..n))).collect::<Vec<_>>()
        })
        .collect();
    let worst_full = gradcheck(&mut full, &batch, &picks)?;
    let elapsed = start.elapsed();
    check(
        worst_narrow.max(worst_full) <= 1e-4 && elapsed < Duration::from_secs(60),
        format!(
            "all {n_all} parameters of a narrow net: {worst_narrow:.2e}; {} sampled of the full net: {worst_full:.2e}; {:.1}s",
            picks.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn pooling_invariance() -> Outcome {
    let w = init_weights::<f64>(&TdnnConfig::xvector(24, 2), 9).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for (t, s) in [(20usize, 1u64), (57, 2), (150, 3)] {
        let seg = segment(t, 24, s);
        let twice = seg.concat(&seg).map_err(|e| e.to_string())?;
        let a = tdnn_forward(&w, &seg).map_err(|e| e.to_string())?.xvector;
        let b = tdnn_forward(&w, &twice).map_err(|e| e.to_string())?.xvector;
        worst = worst.max(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max));
    }
    check(worst <= 1e-10, format!("worst x-vector difference {worst:.2e}"))
}

struct Generator {
    mu: Vec<f64>,
    f: Vec<Vec<f64>>,
    g: Vec<Vec<f64>>,
    sd: Vec<f64>,
}

impl Generator {
    fn identity(&self, rng: &mut seed::Rng) -> Vec<f64> {
        let h: Vec<f64> = self.f[0].iter().map(|_| gauss(rng)).collect();
        self.mu.iter().enumerate().map(|(i, m)| m + (0..h.len()).map(|k| self.f[i][k] * h[k]).sum::<f64>()).collect()
    }

    fn sample(&self, centre: &[f64], rng: &mut seed::Rng) -> Vec<f64> {
        let w: Vec<f64> = self.g[0].iter().map(|_| gauss(rng)).collect();
        centre.iter().enumerate().map(|(i, c)| c + (0..w.len()).map(|k| self.g[i][k] * w[k]).sum::<f64>() + self.sd[i] * gauss(rng)).collect()
    }
}

fn plda_checks() -> Outcome {
    let (d, r_b, r_w) = (10, 3, 3);
    let mut rng = seed::rng(606);
    let gen = Generator {
        mu: (0..d).map(|_| gauss(&mut rng)).collect(),
        f: (0..d).map(|_| (0..r_b).map(|_| 2.0 * gauss(&mut rng)).collect()).collect(),
        g: (0..d).map(|_| (0..r_w).map(|_| 0.7 * gauss(&mut rng)).collect()).collect(),
        sd: (0..d).map(|_| rng.random_range(0.3..0.8)).collect(),
    };
    let (mut xs, mut labels) = (Vec::new(), Vec::new());
    for c in 0..500 {
        let centre = gen.identity(&mut rng);
        for _ in 0..10 {
            xs.push(gen.sample(&centre, &mut rng));
            labels.push(c);
        }
    }
    let (model, trace) = plda_fit(&xs, &labels, r_b, r_w, 15).map_err(|e| e.to_string())?;
    let worst_drop = trace.loglik.windows(2).map(|w| (w[0] - w[1]) / w[0].abs()).fold(f64::NEG_INFINITY, f64::max);

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..300)
        .map(|_| {
            let c = gen.identity(&mut rng);
            (gen.sample(&c, &mut rng), gen.sample(&c, &mut rng))
        })
        .collect();
    let (mut same, mut diff, mut asymmetric) = (Vec::new(), Vec::new(), 0);
    for (i, (a, b)) in pairs.iter().enumerate() {
        let other = &pairs[(i + 1) % pairs.len()].1;
        for (x, y, bucket) in [(a, b, &mut same), (a, other, &mut diff)] {
            let s = plda_score(&model, x, y).map_err(|e| e.to_string())?;
            if s.to_bits() != plda_score(&model, y, x).map_err(|e| e.to_string())?.to_bits() {
                asymmetric += 1;
            }
            bucket.push(s);
        }
    }
    let wins: f64 = same.iter().map(|s| diff.iter().map(|t| if s > t { 1.0 } else if s == t { 0.5 } else { 0.0 }).sum::<f64>()).sum();
    let auc = wins / (same.len() * diff.len()) as f64;
    check(
        worst_drop <= 1e-8 && auc >= 0.9 && asymmetric == 0,
        format!("worst relative log-likelihood drop {worst_drop:.2e}, AUC {auc:.4}, {asymmetric} asymmetric trials"),
    )
}

/// Exhaustive sweep: every distinct score as a threshold, with linear
/// interpolation between neighbouring operating points where FPR - FNR
/// changes sign.
fn sweep_eer(scores: &[(f64, bool)]) -> f64 {
    let mut t: Vec<f64> = scores.iter().map(|s| s.0).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    let pts: Vec<(f64, f64)> = t
        .iter()
        .map(|th| {
            let fp = scores.iter().filter(|(s, y)| !*y && s >= th).count() as f64 / neg;
            let fnr = scores.iter().filter(|(s, y)| *y && s < th).count() as f64 / pos;
            (fp, fnr)
        })
        .collect();
    for w in pts.windows(2) {
        let (g0, g1) = (w[0].0 - w[0].1, w[1].0 - w[1].1);
        if g0 == 0.0 {
            return w[0].0;
        }
        if g0 > 0.0 && g1 <= 0.0 {
            let a = g0 / (g0 - g1);
            return w[0].0 + a * (w[1].0 - w[0].0);
        }
    }
    pts.last().map(|p| p.0).unwrap_or(0.5)
}

fn eer_oracle() -> Outcome {
    let mut rng = seed::rng(707);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mut scores: Vec<(f64, bool)> = (0..200)
            .map(|_| {
                let y = rng.random_bool(0.5);
                (gauss(&mut rng) + if y { 1.0 } else { 0.0 }, y)
            })
            .collect();
        scores[0].1 = true;
        scores[1].1 = false;
        let (eer, _) = compute_eer(&scores).map_err(|e| e.to_string())?;
        worst = worst.max((eer - sweep_eer(&scores)).abs());
    }
    let chance: Vec<(f64, bool)> = (0..10000).map(|_| (rng.random::<f64>(), rng.random_bool(0.5))).collect();
    let (eer, _) = compute_eer(&chance).map_err(|e| e.to_string())?;
    check(worst <= 1e-6 && (eer - 0.5).abs() <= 0.02, format!("worst deviation from sweep {worst:.2e}, chance EER {eer:.4}"))
}

fn augmentation() -> Outcome {
    let rate = 8000;
    let mut rng = seed::rng(808);
    let noise = |len: usize, decay: f64, rng: &mut seed::Rng| {
        AudioBuffer::new((0..len).map(|n| 0.3 * gauss(rng) * (-(n as f64) / decay).exp()).collect(), rate).unwrap()
    };
    let mut corruptions = Vec::new();
    for kind in CorruptionKind::ALL {
        let decay = if kind == CorruptionKind::Reverb { 800.0 } else { f64::INFINITY };
        let audio: Vec<_> = (0..8).map(|_| noise(6000, decay, &mut rng)).collect();
        let spec = CorruptionSpec::new(kind, (0..8).map(|i| format!("{kind}{i}.wav").into()).collect());
        corruptions.push(Corruption::new(spec, audio).map_err(|e| e.to_string())?);
    }
    let utts: Vec<Utterance> = (0..25)
        .map(|i| Utterance {
            id: format!("u{i}"),
            audio: AudioBuffer::new((0..8000).map(|n| 0.4 * (2.0 * PI * (120.0 + i as f64) * n as f64 / 8000.0).sin()).collect(), rate).unwrap(),
        })
        .collect();
    let out = augment_corpus(&utts, &corruptions, 3).map_err(|e| e.to_string())?;
    let originals = out.iter().filter(|a| a.provenance.kind.is_none()).count();

    let mut worst = 0.0f64;
    let speech = AudioBuffer::new((0..16000).map(|n| 0.2 * (n as f64 * 0.05).sin() * (1.0 + 0.5 * (n as f64 * 0.001).sin())).collect(), rate).unwrap();
    for step in 0..=50 {
        let snr = -10.0 + step as f64;
        let interf = noise(5000, f64::INFINITY, &mut rng);
        let mixed = mix_additive(&speech, &interf, snr).map_err(|e| e.to_string())?;
        let resid: Vec<f64> = mixed.samples().iter().zip(speech.samples()).map(|(a, b)| a - b).collect();
        worst = worst.max((measured_snr_db(&speech, &resid) - snr).abs());
    }
    check(
        out.len() == 3 * utts.len() && originals == utts.len() && worst <= 0.1,
        format!("{} -> {} utterances, worst SNR error {worst:.4} dB over [-10, 40]", utts.len(), out.len()),
    )
}

fn run_demo(root: &Path, classifier: Classifier) -> Result<parkvoice::experiment::Summary, String> {
    let ws = Workspace::from_root(root);
    let cfg = ExperimentConfig { classifier, gmm_max_iter: 20, ..ExperimentConfig::default() };
    train(&ws, &cfg).map_err(|e| e.to_string())?;
    evaluate(&ws, &cfg, true).map_err(|e| e.to_string())
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    generate(&DemoConfig::default(), dir.path()).map_err(|e| e.to_string())?;
    let mut lines = Vec::new();
    let mut ok = true;
    for classifier in [Classifier::Gmm, Classifier::XvecPlda] {
        let s = run_demo(dir.path(), classifier)?;
        for r in &s.reports {
            let simple = r.eer_simple.ok_or("simple-model EER missing")?;
            ok &= r.n_runs == 40 && r.eer_aggregated <= 0.05 && r.eer_aggregated <= simple + 0.02;
            lines.push(format!("{classifier}/{}: aggregated {:.3}, simple {:.3}", r.sex, r.eer_aggregated, simple));
        }
    }
    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(600);
    check(ok, format!("{}; {:.0}s", lines.join(", "), elapsed.as_secs_f64()))
}

fn determinism() -> Outcome {
    let demo = DemoConfig { n_pd: 12, n_hc: 12, n_background: 6, duration_s: 2.0, ..DemoConfig::default() };
    let mut identical = 0;
    let mut checked = Vec::new();
    for classifier in [Classifier::Gmm, Classifier::XvecCos] {
        let cfg = ExperimentConfig { classifier, n_runs: 20, gmm_max_iter: 10, extractor: parkvoice::experiment::ExtractorConfig { steps: 5, ..Default::default() }, ..ExperimentConfig::default() };
        let mut bytes = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
            generate(&demo, dir.path()).map_err(|e| e.to_string())?;
            let ws = Workspace::from_root(dir.path());
            train(&ws, &cfg).map_err(|e| e.to_string())?;
            evaluate(&ws, &cfg, true).map_err(|e| e.to_string())?;
            bytes.push(std::fs::read(ws.run_dir(&cfg).join("summary.json")).map_err(|e| e.to_string())?);
        }
        if bytes[0] == bytes[1] {
            identical += 1;
        }
        checked.push(classifier.to_string());
    }
    check(identical == checked.len(), format!("{identical}/{} configurations byte-identical ({})", checked.len(), checked.join(", ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("gmm-em-monotonicity", em_monotonicity),
        ("likelihood-oracle", likelihood_oracle),
        ("mfcc-oracle", mfcc_oracle),
        ("tdnn-gradient-check", tdnn_gradient),
        ("pooling-invariance", pooling_invariance),
        ("plda", plda_checks),
        ("eer-oracle", eer_oracle),
        ("augmentation", augmentation),
        ("end-to-end-synthetic", end_to_end),
        ("determinism", determinism),
    ];
    let only = std::env::args().skip(1).find(|a| !a.starts_with('-'));
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.as_deref().is_some_and(|o| !name.contains(o)) {
            continue;
        }
        match f() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
