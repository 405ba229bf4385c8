//! Repeated random subsampling with score aggregation, EER and DET curves.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Group;
use crate::math::mean;
use crate::seed;

pub const DEFAULT_RUNS: usize = 40;
/// Points on the common false-positive grid used to average DET curves.
pub const DET_GRID_POINTS: usize = 1000;
/// Smallest false-positive rate on that grid.
pub const DET_GRID_MIN: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub run_index: usize,
    pub train_pd: Vec<String>,
    pub train_hc: Vec<String>,
    pub test_pd: Vec<String>,
    pub test_hc: Vec<String>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn train(&self) -> impl Iterator<Item = (&str, Group)> {
        self.train_pd.iter().map(|s| (s.as_str(), Group::Pd)).chain(self.train_hc.iter().map(|s| (s.as_str(), Group::Hc)))
    }

    pub fn test(&self) -> impl Iterator<Item = (&str, Group)> {
        self.test_pd.iter().map(|s| (s.as_str(), Group::Pd)).chain(self.test_hc.iter().map(|s| (s.as_str(), Group::Hc)))
    }

    /// Checks class balance and that the four sets are pairwise disjoint.
    pub fn validate(&self) -> Result<()> {
        if self.train_pd.len() != self.train_hc.len() {
            return Err(Error::Infeasible(format!("run {}: unbalanced training sets", self.run_index)));
        }
        let mut seen = BTreeSet::new();
        for s in self.train_pd.iter().chain(&self.train_hc).chain(&self.test_pd).chain(&self.test_hc) {
            if !seen.insert(s) {
                return Err(Error::Infeasible(format!("run {}: subject {s} appears twice", self.run_index)));
            }
        }
        Ok(())
    }
}

/// Draws `n_runs` class-balanced splits with `n_train` subjects per class in
/// training and every remaining subject in test.
pub fn make_splits(cohort: &BTreeMap<String, Group>, n_train: usize, n_runs: usize, seed: u64) -> Result<Vec<SplitPlan>> {
    let pd: Vec<&String> = cohort.iter().filter(|(_, g)| g.is_pd()).map(|(s, _)| s).collect();
    let hc: Vec<&String> = cohort.iter().filter(|(_, g)| !g.is_pd()).map(|(s, _)| s).collect();
    if n_runs == 0 {
        return Err(Error::Config("at least one run is required".into()));
    }
    if n_train == 0 || n_train >= pd.len() || n_train >= hc.len() {
        return Err(Error::Infeasible(format!("{n_train} training subjects per class with {} PD and {} HC leaves an empty class", pd.len(), hc.len())));
    }
    let draw = |ids: &[&String], rng: &mut seed::Rng| -> (Vec<String>, Vec<String>) {
        let mut v: Vec<String> = ids.iter().map(|s| (*s).clone()).collect();
        v.shuffle(rng);
        let test = v.split_off(n_train);
        let sorted = |mut x: Vec<String>| {
            x.sort();
            x
        };
        (sorted(v), sorted(test))
    };
    (0..n_runs)
        .map(|run_index| {
            let s = seed::derive(seed, run_index as u64);
            let mut rng = seed::rng(s);
            let (train_pd, test_pd) = draw(&pd, &mut rng);
            let (train_hc, test_hc) = draw(&hc, &mut rng);
            let plan = SplitPlan { run_index, train_pd, train_hc, test_pd, test_hc, seed: s };
            plan.validate()?;
            Ok(plan)
        })
        .collect()
}

/// How many plans test each subject.
pub fn test_counts(plans: &[SplitPlan]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for p in plans {
        for (s, _) in p.train().chain(p.test()) {
            counts.entry(s.to_string()).or_insert(0);
        }
        for (s, _) in p.test() {
            *counts.get_mut(s).expect("inserted above") += 1;
        }
    }
    counts
}

/// Fails if any subject of the plans is never in a test set.
pub fn check_coverage(plans: &[SplitPlan]) -> Result<()> {
    match test_counts(plans).into_iter().find(|(_, n)| *n == 0) {
        Some((s, _)) => Err(Error::Infeasible(format!("subject {s} is never tested in {} runs", plans.len()))),
        None => Ok(()),
    }
}

/// One run's test scores, with ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunScores {
    pub run_index: usize,
    pub scores: Vec<(String, Group, f64)>,
}

impl RunScores {
    pub fn labelled(&self) -> Vec<(f64, bool)> {
        self.scores.iter().map(|(_, g, s)| (*s, g.is_pd())).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectAggregate {
    pub group: Group,
    /// `(run_index, score)` for every run that tested the subject.
    pub runs: Vec<(usize, f64)>,
    pub final_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedScores {
    pub subjects: BTreeMap<String, SubjectAggregate>,
    pub runs: Vec<RunScores>,
}

impl AggregatedScores {
    pub fn labelled(&self) -> Vec<(f64, bool)> {
        self.subjects.values().map(|a| (a.final_score, a.group.is_pd())).collect()
    }

    pub fn eer(&self) -> Result<f64> {
        Ok(compute_eer(&self.labelled())?.0)
    }

    /// `subject,sex,label,score,n_tests`; `sex` comes from the lookup.
    pub fn to_csv(&self, sex: impl Fn(&str) -> String) -> String {
        let mut out = String::from("subject,sex,label,score,n_tests\n");
        for (s, a) in &self.subjects {
            let _ = writeln!(out, "{s},{},{},{},{}", sex(s), a.group, a.final_score, a.runs.len());
        }
        out
    }
}

/// Calls `pipeline` on every plan (in parallel) and averages each subject's
/// test scores. The pipeline returns one score per test subject.
pub fn run_experiment<F>(plans: &[SplitPlan], pipeline: F) -> Result<AggregatedScores>
where
    F: Fn(&SplitPlan) -> Result<Vec<(String, f64)>> + Sync,
{
    let per_run: Vec<Vec<(String, f64)>> = plans.par_iter().map(&pipeline).collect::<Result<_>>()?;
    aggregate(plans, per_run)
}

/// Combines per-run pipeline outputs, in plan order.
pub fn aggregate(plans: &[SplitPlan], per_run: Vec<Vec<(String, f64)>>) -> Result<AggregatedScores> {
    if plans.len() != per_run.len() {
        return Err(Error::DimensionMismatch { expected: plans.len(), got: per_run.len() });
    }
    let mut subjects: BTreeMap<String, SubjectAggregate> = BTreeMap::new();
    let mut runs = Vec::with_capacity(plans.len());
    for (plan, scores) in plans.iter().zip(per_run) {
        plan.validate()?;
        let expected: BTreeMap<&str, Group> = plan.test().collect();
        let mut got = BTreeSet::new();
        let mut run = RunScores { run_index: plan.run_index, scores: Vec::with_capacity(scores.len()) };
        for (s, score) in scores {
            let group = *expected.get(s.as_str()).ok_or_else(|| Error::Infeasible(format!("run {}: scored {s}, which is not in its test set", plan.run_index)))?;
            if !got.insert(s.clone()) {
                return Err(Error::Infeasible(format!("run {}: {s} scored twice", plan.run_index)));
            }
            if !score.is_finite() {
                return Err(Error::Numerical(format!("run {}: non-finite score for {s}", plan.run_index)));
            }
            subjects.entry(s.clone()).or_insert_with(|| SubjectAggregate { group, runs: Vec::new(), final_score: f64::NAN }).runs.push((plan.run_index, score));
            run.scores.push((s, group, score));
        }
        if got.len() != expected.len() {
            return Err(Error::Infeasible(format!("run {}: {} of {} test subjects scored", plan.run_index, got.len(), expected.len())));
        }
        runs.push(run);
    }
    for a in subjects.values_mut() {
        a.final_score = mean(&a.runs.iter().map(|(_, v)| *v).collect::<Vec<_>>());
    }
    Ok(AggregatedScores { subjects, runs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetCurve {
    /// `(fpr, fnr)` in order of rising threshold.
    pub points: Vec<(f64, f64)>,
    /// Threshold of each point (`score >= threshold` is positive); empty
    /// for averaged curves.
    pub thresholds: Vec<f64>,
    pub eer: f64,
}

impl DetCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("fpr,fnr\n");
        for (f, n) in &self.points {
            let _ = writeln!(out, "{f},{n}");
        }
        out
    }
}

/// Operating points for every distinct threshold plus `+inf`.
fn operating_points(scores: &[(f64, bool)]) -> Result<(Vec<f64>, Vec<(f64, f64)>)> {
    if scores.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::Numerical("non-finite score".into()));
    }
    let n_pos = scores.iter().filter(|(_, y)| *y).count();
    let n_neg = scores.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (mut fp, mut fn_) = (n_neg, 0usize);
    let mut thresholds = Vec::new();
    let mut points = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        thresholds.push(t);
        points.push((fp as f64 / n_neg as f64, fn_ as f64 / n_pos as f64));
        while i < sorted.len() && sorted[i].0 == t {
            if sorted[i].1 {
                fn_ += 1;
            } else {
                fp -= 1;
            }
            i += 1;
        }
    }
    thresholds.push(f64::INFINITY);
    points.push((0.0, 1.0));
    Ok((thresholds, points))
}

/// Crossing of FPR and FNR along a monotone curve, with linear
/// interpolation. Returns the EER and the interpolation position.
fn crossing(points: &[(f64, f64)]) -> (f64, usize, f64) {
    let d: Vec<f64> = points.iter().map(|(f, n)| f - n).collect();
    if let Some(i) = d.iter().position(|v| *v == 0.0) {
        return (points[i].0, i, 0.0);
    }
    match d.windows(2).position(|w| w[0] > 0.0 && w[1] < 0.0) {
        Some(i) => {
            let t = d[i] / (d[i] - d[i + 1]);
            (points[i].0 + t * (points[i + 1].0 - points[i].0), i, t)
        }
        // Curve lies on one side of the diagonal: take the closest point.
        None => {
            let i = (0..d.len()).min_by(|a, b| d[*a].abs().total_cmp(&d[*b].abs())).expect("non-empty curve");
            (0.5 * (points[i].0 + points[i].1), i, 0.0)
        }
    }
}

/// Equal error rate and the threshold at which it occurs. Higher scores
/// mean the positive (PD) class.
pub fn compute_eer(scores: &[(f64, bool)]) -> Result<(f64, f64)> {
    let (th, pts) = operating_points(scores)?;
    let (eer, i, t) = crossing(&pts);
    let threshold = if t == 0.0 || !th[i + 1].is_finite() { th[i] } else { th[i] + t * (th[i + 1] - th[i]) };
    Ok((eer, threshold))
}

pub fn det_curve(scores: &[(f64, bool)]) -> Result<DetCurve> {
    let (thresholds, points) = operating_points(scores)?;
    let (eer, _, _) = crossing(&points);
    Ok(DetCurve { points, thresholds, eer })
}

/// `DET_GRID_POINTS` log-spaced false-positive rates from `DET_GRID_MIN` to 1.
pub fn det_grid() -> Vec<f64> {
    let lo = DET_GRID_MIN.ln();
    let n = DET_GRID_POINTS;
    (0..n).map(|i| if i + 1 == n { 1.0 } else { (lo * (1.0 - i as f64 / (n - 1) as f64)).exp() }).collect()
}

/// False-negative rate of a DET polyline at false-positive rate `f`; on
/// vertical runs the lowest value is used.
pub fn fnr_at(curve: &DetCurve, f: f64) -> f64 {
    let mut pts = curve.points.clone();
    pts.reverse();
    let mut best = f64::INFINITY;
    for w in pts.windows(2) {
        let ((f0, n0), (f1, n1)) = (w[0], w[1]);
        if f0 == f {
            best = best.min(n0);
        }
        if f1 == f {
            best = best.min(n1);
        }
        if f0 < f && f < f1 {
            best = best.min(n0 + (f - f0) / (f1 - f0) * (n1 - n0));
        }
    }
    best
}

/// Averages per-run DET curves on the common grid.
pub fn average_det(runs: &[DetCurve]) -> Result<DetCurve> {
    if runs.is_empty() {
        return Err(Error::Empty("DET curves"));
    }
    let grid = det_grid();
    let points: Vec<(f64, f64)> = grid
        .iter()
        .map(|f| {
            let v: Vec<f64> = runs.iter().map(|c| fnr_at(c, *f)).collect();
            (*f, mean(&v))
        })
        .collect();
    // Grid runs in falling-threshold order; `crossing` expects rising.
    let mut rising = points.clone();
    rising.reverse();
    let eer = if points[0].1 <= points[0].0 { points[0].1 } else { crossing(&rising).0 };
    Ok(DetCurve { points: rising, thresholds: Vec::new(), eer })
}

/// Simple-model estimate from already-scored runs. Runs whose test set holds
/// a single class are skipped with a warning.
pub fn simple_model_from_runs(runs: &[RunScores]) -> Result<DetCurve> {
    if runs.len() < 2 {
        return Err(Error::Config("the simple-model estimate needs at least two runs".into()));
    }
    let mut curves = Vec::with_capacity(runs.len());
    for r in runs {
        match det_curve(&r.labelled()) {
            Ok(c) => curves.push(c),
            Err(Error::SingleClass) => log::warn!("run {} has a single-class test set; skipped", r.run_index),
            Err(e) => return Err(e),
        }
    }
    average_det(&curves)
}

/// Per-run DET curves averaged pointwise on the common grid.
pub fn simple_model_eval<F>(plans: &[SplitPlan], pipeline: F) -> Result<DetCurve>
where
    F: Fn(&SplitPlan) -> Result<Vec<(String, f64)>> + Sync,
{
    simple_model_from_runs(&run_experiment(plans, pipeline)?.runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn cohort(n_pd: usize, n_hc: usize) -> BTreeMap<String, Group> {
        (0..n_pd).map(|i| (format!("pd{i:03}"), Group::Pd)).chain((0..n_hc).map(|i| (format!("hc{i:03}"), Group::Hc))).collect()
    }

    #[test]
    fn forced_split_counts() {
        let plans = make_splits(&cohort(2, 2), 1, 5, 1).unwrap();
        for p in &plans {
            assert_eq!((p.train_pd.len(), p.train_hc.len(), p.test_pd.len(), p.test_hc.len()), (1, 1, 1, 1));
        }
        assert_eq!(plans, make_splits(&cohort(2, 2), 1, 5, 1).unwrap());
        assert!(matches!(make_splits(&cohort(2, 2), 2, 5, 1), Err(Error::Infeasible(_))));
    }

    #[test]
    fn full_sized_splits_cover_everyone() {
        let c = cohort(63, 36);
        let plans = make_splits(&c, 30, DEFAULT_RUNS, 9).unwrap();
        for p in &plans {
            p.validate().unwrap();
            let all: BTreeSet<&String> = p.train_pd.iter().chain(&p.train_hc).chain(&p.test_pd).chain(&p.test_hc).collect();
            assert_eq!(all.len(), c.len());
        }
        assert!(test_counts(&plans).values().all(|n| *n >= 1));
    }

    #[test]
    fn aggregation_examples() {
        let plans = make_splits(&cohort(3, 3), 1, 20, 4).unwrap();
        let constant = run_experiment(&plans, |p| Ok(p.test().map(|(s, _)| (s.to_string(), 0.5)).collect())).unwrap();
        assert!(constant.subjects.values().all(|a| a.final_score == 0.5));
        let by_run = run_experiment(&plans, |p| Ok(p.test().map(|(s, _)| (s.to_string(), p.run_index as f64 / 100.0)).collect())).unwrap();
        for (s, a) in &by_run.subjects {
            let runs: Vec<usize> = plans.iter().filter(|p| p.test().any(|(t, _)| t == s)).map(|p| p.run_index).collect();
            let want = runs.iter().map(|r| *r as f64 / 100.0).sum::<f64>() / runs.len() as f64;
            assert!((a.final_score - want).abs() < 1e-15);
        }
        let single = run_experiment(&plans[..1], |p| Ok(p.test().map(|(s, _)| (s.to_string(), 0.25)).collect())).unwrap();
        assert_eq!(single.subjects.len(), 4);
        assert!(single.subjects.values().all(|a| a.final_score == 0.25));
        // One run leaves training-only subjects untested.
        assert!(matches!(check_coverage(&plans[..1]), Err(Error::Infeasible(_))));
        check_coverage(&plans).unwrap();
        let missing = run_experiment(&plans, |p| Ok(p.test().skip(1).map(|(s, _)| (s.to_string(), 0.5)).collect()));
        assert!(matches!(missing, Err(Error::Infeasible(_))));
    }

    #[test]
    fn mean_of_two_runs() {
        let plans = vec![
            SplitPlan { run_index: 3, train_pd: vec!["b".into()], train_hc: vec!["c".into()], test_pd: vec!["a".into()], test_hc: vec!["d".into()], seed: 0 },
            SplitPlan { run_index: 17, train_pd: vec!["b".into()], train_hc: vec!["d".into()], test_pd: vec!["a".into()], test_hc: vec!["c".into()], seed: 0 },
            SplitPlan { run_index: 20, train_pd: vec!["a".into()], train_hc: vec!["c".into()], test_pd: vec!["b".into()], test_hc: vec!["d".into()], seed: 0 },
        ];
        let agg = run_experiment(&plans, |p| {
            Ok(p.test().map(|(s, _)| (s.to_string(), if s == "a" { if p.run_index == 3 { 0.6 } else { 0.8 } } else { 0.5 })).collect())
        })
        .unwrap();
        assert!((agg.subjects["a"].final_score - 0.7).abs() < 1e-15);
        assert_eq!(agg.subjects["a"].runs.len(), 2);
    }

    /// Exhaustive sweep: counts errors directly at every candidate threshold,
    /// then bisects the joining segments for the point nearest FPR = FNR.
    fn brute_eer(scores: &[(f64, bool)]) -> f64 {
        let mut cands: Vec<f64> = scores.iter().map(|s| s.0).collect();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        cands.push(f64::INFINITY);
        let n_pos = scores.iter().filter(|s| s.1).count() as f64;
        let n_neg = scores.len() as f64 - n_pos;
        let pts: Vec<(f64, f64)> = cands
            .iter()
            .map(|t| {
                let fp = scores.iter().filter(|(s, y)| !*y && *s >= *t).count() as f64;
                let fnn = scores.iter().filter(|(s, y)| *y && *s < *t).count() as f64;
                (fp / n_neg, fnn / n_pos)
            })
            .collect();
        let mut best = (f64::INFINITY, 0.0);
        for w in pts.windows(2) {
            let at = |t: f64| (w[0].0 + t * (w[1].0 - w[0].0), w[0].1 + t * (w[1].1 - w[0].1));
            let gap = |t: f64| {
                let (f, n) = at(t);
                f - n
            };
            let (mut lo, mut hi) = (0.0, 1.0);
            if gap(lo) * gap(hi) < 0.0 {
                for _ in 0..100 {
                    let mid = 0.5 * (lo + hi);
                    if gap(lo) * gap(mid) <= 0.0 {
                        hi = mid;
                    } else {
                        lo = mid;
                    }
                }
            }
            for t in [0.0, lo, 1.0] {
                if gap(t).abs() < best.0 {
                    best = (gap(t).abs(), at(t).0);
                }
            }
        }
        best.1
    }

    #[test]
    fn eer_matches_brute_force() {
        for seed in 0..5 {
            let mut rng = seed::rng(seed);
            let scores: Vec<(f64, bool)> = (0..200)
                .map(|_| {
                    let y = rng.random_bool(0.5);
                    let s: f64 = rng.random::<f64>() + if y { 0.3 } else { 0.0 };
                    ((s * 50.0).round() / 50.0, y)
                })
                .collect();
            let (eer, _) = compute_eer(&scores).unwrap();
            assert!((eer - brute_eer(&scores)).abs() <= 1e-6, "{eer} vs {}", brute_eer(&scores));
        }
    }

    #[test]
    fn eer_examples() {
        let sep: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i >= 10)).collect();
        assert_eq!(compute_eer(&sep).unwrap().0, 0.0);
        let mut rng = seed::rng(77);
        let chance: Vec<(f64, bool)> = (0..10_000).map(|_| (rng.random::<f64>(), rng.random_bool(0.5))).collect();
        assert!((compute_eer(&chance).unwrap().0 - 0.5).abs() <= 0.02);
        let constant: Vec<(f64, bool)> = (0..10).map(|i| (0.5, i % 2 == 0)).collect();
        assert_eq!(compute_eer(&constant).unwrap().0, 0.5);
        assert!(matches!(compute_eer(&[(0.1, true), (0.2, true)]), Err(Error::SingleClass)));
    }

    #[test]
    fn det_shape() {
        let mut rng = seed::rng(5);
        let scores: Vec<(f64, bool)> = (0..300).map(|i| (((rng.random::<f64>() * 40.0).round()), i % 3 == 0)).collect();
        let c = det_curve(&scores).unwrap();
        let mut distinct: Vec<f64> = scores.iter().map(|s| s.0).collect();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        assert_eq!(c.points.len(), distinct.len() + 1);
        for w in c.points.windows(2) {
            assert!(w[1].0 <= w[0].0 && w[1].1 >= w[0].1);
        }
        assert_eq!(c.points[0], (1.0, 0.0));
        assert_eq!(*c.points.last().unwrap(), (0.0, 1.0));
        assert!(c.to_csv().starts_with("fpr,fnr\n1,0\n"));
        let sep: Vec<(f64, bool)> = (0..20).map(|i| (i as f64, i >= 10)).collect();
        let sc = det_curve(&sep).unwrap();
        assert!(sc.points.contains(&(0.0, 0.0)));
        assert_eq!(sc.eer, 0.0);
    }

    fn gaussian_run(idx: usize, shift: f64, n: usize, seed: u64) -> RunScores {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = seed::rng(seed);
        let scores = (0..2 * n)
            .map(|i| {
                let g = if i < n { Group::Pd } else { Group::Hc };
                let z: f64 = StandardNormal.sample(&mut rng);
                (format!("s{i}"), g, z + if g.is_pd() { shift } else { 0.0 })
            })
            .collect();
        RunScores { run_index: idx, scores }
    }

    #[test]
    fn averaged_det_examples() {
        let r = gaussian_run(0, 1.0, 50, 1);
        let one = average_det(&[det_curve(&r.labelled()).unwrap()]).unwrap();
        let twice = simple_model_from_runs(&[r.clone(), RunScores { run_index: 1, ..r.clone() }]).unwrap();
        assert_eq!(one, twice);

        // Shifts giving EERs of about 0.2 and 0.3 for unit-variance scores.
        let a = gaussian_run(0, 1.683, 4000, 2);
        let b = gaussian_run(1, 1.049, 4000, 3);
        let (ea, eb) = (compute_eer(&a.labelled()).unwrap().0, compute_eer(&b.labelled()).unwrap().0);
        let avg = simple_model_from_runs(&[a, b]).unwrap();
        assert!(avg.eer >= ea.min(eb) && avg.eer <= ea.max(eb), "{ea} {eb} {}", avg.eer);

        let constant: Vec<RunScores> = (0..3).map(|i| RunScores { run_index: i, scores: (0..8).map(|k| (format!("s{k}"), if k < 4 { Group::Pd } else { Group::Hc }, 0.5)).collect() }).collect();
        assert!((simple_model_from_runs(&constant).unwrap().eer - 0.5).abs() < 1e-3);
        assert!(simple_model_from_runs(&constant[..1]).is_err());
    }

    #[test]
    fn single_class_runs_are_skipped() {
        let good = gaussian_run(0, 2.0, 20, 4);
        let bad = RunScores { run_index: 1, scores: vec![("x".into(), Group::Pd, 0.3)] };
        let with_bad = simple_model_from_runs(&[good.clone(), bad, RunScores { run_index: 2, ..good.clone() }]).unwrap();
        assert_eq!(with_bad, simple_model_from_runs(&[good.clone(), good]).unwrap());
    }

    #[test]
    fn grid_is_log_spaced() {
        let g = det_grid();
        assert_eq!(g.len(), DET_GRID_POINTS);
        assert!((g[0] - DET_GRID_MIN).abs() < 1e-18 && g[g.len() - 1] == 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
