//! Class-conditional diagonal-covariance GMMs: k-means++ seeding, EM, and
//! mean per-frame log-likelihood-ratio scoring.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;
use crate::linalg::Matrix;
use crate::manifest::Group;
use crate::math::{compensated_sum, log_sum_exp, sigmoid};
use crate::scalar::Real;
use crate::seed;

/// Fraction of the global per-dimension variance used as the variance floor.
pub const VARIANCE_FLOOR_SCALE: f64 = 1e-3;
pub const KMEANS_ITERS: usize = 10;
pub const DEFAULT_MAX_ITER: usize = 50;
pub const DEFAULT_TOL: f64 = 1e-6;

/// Rows per E-step block. Partial sums are reduced in block order, so the
/// result does not depend on the number of worker threads.
const BLOCK: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel<T: Real> {
    weights: Vec<T>,
    means: Matrix<T>,
    variances: Matrix<T>,
    floor: Vec<T>,
    pub label: Option<Group>,
}

/// Per-component constants for fast evaluation.
struct Prepared<T> {
    inv_var: Matrix<T>,
    mean_iv: Matrix<T>,
    /// `ln w - ½ Σ ln(2πσ²) - ½ Σ μ²/σ²`
    offset: Vec<T>,
}

impl<T: Real> GmmModel<T> {
    /// Validates shapes, positivity, the floor and normalization.
    pub fn from_parts(weights: Vec<T>, means: Matrix<T>, variances: Matrix<T>, floor: Vec<T>, label: Option<Group>) -> Result<Self> {
        let m = weights.len();
        let d = means.cols();
        if m == 0 || d == 0 {
            return Err(Error::Shape("GMM needs at least one component and one dimension".into()));
        }
        if means.rows() != m || variances.rows() != m || variances.cols() != d || floor.len() != d {
            return Err(Error::Shape(format!(
                "GMM parts disagree: {m} weights, means {}x{}, variances {}x{}, floor {}",
                means.rows(),
                means.cols(),
                variances.rows(),
                variances.cols(),
                floor.len()
            )));
        }
        if weights.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
            return Err(Error::Shape("GMM weights must be positive".into()));
        }
        let total: f64 = weights.iter().map(|w| w.as_f64()).sum();
        if (total - 1.0).abs() > 1e-5 {
            return Err(Error::Shape(format!("GMM weights sum to {total}")));
        }
        if !means.is_finite() || floor.iter().any(|f| !(*f > T::zero())) {
            return Err(Error::Shape("GMM means or floor invalid".into()));
        }
        for i in 0..m {
            for (v, f) in variances.row(i).iter().zip(&floor) {
                if !v.is_finite() || *v < *f {
                    return Err(Error::Shape(format!("variance {v} below floor {f}")));
                }
            }
        }
        Ok(Self { weights, means, variances, floor, label })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.means.cols()
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn means(&self) -> &Matrix<T> {
        &self.means
    }

    pub fn variances(&self) -> &Matrix<T> {
        &self.variances
    }

    pub fn floor(&self) -> &[T] {
        &self.floor
    }

    pub fn cast<U: Real>(&self) -> GmmModel<U> {
        GmmModel {
            weights: self.weights.iter().map(|w| U::of(w.as_f64())).collect(),
            means: self.means.cast(),
            variances: self.variances.cast(),
            floor: self.floor.iter().map(|w| U::of(w.as_f64())).collect(),
            label: self.label,
        }
    }

    fn prepare(&self) -> Prepared<T> {
        let (m, d) = (self.n_components(), self.feature_dim());
        let half = T::of(0.5);
        let ln2pi = T::of((2.0 * std::f64::consts::PI).ln());
        let inv_var = Matrix::from_fn(m, d, |i, j| T::one() / self.variances[(i, j)]);
        let mean_iv = Matrix::from_fn(m, d, |i, j| self.means[(i, j)] * inv_var[(i, j)]);
        let offset = (0..m)
            .map(|i| {
                let mut acc = T::zero();
                for j in 0..d {
                    acc += ln2pi + self.variances[(i, j)].ln() + self.means[(i, j)] * mean_iv[(i, j)];
                }
                self.weights[i].ln() - half * acc
            })
            .collect();
        Prepared { inv_var, mean_iv, offset }
    }

    /// Weighted component log-densities for a block of rows (`n x M`).
    fn component_logdens(&self, p: &Prepared<T>, x: &[T], n: usize) -> Vec<T> {
        let (m, d) = (self.n_components(), self.feature_dim());
        let sq: Vec<T> = x.iter().map(|v| *v * *v).collect();
        let mut out = vec![T::zero(); n * m];
        for row in out.chunks_exact_mut(m) {
            row.copy_from_slice(&p.offset);
        }
        // out += -½ X² · IVᵀ + X · (μ·IV)ᵀ
        let di = d as isize;
        let mi = m as isize;
        T::gemm(n, d, m, T::of(-0.5), &sq, di, 1, p.inv_var.as_slice(), 1, di, T::one(), &mut out, mi, 1);
        T::gemm(n, d, m, T::one(), x, di, 1, p.mean_iv.as_slice(), 1, di, T::one(), &mut out, mi, 1);
        out
    }

    /// Per-frame mixture log-likelihoods for every row of `frames`.
    pub fn loglik_batch(&self, frames: &Matrix<T>) -> Result<Vec<T>> {
        if frames.cols() != self.feature_dim() {
            return Err(Error::DimensionMismatch { expected: self.feature_dim(), got: frames.cols() });
        }
        let p = self.prepare();
        let m = self.n_components();
        let d = self.feature_dim();
        let out = frames
            .as_slice()
            .par_chunks(BLOCK * d)
            .flat_map_iter(|x| {
                let n = x.len() / d;
                let ld = self.component_logdens(&p, x, n);
                ld.chunks_exact(m).map(log_sum_exp).collect::<Vec<_>>()
            })
            .collect();
        Ok(out)
    }
}

/// `log Σ_m w_m N(x; μ_m, diag σ²_m)`, evaluated directly with log-sum-exp.
pub fn frame_loglik<T: Real>(model: &GmmModel<T>, frame: &[T]) -> Result<T> {
    let d = model.feature_dim();
    if frame.len() != d {
        return Err(Error::DimensionMismatch { expected: d, got: frame.len() });
    }
    let half = T::of(0.5);
    let ln2pi = T::of((2.0 * std::f64::consts::PI).ln());
    let terms: Vec<T> = (0..model.n_components())
        .map(|i| {
            let mut acc = T::zero();
            for (j, x) in frame.iter().enumerate() {
                let v = model.variances[(i, j)];
                let z = *x - model.means[(i, j)];
                acc += ln2pi + v.ln() + z * z / v;
            }
            model.weights[i].ln() - half * acc
        })
        .collect();
    Ok(log_sum_exp(&terms))
}

fn global_stats<T: Real>(frames: &Matrix<T>) -> (Vec<f64>, Vec<f64>) {
    let (n, d) = (frames.rows(), frames.cols());
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, x) in mean.iter_mut().zip(frames.row(i)) {
            *m += x.as_f64();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut var = vec![0.0; d];
    for i in 0..n {
        for ((v, x), m) in var.iter_mut().zip(frames.row(i)).zip(&mean) {
            let z = x.as_f64() - m;
            *v += z * z;
        }
    }
    var.iter_mut().for_each(|v| *v /= n as f64);
    (mean, var)
}

fn variance_floor(global_var: &[f64]) -> Vec<f64> {
    global_var.iter().map(|v| (VARIANCE_FLOOR_SCALE * v).max(1e-10)).collect()
}

fn sq_dist<T: Real>(a: &[T], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, c)| (x.as_f64() - c).powi(2)).sum()
}

/// k-means++ seeding followed by [`KMEANS_ITERS`] Lloyd iterations.
///
/// Weights are the cluster proportions and variances the per-cluster
/// diagonal variances, floored at [`VARIANCE_FLOOR_SCALE`] times the global
/// variance.
pub fn kmeans_init<T: Real>(frames: &FeatureMatrix<T>, m: usize, seed: u64) -> Result<GmmModel<T>> {
    let x = frames.frames();
    let (n, d) = (x.rows(), x.cols());
    if m == 0 {
        return Err(Error::Config("GMM needs at least one component".into()));
    }
    if n < 10 * m {
        return Err(Error::TooShort(format!("{n} frames for {m} components (need {})", 10 * m)));
    }
    let (_, gvar) = global_stats(x);
    let floor = variance_floor(&gvar);
    let mut rng = seed::rng(seed);

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(m);
    centers.push(x.row(rng.random_range(0..n)).iter().map(|v| v.as_f64()).collect());
    let mut best: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), &centers[0])).collect();
    while centers.len() < m {
        let total: f64 = best.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            best.iter().position(|b| {
                acc += b;
                acc > target
            })
            .unwrap_or(n - 1)
        } else {
            rng.random_range(0..n)
        };
        let c: Vec<f64> = x.row(pick).iter().map(|v| v.as_f64()).collect();
        for (i, b) in best.iter_mut().enumerate() {
            *b = b.min(sq_dist(x.row(i), &c));
        }
        centers.push(c);
    }

    let mut assign = vec![0usize; n];
    let mut dist = vec![0.0; n];
    let assign_all = |centers: &[Vec<f64>], assign: &mut [usize], dist: &mut [f64]| {
        for i in 0..n {
            let (k, dk) = centers
                .iter()
                .enumerate()
                .map(|(k, c)| (k, sq_dist(x.row(i), c)))
                .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
            assign[i] = k;
            dist[i] = dk;
        }
    };
    for _ in 0..KMEANS_ITERS {
        assign_all(&centers, &mut assign, &mut dist);
        let mut sums = vec![vec![0.0; d]; m];
        let mut counts = vec![0usize; m];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, v) in sums[assign[i]].iter_mut().zip(x.row(i)) {
                *s += v.as_f64();
            }
        }
        for k in 0..m {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            } else {
                // Empty cluster: move it onto the worst-fitted frame.
                let far = (0..n).fold(0, |a, i| if dist[i] > dist[a] { i } else { a });
                centers[k] = x.row(far).iter().map(|v| v.as_f64()).collect();
                dist[far] = 0.0;
            }
        }
    }
    assign_all(&centers, &mut assign, &mut dist);

    let mut counts = vec![0usize; m];
    let mut sq = vec![vec![0.0; d]; m];
    let mut sums = vec![vec![0.0; d]; m];
    for i in 0..n {
        counts[assign[i]] += 1;
        for j in 0..d {
            sums[assign[i]][j] += x[(i, j)].as_f64();
        }
    }
    for k in 0..m {
        if counts[k] > 0 {
            centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
        }
    }
    for i in 0..n {
        let k = assign[i];
        for j in 0..d {
            sq[k][j] += (x[(i, j)].as_f64() - centers[k][j]).powi(2);
        }
    }
    // Clusters that end up empty still get a small positive weight.
    let eff: Vec<f64> = counts.iter().map(|c| (*c as f64).max(0.5)).collect();
    let total: f64 = eff.iter().sum();
    let weights = eff.iter().map(|c| T::of(c / total)).collect();
    let means = Matrix::from_fn(m, d, |k, j| T::of(centers[k][j]));
    let variances = Matrix::from_fn(m, d, |k, j| {
        let v = if counts[k] > 1 { sq[k][j] / counts[k] as f64 } else { gvar[j] };
        T::of(v.max(floor[j]))
    });
    GmmModel::from_parts(weights, means, variances, floor.iter().map(|f| T::of(*f)).collect(), None)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmTrace {
    /// Total log-likelihood before the first and after every M-step.
    pub loglik: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

struct Stats {
    ll: f64,
    occ: Vec<f64>,
    s1: Vec<f64>,
    s2: Vec<f64>,
}

fn e_step<T: Real>(model: &GmmModel<T>, x: &Matrix<T>) -> Stats {
    let (m, d) = (model.n_components(), model.feature_dim());
    let p = model.prepare();
    let parts: Vec<Stats> = x
        .as_slice()
        .par_chunks(BLOCK * d)
        .map(|blk| {
            let n = blk.len() / d;
            let mut r = model.component_logdens(&p, blk, n);
            let mut ll = Vec::with_capacity(n);
            for row in r.chunks_exact_mut(m) {
                let l = log_sum_exp(row);
                ll.push(l.as_f64());
                row.iter_mut().for_each(|v| *v = (*v - l).exp());
            }
            let occ = (0..m).map(|k| compensated_sum((0..n).map(|i| r[i * m + k].as_f64()))).collect();
            let sq: Vec<T> = blk.iter().map(|v| *v * *v).collect();
            let mut s1 = vec![T::zero(); m * d];
            let mut s2 = vec![T::zero(); m * d];
            let (mi, di) = (m as isize, d as isize);
            // Rᵀ·X and Rᵀ·X²
            T::gemm(m, n, d, T::one(), &r, 1, mi, blk, di, 1, T::zero(), &mut s1, di, 1);
            T::gemm(m, n, d, T::one(), &r, 1, mi, &sq, di, 1, T::zero(), &mut s2, di, 1);
            Stats {
                ll: compensated_sum(ll),
                occ,
                s1: s1.iter().map(|v| v.as_f64()).collect(),
                s2: s2.iter().map(|v| v.as_f64()).collect(),
            }
        })
        .collect();
    let mut total = Stats { ll: 0.0, occ: vec![0.0; m], s1: vec![0.0; m * d], s2: vec![0.0; m * d] };
    total.ll = compensated_sum(parts.iter().map(|s| s.ll));
    for s in &parts {
        total.occ.iter_mut().zip(&s.occ).for_each(|(a, b)| *a += b);
        total.s1.iter_mut().zip(&s.s1).for_each(|(a, b)| *a += b);
        total.s2.iter_mut().zip(&s.s2).for_each(|(a, b)| *a += b);
    }
    total
}

fn m_step<T: Real>(model: &GmmModel<T>, st: &Stats, n: usize) -> GmmModel<T> {
    let (m, d) = (model.n_components(), model.feature_dim());
    let mut next = model.clone();
    let tiny = 1e-10 * n as f64;
    let mut w: Vec<f64> = st.occ.iter().map(|o| (o / n as f64).max(1e-12)).collect();
    let ws: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= ws);
    for k in 0..m {
        next.weights[k] = T::of(w[k]);
        if st.occ[k] <= tiny {
            continue;
        }
        for j in 0..d {
            let mu = st.s1[k * d + j] / st.occ[k];
            let var = st.s2[k * d + j] / st.occ[k] - mu * mu;
            next.means[(k, j)] = T::of(mu);
            next.variances[(k, j)] = T::of(var).max(next.floor[j]);
        }
    }
    next
}

/// Diagonal-covariance EM from `init`.
///
/// Stops after `max_iter` M-steps or once the per-frame log-likelihood gain
/// falls below `tol`. Frames are centred on their global mean internally;
/// the returned model is in the original coordinates.
pub fn em_fit<T: Real>(init: &GmmModel<T>, frames: &FeatureMatrix<T>, max_iter: usize, tol: f64) -> Result<(GmmModel<T>, EmTrace)> {
    let x = frames.frames();
    let (n, d) = (x.rows(), x.cols());
    if d != init.feature_dim() {
        return Err(Error::DimensionMismatch { expected: init.feature_dim(), got: d });
    }
    if n == 0 {
        return Err(Error::Empty("EM training frames"));
    }
    let (gmean, _) = global_stats(x);
    let shift: Vec<T> = gmean.iter().map(|m| T::of(*m)).collect();
    let centred = Matrix::from_fn(n, d, |i, j| x[(i, j)] - shift[j]);
    let mut model = init.clone();
    for k in 0..model.n_components() {
        for j in 0..d {
            model.means[(k, j)] -= shift[j];
        }
    }

    let mut trace = EmTrace { loglik: Vec::new(), iterations: 0, converged: false };
    let mut stats = e_step(&model, &centred);
    loop {
        if !stats.ll.is_finite() {
            return Err(Error::Numerical(format!(
                "EM log-likelihood became {} at iteration {} ({} components, {} frames)",
                stats.ll,
                trace.iterations,
                model.n_components(),
                n
            )));
        }
        trace.loglik.push(stats.ll);
        if let [.., a, b] = trace.loglik[..] {
            if (b - a) / (n as f64) < tol {
                trace.converged = true;
                break;
            }
        }
        if trace.iterations == max_iter {
            break;
        }
        model = m_step(&model, &stats, n);
        trace.iterations += 1;
        stats = e_step(&model, &centred);
    }
    for k in 0..model.n_components() {
        for j in 0..d {
            model.means[(k, j)] += shift[j];
        }
    }
    model.label = init.label;
    Ok((model, trace))
}

/// Trains one class model: k-means++ seeding then EM with default limits.
pub fn train<T: Real>(frames: &FeatureMatrix<T>, m: usize, label: Option<Group>, seed: u64) -> Result<(GmmModel<T>, EmTrace)> {
    let mut init = kmeans_init(frames, m, seed)?;
    init.label = label;
    em_fit(&init, frames, DEFAULT_MAX_ITER, DEFAULT_TOL)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectScore {
    pub subject_id: String,
    pub score: f64,
    pub llr: f64,
    pub n_frames: usize,
}

fn mean_loglik<T: Real>(model: &GmmModel<T>, fm: &FeatureMatrix<T>) -> Result<f64> {
    let ll = model.loglik_batch(fm.frames())?;
    Ok(compensated_sum(ll.iter().map(|v| v.as_f64())) / ll.len() as f64)
}

/// Mean per-frame log-likelihood ratio of `fm` between the two models,
/// mapped through `sigmoid(slope * llr)`. The subject id is taken from the
/// matrix's utterance id.
pub fn score_subject<T: Real>(fm: &FeatureMatrix<T>, model_pd: &GmmModel<T>, model_hc: &GmmModel<T>, sigmoid_slope: f64) -> Result<SubjectScore> {
    if fm.n_frames() == 0 {
        return Err(Error::Empty("feature matrix"));
    }
    if model_pd.feature_dim() != model_hc.feature_dim() {
        return Err(Error::DimensionMismatch { expected: model_pd.feature_dim(), got: model_hc.feature_dim() });
    }
    let llr = mean_loglik(model_pd, fm)? - mean_loglik(model_hc, fm)?;
    if !llr.is_finite() {
        return Err(Error::Numerical(format!("non-finite llr for {}", fm.meta.utterance_id)));
    }
    Ok(SubjectScore { subject_id: fm.meta.utterance_id.clone(), score: sigmoid(sigmoid_slope * llr), llr, n_frames: fm.n_frames() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian_frames(n: usize, means: &[(f64, Vec<f64>)], sd: f64, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = seed::rng(seed);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mu = &means.iter().find(|(w, _)| {
                    acc += w;
                    u < acc
                })
                .unwrap_or(means.last().unwrap())
                .1;
                mu.iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        m + sd * z
                    })
                    .collect()
            })
            .collect();
        FeatureMatrix::from_rows(&rows, 10.0).unwrap()
    }

    #[test]
    fn single_component_is_global_moments() {
        let fm = gaussian_frames(500, &[(1.0, vec![1.0, -2.0, 3.0])], 0.7, 1);
        let g = kmeans_init(&fm, 1, 3).unwrap();
        let (mean, var) = global_stats(fm.frames());
        for j in 0..3 {
            assert!((g.means()[(0, j)] - mean[j]).abs() < 1e-12);
            assert!((g.variances()[(0, j)] - var[j]).abs() < 1e-12);
        }
        assert_eq!(g.weights(), &[1.0]);
    }

    #[test]
    fn separated_blobs_are_found() {
        let fm = gaussian_frames(2000, &[(0.5, vec![0.0, 0.0]), (0.5, vec![10.0, 10.0])], 0.3, 2);
        let g = kmeans_init(&fm, 2, 9).unwrap();
        let mut firsts: Vec<f64> = (0..2).map(|k| g.means()[(k, 0)]).collect();
        firsts.sort_by(f64::total_cmp);
        assert!(firsts[0].abs() < 0.1 && (firsts[1] - 10.0).abs() < 0.1, "{firsts:?}");
        assert_eq!(kmeans_init(&fm, 2, 9).unwrap(), g);
    }

    #[test]
    fn too_few_frames() {
        let fm = gaussian_frames(49, &[(1.0, vec![0.0])], 1.0, 1);
        assert!(matches!(kmeans_init(&fm, 5, 0), Err(Error::TooShort(_))));
    }

    #[test]
    fn em_single_gaussian_is_mle() {
        let fm = gaussian_frames(4000, &[(1.0, vec![2.0, -1.0])], 1.5, 5);
        let (g, _) = train(&fm, 1, None, 1).unwrap();
        let (mean, var) = global_stats(fm.frames());
        for j in 0..2 {
            let se = (var[j] / 4000.0).sqrt();
            assert!((g.means()[(0, j)] - mean[j]).abs() < 3.0 * se);
            assert!((g.variances()[(0, j)] - var[j]).abs() < 3.0 * var[j] * (2.0f64 / 4000.0).sqrt());
        }
    }

    #[test]
    fn em_recovers_mixture_weights() {
        let fm = gaussian_frames(5000, &[(0.7, vec![0.0, 0.0]), (0.3, vec![5.0, 0.0])], 1.0, 8);
        let (g, trace) = train(&fm, 2, None, 4).unwrap();
        let mut w: Vec<(f64, f64)> = (0..2).map(|k| (g.means()[(k, 0)], g.weights()[k])).collect();
        w.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((w[0].1 - 0.7).abs() < 0.05 && (w[1].1 - 0.3).abs() < 0.05, "{w:?}");
        for p in trace.loglik.windows(2) {
            assert!(p[1] >= p[0] - 1e-8 * p[0].abs());
        }
        assert!((g.weights().iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn loglik_at_the_mean() {
        let g = GmmModel::from_parts(vec![1.0], Matrix::from_vec(1, 2, vec![1.0, 2.0]).unwrap(), Matrix::from_vec(1, 2, vec![0.5, 2.0]).unwrap(), vec![1e-3; 2], None).unwrap();
        let want = -0.5 * ((2.0 * std::f64::consts::PI * 0.5).ln() + (2.0 * std::f64::consts::PI * 2.0).ln());
        assert!((frame_loglik(&g, &[1.0, 2.0]).unwrap() - want).abs() < 1e-14);
        assert!(frame_loglik(&g, &[1.0]).is_err());
    }

    #[test]
    fn far_frames_stay_finite() {
        let g = GmmModel::from_parts(vec![0.5, 0.5], Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap(), Matrix::from_vec(2, 1, vec![1e-4, 1e-4]).unwrap(), vec![1e-5], None).unwrap();
        let v: f64 = frame_loglik(&g, &[50.0]).unwrap();
        assert!(v.is_finite() && v < -1e6);
    }

    #[test]
    fn batch_agrees_with_direct() {
        let fm = gaussian_frames(3000, &[(0.5, vec![0.0, 1.0, 2.0]), (0.5, vec![3.0, 1.0, -2.0])], 1.0, 3);
        let (g, _) = train(&fm, 4, None, 2).unwrap();
        let batch = g.loglik_batch(fm.frames()).unwrap();
        for (t, b) in batch.iter().enumerate().step_by(37) {
            let d = frame_loglik(&g, fm.frame(t)).unwrap();
            assert!((b - d).abs() < 1e-10 * d.abs().max(1.0), "{b} vs {d}");
        }
    }

    #[test]
    fn score_symmetries() {
        let a = gaussian_frames(600, &[(1.0, vec![0.0, 0.0])], 1.0, 1);
        let b = gaussian_frames(600, &[(1.0, vec![1.5, 0.0])], 1.0, 2);
        let (pd, _) = train(&a, 2, Some(Group::Pd), 1).unwrap();
        let (hc, _) = train(&b, 2, Some(Group::Hc), 1).unwrap();
        let probe = gaussian_frames(200, &[(1.0, vec![0.0, 0.0])], 1.0, 3);
        let s = score_subject(&probe, &pd, &hc, 1.0).unwrap();
        assert!(s.score > 0.5);
        let swapped = score_subject(&probe, &hc, &pd, 1.0).unwrap();
        assert_eq!(swapped.score, 1.0 - s.score);
        let same = score_subject(&probe, &pd, &pd, 1.0).unwrap();
        assert_eq!((same.llr, same.score), (0.0, 0.5));
        let doubled = score_subject(&probe.concat(&probe).unwrap(), &pd, &hc, 1.0).unwrap();
        assert!((doubled.llr - s.llr).abs() <= 1e-12 * s.llr.abs());
    }

    #[test]
    fn non_finite_frames_abort() {
        let fm = gaussian_frames(100, &[(1.0, vec![0.0])], 1.0, 1);
        let init = kmeans_init(&fm, 2, 1).unwrap();
        let mut bad = init.clone();
        bad.variances[(0, 0)] = f64::NAN;
        assert!(matches!(em_fit(&bad, &fm, 5, 1e-6), Err(Error::Numerical(_))));
    }
}
