//! x-vector back-ends: cosine similarity against class centroids, LDA +
//! cosine, and PLDA with two-covariance scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, Cholesky, Matrix, SymEigen};
use crate::manifest::Group;
use crate::math::{centered_sigmoid, mean_centered_score, sigmoid};
use crate::scalar::Real;
use crate::tdnn::XVector;

/// `x·c / (‖x‖‖c‖)`, clamped to `[-1, 1]`.
pub fn cosine_score<T: Real>(x: &[T], c: &[T]) -> Result<T> {
    if x.len() != c.len() {
        return Err(Error::DimensionMismatch { expected: c.len(), got: x.len() });
    }
    let (nx, nc) = (norm(x), norm(c));
    if nx == T::zero() || nc == T::zero() {
        return Err(Error::ZeroVector);
    }
    Ok((dot(x, c) / (nx * nc)).max(-T::one()).min(T::one()))
}

fn check_dims<T>(xs: &[Vec<T>]) -> Result<usize> {
    let d = xs.first().map(Vec::len).ok_or(Error::Empty("training vectors"))?;
    if d == 0 {
        return Err(Error::Empty("vector dimension"));
    }
    if let Some(x) = xs.iter().find(|x| x.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: x.len() });
    }
    Ok(d)
}

/// Indices grouped by label, in label order.
fn by_label(labels: &[usize]) -> Vec<Vec<usize>> {
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(*l).or_default().push(i);
    }
    groups.into_values().collect()
}

fn mean_of<T: Real>(xs: &[Vec<T>], idx: impl IntoIterator<Item = usize>, d: usize) -> Vec<T> {
    let mut m = vec![T::zero(); d];
    let mut n = 0usize;
    for i in idx {
        m.iter_mut().zip(&xs[i]).for_each(|(a, b)| *a += *b);
        n += 1;
    }
    let k = T::of(n as f64);
    m.iter_mut().for_each(|a| *a /= k);
    m
}

/// Within- and between-class scatter, both normalized by the sample count.
fn scatters<T: Real>(xs: &[Vec<T>], classes: &[Vec<usize>], d: usize) -> (Vec<T>, Matrix<T>, Matrix<T>, Vec<Vec<T>>) {
    let n = T::of(xs.len() as f64);
    let mean = mean_of(xs, 0..xs.len(), d);
    let mut sw = Matrix::zeros(d, d);
    let mut sb = Matrix::zeros(d, d);
    let mut means = Vec::with_capacity(classes.len());
    for idx in classes {
        let mc = mean_of(xs, idx.iter().copied(), d);
        for &i in idx {
            let z: Vec<T> = xs[i].iter().zip(&mc).map(|(a, b)| *a - *b).collect();
            sw.add_outer(&z, T::one() / n);
        }
        let z: Vec<T> = mc.iter().zip(&mean).map(|(a, b)| *a - *b).collect();
        sb.add_outer(&z, T::of(idx.len() as f64) / n);
        means.push(mc);
    }
    (mean, sw.symmetrize(), sb.symmetrize(), means)
}

/// Labels used to build LDA scatter matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LdaMode {
    /// PD/HC classes: at most one discriminant direction.
    Class,
    /// One class per subject.
    Speaker,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection<T: Real> {
    /// `d_out x d_in`; rows are orthonormal under `S_w + ridge·I`.
    basis: Matrix<T>,
    mean: Vec<T>,
    eigenvalues: Vec<T>,
    /// Class means in the projected space, in label order.
    class_means: Vec<Vec<T>>,
}

/// Ridge used when none is given: `1e-4 · trace(S_w) / d`.
pub fn default_ridge<T: Real>(sw: &Matrix<T>) -> T {
    T::of(1e-4) * sw.trace() / T::of(sw.rows() as f64)
}

/// Fisher LDA: top eigenvectors of `S_b v = λ (S_w + ridge·I) v`.
///
/// `d_out` is capped at `classes - 1`. `ridge = None` selects
/// [`default_ridge`]; `Some(0)` with singular within-class scatter fails.
/// Each basis row has its first non-negligible component positive.
pub fn lda_fit<T: Real>(xs: &[Vec<T>], labels: &[usize], d_out: usize, ridge: Option<T>) -> Result<LdaProjection<T>> {
    let d = check_dims(xs)?;
    if labels.len() != xs.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: labels.len() });
    }
    let classes = by_label(labels);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    if classes.iter().any(|c| c.len() < 2) {
        return Err(Error::TooShort("LDA needs at least two samples per class".into()));
    }
    if d_out == 0 {
        return Err(Error::Config("LDA output dimension must be positive".into()));
    }
    let (mean, sw, sb, means) = scatters(xs, &classes, d);
    let r = ridge.unwrap_or_else(|| default_ridge(&sw));
    if r < T::zero() || !r.is_finite() {
        return Err(Error::Config(format!("invalid LDA ridge {r}")));
    }
    let reg = sw.add(&Matrix::identity(d).scale(r));
    let chol = Cholesky::new(&reg).map_err(|_| Error::Numerical("within-class scatter is singular; use a positive ridge".into()))?;
    // M = L⁻¹ S_b L⁻ᵀ
    let mut tmp = Matrix::zeros(d, d);
    for j in 0..d {
        let col = chol.solve_lower(&sb.column(j));
        for i in 0..d {
            tmp[(i, j)] = col[i];
        }
    }
    let mut m = Matrix::zeros(d, d);
    for i in 0..d {
        let row = chol.solve_lower(tmp.row(i));
        for j in 0..d {
            m[(i, j)] = row[j];
        }
    }
    let eig = SymEigen::new(&m.symmetrize())?;
    let k = d_out.min(classes.len() - 1).min(d);
    let mut basis = Matrix::zeros(k, d);
    for r in 0..k {
        let v = chol.solve_upper(&eig.vectors.column(r));
        let scale = v.iter().fold(T::zero(), |a, b| a.max(b.abs()));
        let tol = scale * T::of(1e-9);
        let sign = v.iter().find(|c| c.abs() > tol).map_or(T::one(), |c| c.signum());
        for (j, c) in v.iter().enumerate() {
            basis[(r, j)] = *c * sign;
        }
    }
    let mut p = LdaProjection { basis, mean, eigenvalues: eig.values[..k].to_vec(), class_means: Vec::new() };
    p.class_means = means.iter().map(|c| p.project_unchecked(c)).collect();
    Ok(p)
}

impl<T: Real> LdaProjection<T> {
    pub fn from_parts(basis: Matrix<T>, mean: Vec<T>, eigenvalues: Vec<T>, class_means: Vec<Vec<T>>) -> Result<Self> {
        if basis.cols() != mean.len() || eigenvalues.len() != basis.rows() || class_means.iter().any(|c| c.len() != basis.rows()) {
            return Err(Error::Shape(format!("LDA basis {}x{} with mean of {}", basis.rows(), basis.cols(), mean.len())));
        }
        if !basis.is_finite() || mean.iter().chain(&eigenvalues).chain(class_means.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite LDA parameters".into()));
        }
        Ok(Self { basis, mean, eigenvalues, class_means })
    }

    pub fn d_in(&self) -> usize {
        self.basis.cols()
    }

    pub fn d_out(&self) -> usize {
        self.basis.rows()
    }

    pub fn basis(&self) -> &Matrix<T> {
        &self.basis
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn class_means(&self) -> &[Vec<T>] {
        &self.class_means
    }

    fn project_unchecked(&self, x: &[T]) -> Vec<T> {
        let z: Vec<T> = x.iter().zip(&self.mean).map(|(a, b)| *a - *b).collect();
        (0..self.d_out()).map(|r| dot(self.basis.row(r), &z)).collect()
    }
}

/// `basis · (x - mean)`
pub fn lda_project<T: Real>(p: &LdaProjection<T>, x: &[T]) -> Result<Vec<T>> {
    if x.len() != p.d_in() {
        return Err(Error::DimensionMismatch { expected: p.d_in(), got: x.len() });
    }
    Ok(p.project_unchecked(x))
}

/// `x = μ + F h + G w + ε` with `h, w ~ N(0, I)` and `ε ~ N(0, diag Σ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PldaModel<T: Real> {
    mu: Vec<T>,
    f: Matrix<T>,
    g: Matrix<T>,
    sigma: Vec<T>,
    scorer: Scorer<T>,
}

/// Closed-form two-covariance verification score:
/// `½xᵀQx + ½yᵀQy + xᵀPy + c` on centred vectors.
#[derive(Debug, Clone, PartialEq)]
struct Scorer<T> {
    q: Matrix<T>,
    p: Matrix<T>,
    constant: T,
}

impl<T: Real> PldaModel<T> {
    /// Validates shapes and that the implied covariances are usable.
    pub fn from_parts(mu: Vec<T>, f: Matrix<T>, g: Matrix<T>, sigma: Vec<T>) -> Result<Self> {
        let d = mu.len();
        if d == 0 || f.rows() != d || g.rows() != d || sigma.len() != d {
            return Err(Error::Shape(format!("PLDA: mu {d}, F {}x{}, G {}x{}, Sigma {}", f.rows(), f.cols(), g.rows(), g.cols(), sigma.len())));
        }
        if sigma.iter().any(|s| !(*s > T::zero()) || !s.is_finite()) || !f.is_finite() || !g.is_finite() || mu.iter().any(|m| !m.is_finite()) {
            return Err(Error::Shape("PLDA parameters must be finite with positive Sigma".into()));
        }
        let mut m = Self { mu, f, g, sigma, scorer: Scorer { q: Matrix::zeros(0, 0), p: Matrix::zeros(0, 0), constant: T::zero() } };
        m.scorer = m.build_scorer()?;
        Ok(m)
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[T] {
        &self.mu
    }

    pub fn f(&self) -> &Matrix<T> {
        &self.f
    }

    pub fn g(&self) -> &Matrix<T> {
        &self.g
    }

    pub fn sigma(&self) -> &[T] {
        &self.sigma
    }

    /// `Φ_b = F Fᵀ`
    pub fn between_cov(&self) -> Matrix<T> {
        self.f.matmul_t(&self.f).expect("F is d x r_b").symmetrize()
    }

    /// `Φ_w = G Gᵀ + Σ`
    pub fn within_cov(&self) -> Matrix<T> {
        let mut w = self.g.matmul_t(&self.g).expect("G is d x r_w").symmetrize();
        for (i, s) in self.sigma.iter().enumerate() {
            w[(i, i)] += *s;
        }
        w
    }

    fn build_scorer(&self) -> Result<Scorer<T>> {
        let b = self.between_cov();
        let w = self.within_cov();
        let t = b.add(&w);
        let ct = Cholesky::new(&t)?;
        let tinv = ct.inverse();
        // Conditional covariance of one vector given the other,
        // T - B T⁻¹ B written as W + B T⁻¹ W to avoid cancellation.
        let cond = w.add(&b.matmul(&tinv)?.matmul(&w)?).symmetrize();
        let cc = Cholesky::new(&cond)?;
        let cinv = cc.inverse();
        let q = tinv.sub(&cinv).symmetrize();
        let p = tinv.matmul(&b)?.matmul(&cinv)?.symmetrize();
        let half = T::of(0.5);
        let constant = half * ct.log_det() - half * cc.log_det();
        Ok(Scorer { q, p, constant })
    }

    /// Marginal log-likelihood of labelled data.
    pub fn log_likelihood(&self, xs: &[Vec<T>], labels: &[usize]) -> Result<f64> {
        let d = self.dim();
        let classes = by_label(labels);
        let phi_w = self.within_cov();
        let phi_b = self.between_cov();
        let cw = Cholesky::new(&phi_w)?;
        let mut cache: BTreeMap<usize, Cholesky<T>> = BTreeMap::new();
        let ln2pi = (2.0 * std::f64::consts::PI).ln();
        let mut total = 0.0;
        for idx in &classes {
            let n = idx.len();
            if !cache.contains_key(&n) {
                cache.insert(n, Cholesky::new(&phi_w.add(&phi_b.scale(T::of(n as f64))))?);
            }
            let cn = &cache[&n];
            let z: Vec<Vec<T>> = idx.iter().map(|&i| xs[i].iter().zip(&self.mu).map(|(a, b)| *a - *b).collect()).collect();
            let zbar = mean_of(&z, 0..n, d);
            let mut quad = T::of(n as f64) * cn.quad_inv(&zbar);
            for zi in &z {
                let r: Vec<T> = zi.iter().zip(&zbar).map(|(a, b)| *a - *b).collect();
                quad += cw.quad_inv(&r);
            }
            let ll = -0.5 * ((n * d) as f64 * ln2pi + cn.log_det().as_f64() + (n - 1) as f64 * cw.log_det().as_f64() + quad.as_f64());
            total += ll;
        }
        Ok(total)
    }
}

/// Log-likelihood ratio that `x1` and `x2` share the identity variable.
/// Swapping the arguments gives bit-identical results.
pub fn plda_score<T: Real>(m: &PldaModel<T>, x1: &[T], x2: &[T]) -> Result<T> {
    let d = m.dim();
    for x in [x1, x2] {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    let a: Vec<T> = x1.iter().zip(&m.mu).map(|(x, u)| *x - *u).collect();
    let b: Vec<T> = x2.iter().zip(&m.mu).map(|(x, u)| *x - *u).collect();
    let s = &m.scorer;
    let half = T::of(0.5);
    let quad = |v: &[T]| -> T {
        let mut acc = T::zero();
        for i in 0..d {
            acc += v[i] * dot(s.q.row(i), v);
        }
        acc
    };
    // Each cross term pairs (i, j) with (j, i) so the sum is symmetric.
    let mut cross = T::zero();
    for i in 0..d {
        cross += s.p[(i, i)] * (a[i] * b[i]);
        for j in (i + 1)..d {
            cross += s.p[(i, j)] * (a[i] * b[j] + a[j] * b[i]);
        }
    }
    Ok(s.constant + (half * (quad(&a) + quad(&b)) + cross))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PldaTrace {
    pub loglik: Vec<f64>,
}

/// Ranks used when none are requested: `r_b = 1`, `r_w = min(10, d - 1)`.
pub fn default_ranks(d: usize) -> (usize, usize) {
    (1, 10.min(d.saturating_sub(1)))
}

/// EM for the two-latent factor model; `μ` is the global mean.
pub fn plda_fit<T: Real>(xs: &[Vec<T>], labels: &[usize], r_b: usize, r_w: usize, iters: usize) -> Result<(PldaModel<T>, PldaTrace)> {
    let d = check_dims(xs)?;
    if labels.len() != xs.len() {
        return Err(Error::DimensionMismatch { expected: xs.len(), got: labels.len() });
    }
    let classes = by_label(labels);
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    if r_b == 0 || r_b > d || r_w > d {
        return Err(Error::Config(format!("PLDA ranks r_b={r_b}, r_w={r_w} invalid for d={d}")));
    }
    let n_total = xs.len();
    let (mu, sw, sb, _) = scatters(xs, &classes, d);
    let z: Vec<Vec<T>> = xs.iter().map(|x| x.iter().zip(&mu).map(|(a, b)| *a - *b).collect()).collect();
    let total_var: Vec<T> = (0..d).map(|i| sw[(i, i)] + sb[(i, i)]).collect();
    let floor: Vec<T> = total_var.iter().map(|v| (*v * T::of(1e-6)).max(T::of(1e-12))).collect();

    // Initialise from the scatter eigenvectors.
    let eb = SymEigen::new(&sb)?;
    let ew = SymEigen::new(&sw)?;
    let f = Matrix::from_fn(d, r_b, |i, k| eb.vectors[(i, k)] * eb.values[k].max(T::zero()).sqrt());
    let half = T::of(0.5);
    let g = Matrix::from_fn(d, r_w, |i, k| ew.vectors[(i, k)] * (half * ew.values[k].max(T::zero())).sqrt());
    let sigma: Vec<T> = (0..d).map(|i| (half * sw[(i, i)]).max(floor[i])).collect();
    let mut model = PldaModel::from_parts(mu.clone(), f, g, sigma)?;
    let mut trace = PldaTrace { loglik: Vec::new() };
    let r = r_b + r_w;

    for _ in 0..iters {
        let ll = model.log_likelihood(xs, labels)?;
        if !ll.is_finite() {
            return Err(Error::Numerical(format!("PLDA log-likelihood became {ll}")));
        }
        trace.loglik.push(ll);

        let isig: Vec<T> = model.sigma.iter().map(|s| T::one() / *s).collect();
        let weighted = |a: &Matrix<T>, b: &Matrix<T>| Matrix::from_fn(a.cols(), b.cols(), |i, j| (0..d).map(|k| a[(k, i)] * isig[k] * b[(k, j)]).sum());
        let ftf = weighted(&model.f, &model.f);
        let bm = weighted(&model.f, &model.g);
        let c = weighted(&model.g, &model.g).add(&Matrix::identity(r_w));
        let cinv = Cholesky::new(&c)?.inverse();
        let bcinv = bm.matmul(&cinv)?;
        let bcb = bcinv.matmul_t(&bm)?;

        let mut r_zy = Matrix::zeros(d, r);
        let mut r_yy = Matrix::zeros(r, r);
        let mut s_cache: BTreeMap<usize, Matrix<T>> = BTreeMap::new();
        for idx in &classes {
            let n = idx.len();
            if !s_cache.contains_key(&n) {
                let nt = T::of(n as f64);
                let s = Matrix::identity(r_b).add(&ftf.scale(nt)).sub(&bcb.scale(nt)).symmetrize();
                s_cache.insert(n, Cholesky::new(&s)?.inverse());
            }
            let sinv = &s_cache[&n];
            let rhs_w: Vec<Vec<T>> = idx
                .iter()
                .map(|&i| (0..r_w).map(|k| (0..d).map(|q| model.g[(q, k)] * isig[q] * z[i][q]).sum()).collect())
                .collect();
            let zsum = idx.iter().fold(vec![T::zero(); d], |mut acc, &i| {
                acc.iter_mut().zip(&z[i]).for_each(|(a, b)| *a += *b);
                acc
            });
            let mut rhs_h: Vec<T> = (0..r_b).map(|k| (0..d).map(|q| model.f[(q, k)] * isig[q] * zsum[q]).sum()).collect();
            let wsum = rhs_w.iter().fold(vec![T::zero(); r_w], |mut acc, v| {
                acc.iter_mut().zip(v).for_each(|(a, b)| *a += *b);
                acc
            });
            let corr = bcinv.matvec(&wsum)?;
            rhs_h.iter_mut().zip(&corr).for_each(|(a, b)| *a -= *b);
            let eh = sinv.matvec(&rhs_h)?;
            // Posterior covariance blocks shared by every member of the class.
            let cov_hw = sinv.matmul(&bcinv)?.scale(-T::one());
            let cov_ww = cinv.add(&bcinv.transpose().matmul(sinv)?.matmul(&bcinv)?).symmetrize();
            let bt_eh: Vec<T> = (0..r_w).map(|k| (0..r_b).map(|q| bm[(q, k)] * eh[q]).sum()).collect();
            for (j, &i) in idx.iter().enumerate() {
                let resid: Vec<T> = rhs_w[j].iter().zip(&bt_eh).map(|(a, b)| *a - *b).collect();
                let ew = cinv.matvec(&resid)?;
                let y: Vec<T> = eh.iter().chain(&ew).copied().collect();
                for a in 0..d {
                    for b in 0..r {
                        r_zy[(a, b)] += z[i][a] * y[b];
                    }
                }
                for a in 0..r {
                    for b in 0..r {
                        let cov = match (a < r_b, b < r_b) {
                            (true, true) => sinv[(a, b)],
                            (true, false) => cov_hw[(a, b - r_b)],
                            (false, true) => cov_hw[(b, a - r_b)],
                            (false, false) => cov_ww[(a - r_b, b - r_b)],
                        };
                        r_yy[(a, b)] += cov + y[a] * y[b];
                    }
                }
            }
        }
        // A = R_zy R_yy⁻¹, Σ = diag(Σ zzᵀ - A R_zyᵀ) / N
        let cy = Cholesky::new(&r_yy.symmetrize())?;
        let mut a_mat = Matrix::zeros(d, r);
        for row in 0..d {
            let sol = cy.solve(r_zy.row(row));
            a_mat.row_mut(row).copy_from_slice(&sol);
        }
        let nt = T::of(n_total as f64);
        let sigma: Vec<T> = (0..d)
            .map(|q| {
                let zz: T = z.iter().map(|v| v[q] * v[q]).sum();
                let fit = dot(a_mat.row(q), r_zy.row(q));
                ((zz - fit) / nt).max(floor[q])
            })
            .collect();
        let f = Matrix::from_fn(d, r_b, |i, k| a_mat[(i, k)]);
        let g = Matrix::from_fn(d, r_w, |i, k| a_mat[(i, r_b + k)]);
        model = PldaModel::from_parts(mu.clone(), f, g, sigma)?;
    }
    let ll = model.log_likelihood(xs, labels)?;
    if !ll.is_finite() {
        return Err(Error::Numerical(format!("PLDA log-likelihood became {ll}")));
    }
    trace.loglik.push(ll);
    Ok((model, trace))
}

/// Mean training x-vector of each class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroids {
    pub xvec_pd: Vec<f64>,
    pub xvec_hc: Vec<f64>,
    pub n_pd: usize,
    pub n_hc: usize,
}

impl ClassCentroids {
    pub fn fit(xs: &[XVector], groups: &[Group]) -> Result<Self> {
        if xs.len() != groups.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: groups.len() });
        }
        let vals: Vec<Vec<f64>> = xs.iter().map(|x| x.values.clone()).collect();
        let d = check_dims(&vals)?;
        let pick = |g: Group| groups.iter().enumerate().filter(move |(_, h)| **h == g).map(|(i, _)| i);
        let (n_pd, n_hc) = (pick(Group::Pd).count(), pick(Group::Hc).count());
        if n_pd == 0 || n_hc == 0 {
            return Err(Error::SingleClass);
        }
        Ok(Self { xvec_pd: mean_of(&vals, pick(Group::Pd), d), xvec_hc: mean_of(&vals, pick(Group::Hc), d), n_pd, n_hc })
    }

    /// The same centroids with the labels exchanged.
    pub fn swapped(&self) -> Self {
        Self { xvec_pd: self.xvec_hc.clone(), xvec_hc: self.xvec_pd.clone(), n_pd: self.n_hc, n_hc: self.n_pd }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    Cos,
    LdaCos,
    Plda,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cos" => Ok(Self::Cos),
            "lda-cos" => Ok(Self::LdaCos),
            "plda" => Ok(Self::Plda),
            _ => Err(Error::Config(format!("unknown back-end '{s}' (cos, lda-cos, plda)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub lda_dim: usize,
    pub lda_mode: LdaMode,
    /// `None` selects [`default_ridge`].
    pub ridge: Option<f64>,
    /// LDA dimension ahead of PLDA.
    pub plda_lda_dim: usize,
    pub plda_rb: Option<usize>,
    pub plda_rw: Option<usize>,
    pub plda_iters: usize,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self { lda_dim: 2, lda_mode: LdaMode::Speaker, ridge: None, plda_lda_dim: 10, plda_rb: None, plda_rw: None, plda_iters: 10 }
    }
}

/// A trained back-end.
#[derive(Debug, Clone, PartialEq)]
pub enum Backend {
    Cos,
    LdaCos(LdaProjection<f64>),
    Plda(LdaProjection<f64>, PldaModel<f64>),
}

impl Backend {
    pub fn kind(&self) -> BackendKind {
        match self {
            Backend::Cos => BackendKind::Cos,
            Backend::LdaCos(_) => BackendKind::LdaCos,
            Backend::Plda(..) => BackendKind::Plda,
        }
    }

    /// Trains the chosen back-end on labelled x-vectors. Speaker-mode LDA
    /// uses `subject_id` as the class.
    pub fn fit(kind: BackendKind, cfg: &BackendConfig, xs: &[XVector], groups: &[Group]) -> Result<Self> {
        if xs.len() != groups.len() {
            return Err(Error::DimensionMismatch { expected: xs.len(), got: groups.len() });
        }
        let vals: Vec<Vec<f64>> = xs.iter().map(|x| x.values.clone()).collect();
        let group_labels: Vec<usize> = groups.iter().map(|g| usize::from(g.is_pd())).collect();
        let lda_labels = |mode: LdaMode| -> Vec<usize> {
            match mode {
                LdaMode::Class => group_labels.clone(),
                LdaMode::Speaker => {
                    let mut ids: BTreeMap<&str, usize> = BTreeMap::new();
                    xs.iter()
                        .map(|x| {
                            let next = ids.len();
                            *ids.entry(x.subject_id.as_str()).or_insert(next)
                        })
                        .collect()
                }
            }
        };
        match kind {
            BackendKind::Cos => Ok(Backend::Cos),
            BackendKind::LdaCos => Ok(Backend::LdaCos(lda_fit(&vals, &lda_labels(cfg.lda_mode), cfg.lda_dim, cfg.ridge)?)),
            BackendKind::Plda => {
                let lda = lda_fit(&vals, &lda_labels(cfg.lda_mode), cfg.plda_lda_dim, cfg.ridge)?;
                let proj: Vec<Vec<f64>> = vals.iter().map(|v| lda_project(&lda, v)).collect::<Result<_>>()?;
                let (rb, rw) = default_ranks(lda.d_out());
                let (plda, _) = plda_fit(&proj, &group_labels, cfg.plda_rb.unwrap_or(rb).min(lda.d_out()), cfg.plda_rw.unwrap_or(rw).min(lda.d_out()), cfg.plda_iters)?;
                Ok(Backend::Plda(lda, plda))
            }
        }
    }

    /// Similarity between an x-vector and a centroid.
    pub fn similarity(&self, x: &[f64], c: &[f64]) -> Result<f64> {
        match self {
            Backend::Cos => cosine_score(x, c),
            Backend::LdaCos(p) => cosine_score(&lda_project(p, x)?, &lda_project(p, c)?),
            Backend::Plda(p, m) => plda_score(m, &lda_project(p, x)?, &lda_project(p, c)?),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub subject_id: String,
    pub per_xvector: Vec<f64>,
    pub score: f64,
}

/// Per x-vector `sigmoid(slope · (sim_pd - sim_hc))`, averaged.
pub fn classify_subject(xvecs: &[XVector], backend: &Backend, centroids: &ClassCentroids, sigmoid_slope: f64) -> Result<TrialScore> {
    let first = xvecs.first().ok_or(Error::Empty("x-vector list"))?;
    let mut centered = Vec::with_capacity(xvecs.len());
    let mut per = Vec::with_capacity(xvecs.len());
    for x in xvecs {
        let z = sigmoid_slope * (backend.similarity(&x.values, &centroids.xvec_pd)? - backend.similarity(&x.values, &centroids.xvec_hc)?);
        if !z.is_finite() {
            return Err(Error::Numerical(format!("non-finite similarity for {}", x.subject_id)));
        }
        centered.push(centered_sigmoid(z));
        per.push(sigmoid(z));
    }
    Ok(TrialScore { subject_id: first.subject_id.clone(), per_xvector: per, score: mean_centered_score(&centered) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;
    use rand_distr::{Distribution, StandardNormal};

    fn gauss(rng: &mut seed::Rng) -> f64 {
        StandardNormal.sample(rng)
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_score::<f64>(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((cosine_score::<f64>(&[1.0, 2.0], &[-1.0, -2.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(cosine_score(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_score(&[0.0, 0.0], &[0.0, 1.0]), Err(Error::ZeroVector)));
        let a = cosine_score::<f64>(&[0.3, -1.2, 2.0], &[1.0, 0.5, 0.1]).unwrap();
        let b = cosine_score(&[0.6, -2.4, 4.0], &[7.0, 3.5, 0.7]).unwrap();
        assert!((a - b).abs() < 1e-15);
    }

    fn two_classes(n: usize, sep: f64, d: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for i in 0..n {
            let y = i % 2;
            let mut v: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
            v[0] += if y == 1 { sep } else { 0.0 };
            xs.push(v);
            ys.push(y);
        }
        (xs, ys)
    }

    #[test]
    fn lda_orders_separable_classes() {
        let (xs, ys) = two_classes(200, 12.0, 4, 1);
        let p = lda_fit(&xs, &ys, 2, None).unwrap();
        assert_eq!(p.d_out(), 1);
        let proj: Vec<f64> = xs.iter().map(|x| lda_project(&p, x).unwrap()[0]).collect();
        let max0 = proj.iter().zip(&ys).filter(|(_, y)| **y == 0).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        let min1 = proj.iter().zip(&ys).filter(|(_, y)| **y == 1).map(|(v, _)| *v).fold(f64::MAX, f64::min);
        let min0 = proj.iter().zip(&ys).filter(|(_, y)| **y == 0).map(|(v, _)| *v).fold(f64::MAX, f64::min);
        let max1 = proj.iter().zip(&ys).filter(|(_, y)| **y == 1).map(|(v, _)| *v).fold(f64::MIN, f64::max);
        assert!(max0 < min1 || max1 < min0);
        let m = lda_project(&p, p.mean()).unwrap();
        assert!(m.iter().all(|v| v.abs() < 1e-15));
        let class1: Vec<Vec<f64>> = xs.iter().zip(&ys).filter(|(_, y)| **y == 1).map(|(x, _)| x.clone()).collect();
        let mean1 = mean_of(&class1, 0..class1.len(), 4);
        assert!((lda_project(&p, &mean1).unwrap()[0] - p.class_means()[1][0]).abs() < 1e-12);
    }

    #[test]
    fn lda_basis_is_within_orthonormal() {
        let mut rng = seed::rng(3);
        let xs: Vec<Vec<f64>> = (0..300).map(|i| (0..5).map(|k| gauss(&mut rng) + ((i % 6) * k) as f64 * 0.3).collect()).collect();
        let ys: Vec<usize> = (0..300).map(|i| i % 6).collect();
        let p = lda_fit(&xs, &ys, 3, Some(0.0)).unwrap();
        let classes = by_label(&ys);
        let (_, sw, _, _) = scatters(&xs, &classes, 5);
        let m = p.basis().matmul(&sw).unwrap().matmul_t(p.basis()).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m[(i, j)] - want).abs() < 1e-9);
            }
        }
        assert!(p.eigenvalues().windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn singular_scatter_needs_ridge() {
        // Third coordinate is constant: within-class scatter is singular.
        let xs: Vec<Vec<f64>> = (0..20).map(|i| vec![(i % 2) as f64 * 5.0 + (i as f64 * 0.37).sin(), (i as f64 * 0.91).cos(), 1.0]).collect();
        let ys: Vec<usize> = (0..20).map(|i| i % 2).collect();
        assert!(matches!(lda_fit(&xs, &ys, 1, Some(0.0)), Err(Error::Numerical(_))));
        assert!(lda_fit(&xs, &ys, 1, None).is_ok());
    }

    #[test]
    fn lda_is_rotation_equivariant() {
        let mut rng = seed::rng(8);
        let xs: Vec<Vec<f64>> = (0..400).map(|i| (0..3).map(|k| gauss(&mut rng) * (1.0 + k as f64) + ((i % 4) * (k + 1)) as f64).collect()).collect();
        let ys: Vec<usize> = (0..400).map(|i| i % 4).collect();
        let (c, s) = (0.6f64, 0.8f64);
        let rot = |v: &Vec<f64>| vec![c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]];
        let xr: Vec<Vec<f64>> = xs.iter().map(rot).collect();
        let p = lda_fit(&xs, &ys, 2, Some(0.0)).unwrap();
        let q = lda_fit(&xr, &ys, 2, Some(0.0)).unwrap();
        for (x, y) in xs.iter().zip(&xr).take(50) {
            let a = lda_project(&p, x).unwrap();
            let b = lda_project(&q, y).unwrap();
            for k in 0..2 {
                assert!((a[k].abs() - b[k].abs()).abs() < 1e-8, "{a:?} {b:?}");
            }
        }
    }

    #[test]
    fn full_rank_lda_cosine_equals_whitened_cosine() {
        let mut rng = seed::rng(12);
        let d = 3;
        let xs: Vec<Vec<f64>> = (0..600).map(|i| (0..d).map(|k| gauss(&mut rng) * (1.0 + k as f64) + ((i % 8) as f64 * (k as f64 - 1.0))).collect()).collect();
        let ys: Vec<usize> = (0..600).map(|i| i % 8).collect();
        let p = lda_fit(&xs, &ys, d, Some(0.0)).unwrap();
        assert_eq!(p.d_out(), d);
        let (mean, sw, _, _) = scatters(&xs, &by_label(&ys), d);
        let e = SymEigen::new(&sw).unwrap();
        let whiten = |x: &[f64]| -> Vec<f64> {
            let z: Vec<f64> = x.iter().zip(&mean).map(|(a, b)| a - b).collect();
            let coords: Vec<f64> = (0..d).map(|k| dot(&e.vectors.column(k), &z) / e.values[k].sqrt()).collect();
            (0..d).map(|i| (0..d).map(|k| e.vectors[(i, k)] * coords[k]).sum()).collect()
        };
        for pair in xs.chunks(2).take(100) {
            let a = cosine_score(&lda_project(&p, &pair[0]).unwrap(), &lda_project(&p, &pair[1]).unwrap()).unwrap();
            let b = cosine_score(&whiten(&pair[0]), &whiten(&pair[1])).unwrap();
            assert!((a - b).abs() < 1e-9, "{a} {b}");
        }
    }

    fn xv(values: Vec<f64>, subject: &str) -> XVector {
        XVector { values, segment: None, subject_id: subject.into() }
    }

    #[test]
    fn classify_examples() {
        let cent = ClassCentroids { xvec_pd: vec![1.0, 0.0], xvec_hc: vec![0.0, 1.0], n_pd: 1, n_hc: 1 };
        let eq = classify_subject(&[xv(vec![1.0, 1.0], "s")], &Backend::Cos, &cent, 1.0).unwrap();
        assert_eq!(eq.score, 0.5);
        let at_pd = classify_subject(&[xv(vec![1.0, 0.0], "s")], &Backend::Cos, &cent, 1.0).unwrap();
        assert!(at_pd.score > 0.5);
        let list = vec![xv(vec![0.3, 0.9], "s"), xv(vec![1.2, -0.1], "s"), xv(vec![0.7, 0.8], "s")];
        let a = classify_subject(&list, &Backend::Cos, &cent, 3.0).unwrap();
        let b = classify_subject(&list, &Backend::Cos, &cent.swapped(), 3.0).unwrap();
        assert_eq!(b.score, 1.0 - a.score);
        let mut rev = list.clone();
        rev.reverse();
        let doubled: Vec<XVector> = list.iter().chain(&list).cloned().collect();
        assert!((classify_subject(&rev, &Backend::Cos, &cent, 3.0).unwrap().score - a.score).abs() < 1e-15);
        assert!((classify_subject(&doubled, &Backend::Cos, &cent, 3.0).unwrap().score - a.score).abs() < 1e-15);
        assert!(classify_subject(&[], &Backend::Cos, &cent, 1.0).is_err());
    }

    /// Draws `classes x per_class` vectors from a PLDA model.
    fn sample_plda(m: &PldaModel<f64>, classes: usize, per_class: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let d = m.dim();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for c in 0..classes {
            let h: Vec<f64> = (0..m.f().cols()).map(|_| gauss(&mut rng)).collect();
            let fh = m.f().matvec(&h).unwrap();
            for _ in 0..per_class {
                let w: Vec<f64> = (0..m.g().cols()).map(|_| gauss(&mut rng)).collect();
                let gw = m.g().matvec(&w).unwrap();
                let x: Vec<f64> = (0..d).map(|i| m.mu()[i] + fh[i] + gw[i] + m.sigma()[i].sqrt() * gauss(&mut rng)).collect();
                xs.push(x);
                ys.push(c);
            }
        }
        (xs, ys)
    }

    fn random_model(d: usize, rb: usize, rw: usize, fscale: f64, gscale: f64, sig: f64, seed: u64) -> PldaModel<f64> {
        let mut rng = seed::rng(seed);
        let f = Matrix::from_fn(d, rb, |_, _| fscale * gauss(&mut rng));
        let g = Matrix::from_fn(d, rw, |_, _| gscale * gauss(&mut rng));
        let mu: Vec<f64> = (0..d).map(|_| gauss(&mut rng)).collect();
        PldaModel::from_parts(mu, f, g, vec![sig; d]).unwrap()
    }

    #[test]
    fn plda_recovers_covariances() {
        let truth = random_model(10, 2, 3, 1.0, 0.7, 0.2, 1);
        let (xs, ys) = sample_plda(&truth, 500, 10, 2);
        let (m, trace) = plda_fit(&xs, &ys, 2, 3, 25).unwrap();
        for w in trace.loglik.windows(2) {
            assert!(w[1] >= w[0] - 1e-6 * w[0].abs(), "{:?}", trace.loglik);
        }
        let rel = |a: &Matrix<f64>, b: &Matrix<f64>| a.sub(b).frobenius() / b.frobenius();
        assert!(rel(&m.between_cov(), &truth.between_cov()) < 0.2);
        assert!(rel(&m.within_cov(), &truth.within_cov()) < 0.2);
    }

    #[test]
    fn plda_without_within_noise() {
        let truth = random_model(6, 2, 1, 1.0, 0.0, 1e-9, 3);
        let (xs, ys) = sample_plda(&truth, 200, 5, 4);
        let (m, _) = plda_fit(&xs, &ys, 2, 1, 15).unwrap();
        assert!(m.within_cov().trace() <= 0.01 * m.between_cov().trace());
    }

    #[test]
    fn plda_score_properties() {
        let m = random_model(5, 2, 2, 1.5, 0.5, 0.1, 5);
        let (xs, ys) = sample_plda(&m, 40, 2, 6);
        for i in 0..xs.len() {
            let j = (i * 7 + 3) % xs.len();
            assert_eq!(plda_score(&m, &xs[i], &xs[j]).unwrap(), plda_score(&m, &xs[j], &xs[i]).unwrap());
        }
        let same = plda_score(&m, &xs[0], &xs[1]).unwrap();
        assert!(ys[0] == ys[1] && same > 0.0);
        let flat = PldaModel::from_parts(m.mu().to_vec(), Matrix::zeros(5, 2), m.g().clone(), m.sigma().to_vec()).unwrap();
        assert!(plda_score(&flat, &xs[0], &xs[5]).unwrap().abs() < 1e-12);
        assert!(plda_score(&m, &xs[0], &xs[0][..3]).is_err());
    }

    #[test]
    fn backends_train_on_xvectors() {
        let mut rng = seed::rng(21);
        let mut xs = Vec::new();
        let mut groups = Vec::new();
        for s in 0..12 {
            let g = if s % 2 == 0 { Group::Pd } else { Group::Hc };
            let centre: Vec<f64> = (0..16).map(|k| if g == Group::Pd && k < 3 { 2.0 } else { 0.0 } + 0.5 * ((s * k) as f64).sin()).collect();
            for _ in 0..4 {
                xs.push(xv(centre.iter().map(|c| c + 0.3 * gauss(&mut rng)).collect(), &format!("s{s}")));
                groups.push(g);
            }
        }
        let cent = ClassCentroids::fit(&xs, &groups).unwrap();
        for kind in [BackendKind::Cos, BackendKind::LdaCos, BackendKind::Plda] {
            let b = Backend::fit(kind, &BackendConfig::default(), &xs, &groups).unwrap();
            assert_eq!(b.kind(), kind);
            let pd = classify_subject(&xs[..4], &b, &cent, 1.0).unwrap();
            let hc = classify_subject(&xs[4..8], &b, &cent, 1.0).unwrap();
            assert!(pd.score > hc.score, "{kind:?}: {} vs {}", pd.score, hc.score);
        }
    }
}
