//! Tensor container for trained artifacts and feature matrices.
//!
//! Layout (little-endian):
//!
//! ```text
//! "PVTC" | u32 header length | UTF-8 JSON header
//! per tensor: u32 name length | name | u64 element count | f32 values
//! ```
//!
//! The header names the artifact kind, schema version, config fingerprint
//! and seed, kind-specific metadata, and the shape of every tensor in order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::backend::{ClassCentroids, LdaProjection, PldaModel};
use crate::error::{Error, Result};
use crate::frontend::{FeatureMatrix, FeatureMeta};
use crate::gmm::GmmModel;
use crate::linalg::Matrix;
use crate::manifest::Group;
use crate::tdnn::{Affine, TdnnConfig, TdnnWeights};

pub const MAGIC: &[u8; 4] = b"PVTC";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: impl IntoIterator<Item = f32>) -> Self {
        Self { name: name.into(), shape, data: data.into_iter().collect() }
    }

    fn from_f64(name: impl Into<String>, shape: Vec<usize>, data: &[f64]) -> Self {
        Self::new(name, shape, data.iter().map(|v| *v as f32))
    }

    fn matrix(name: impl Into<String>, m: &Matrix<f64>) -> Self {
        Self::from_f64(name, vec![m.rows(), m.cols()], m.as_slice())
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|v| f64::from(*v)).collect()
    }

    fn to_matrix(&self) -> Result<Matrix<f64>> {
        match self.shape[..] {
            [r, c] => Matrix::from_vec(r, c, self.to_f64()),
            _ => Err(Error::Shape(format!("tensor {} has shape {:?}, expected a matrix", self.name, self.shape))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorInfo {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    version: u32,
    fingerprint: String,
    seed: u64,
    meta: Value,
    tensors: Vec<TensorInfo>,
}

/// Reproducibility stamp written into every container.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Stamp {
    pub fingerprint: String,
    pub seed: u64,
}

/// A decoded container before it is turned into an artifact.
#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub kind: String,
    pub stamp: Stamp,
    pub meta: Value,
    pub tensors: Vec<Tensor>,
}

impl Container {
    pub fn encode(&self) -> Result<Vec<u8>> {
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Shape(format!("tensor {} has {} values for shape {:?}", t.name, t.data.len(), t.shape)));
            }
        }
        let header = Header {
            kind: self.kind.clone(),
            version: SCHEMA_VERSION,
            fingerprint: self.stamp.fingerprint.clone(),
            seed: self.stamp.seed,
            meta: self.meta.clone(),
            tensors: self.tensors.iter().map(|t| TensorInfo { name: t.name.clone(), shape: t.shape.clone() }).collect(),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(8 + header.len() + self.tensors.iter().map(|t| 12 + t.name.len() + 4 * t.data.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len_u32(header.len())?.to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            out.extend_from_slice(&len_u32(t.name.len())?.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.extend_from_slice(&(t.data.len() as u64).to_le_bytes());
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a tensor container".into()));
        }
        let n = r.u32()? as usize;
        let header: Header = serde_json::from_slice(r.take(n)?).map_err(|e| Error::Format(format!("bad header: {e}")))?;
        if header.version != SCHEMA_VERSION {
            return Err(Error::Version { found: header.version, expected: SCHEMA_VERSION });
        }
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in &header.tensors {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Format("tensor name is not UTF-8".into()))?;
            if name != info.name {
                return Err(Error::Format(format!("tensor '{name}' where header lists '{}'", info.name)));
            }
            let count = usize::try_from(r.u64()?).map_err(|_| Error::Format("tensor too large".into()))?;
            if count != info.shape.iter().product::<usize>() {
                return Err(Error::Shape(format!("tensor {name}: {count} values for header shape {:?}", info.shape)));
            }
            let raw = r.take(count.checked_mul(4).ok_or_else(|| Error::Format("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
            tensors.push(Tensor { name: name.to_string(), shape: info.shape.clone(), data });
        }
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        Ok(Self { kind: header.kind, stamp: Stamp { fingerprint: header.fingerprint, seed: header.seed }, meta: header.meta, tensors })
    }

    fn take(&mut self, name: &str) -> Result<Tensor> {
        let i = self.tensors.iter().position(|t| t.name == name).ok_or_else(|| Error::Format(format!("missing tensor '{name}'")))?;
        Ok(self.tensors.remove(i))
    }

    fn meta<M: for<'de> Deserialize<'de>>(&self) -> Result<M> {
        serde_json::from_value(self.meta.clone()).map_err(|e| Error::Format(format!("bad {} metadata: {e}", self.kind)))
    }
}

fn len_u32(n: usize) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Format("field longer than 4 GiB".into()))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len()).ok_or_else(|| Error::Format("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut a = [0u8; 8];
        a.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(a))
    }
}

/// Something that can live in a container.
pub trait Artifact: Sized {
    const KIND: &'static str;
    fn to_parts(&self) -> (Value, Vec<Tensor>);
    fn from_container(c: Container) -> Result<Self>;
}

pub fn to_bytes<A: Artifact>(a: &A, stamp: &Stamp) -> Result<Vec<u8>> {
    let (meta, tensors) = a.to_parts();
    Container { kind: A::KIND.to_string(), stamp: stamp.clone(), meta, tensors }.encode()
}

pub fn from_bytes<A: Artifact>(bytes: &[u8]) -> Result<(A, Stamp)> {
    let c = Container::decode(bytes)?;
    if c.kind != A::KIND {
        return Err(Error::Format(format!("container holds '{}', expected '{}'", c.kind, A::KIND)));
    }
    let stamp = c.stamp.clone();
    Ok((A::from_container(c)?, stamp))
}

pub fn persist_save<A: Artifact>(a: &A, path: impl AsRef<Path>, stamp: &Stamp) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(a, stamp)?).map_err(|e| Error::io(path, e))
}

pub fn persist_load<A: Artifact>(path: impl AsRef<Path>) -> Result<(A, Stamp)> {
    let path = path.as_ref();
    from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Serialize, Deserialize)]
struct GmmMeta {
    n_components: usize,
    feature_dim: usize,
    label: Option<Group>,
}

impl Artifact for GmmModel<f64> {
    const KIND: &'static str = "gmm";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let meta = GmmMeta { n_components: self.n_components(), feature_dim: self.feature_dim(), label: self.label };
        let (m, d) = (self.n_components(), self.feature_dim());
        let tensors = vec![
            Tensor::from_f64("weights", vec![m], self.weights()),
            Tensor::matrix("means", self.means()),
            Tensor::matrix("variances", self.variances()),
            Tensor::from_f64("floor", vec![d], self.floor()),
        ];
        (serde_json::to_value(meta).expect("plain struct"), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let meta: GmmMeta = c.meta()?;
        let weights = c.take("weights")?.to_f64();
        let means = c.take("means")?.to_matrix()?;
        let variances = c.take("variances")?.to_matrix()?;
        let floor = c.take("floor")?.to_f64();
        if weights.len() != meta.n_components || means.cols() != meta.feature_dim {
            return Err(Error::Shape(format!("GMM header says {}x{}, tensors are {}x{}", meta.n_components, meta.feature_dim, weights.len(), means.cols())));
        }
        // Renormalise: weights summing to 1 in f64 need not in f32.
        let total: f64 = weights.iter().sum();
        GmmModel::from_parts(weights.iter().map(|w| w / total).collect(), means, variances, floor, meta.label)
    }
}

impl Artifact for TdnnWeights<f32> {
    const KIND: &'static str = "tdnn";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let mut tensors = Vec::new();
        for ((name, _, _), l) in self.config().layer_shapes().iter().zip(self.layers()) {
            tensors.push(Tensor::new(format!("{name}.weight"), vec![l.weight.rows(), l.weight.cols()], l.weight.as_slice().iter().copied()));
            tensors.push(Tensor::new(format!("{name}.bias"), vec![l.bias.len()], l.bias.iter().copied()));
        }
        (serde_json::to_value(self.config()).expect("plain struct"), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let cfg: TdnnConfig = c.meta()?;
        cfg.validate()?;
        let mut layers = Vec::new();
        for (name, out, inp) in cfg.layer_shapes() {
            let w = c.take(&format!("{name}.weight"))?;
            let b = c.take(&format!("{name}.bias"))?;
            if w.shape != [out, inp] || b.shape != [out] {
                return Err(Error::Shape(format!("layer {name}: weight {:?}, bias {:?}, expected [{out}, {inp}] and [{out}]", w.shape, b.shape)));
            }
            layers.push(Affine { weight: Matrix::from_vec(out, inp, w.data)?, bias: b.data });
        }
        if let Some(t) = c.tensors.first() {
            return Err(Error::Format(format!("unexpected tensor '{}'", t.name)));
        }
        TdnnWeights::from_layers(cfg, layers)
    }
}

impl Artifact for LdaProjection<f64> {
    const KIND: &'static str = "lda";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let (k, d) = (self.d_out(), self.d_in());
        let n = self.class_means().len();
        let means: Vec<f64> = self.class_means().iter().flatten().copied().collect();
        let tensors = vec![
            Tensor::matrix("basis", self.basis()),
            Tensor::from_f64("mean", vec![d], self.mean()),
            Tensor::from_f64("eigenvalues", vec![k], self.eigenvalues()),
            Tensor::from_f64("class_means", vec![n, k], &means),
        ];
        (json!({ "d_in": d, "d_out": k, "n_classes": n }), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let basis = c.take("basis")?.to_matrix()?;
        let mean = c.take("mean")?.to_f64();
        let eig = c.take("eigenvalues")?.to_f64();
        let cm = c.take("class_means")?.to_matrix()?;
        let d_out = c.meta.get("d_out").and_then(Value::as_u64);
        if d_out != Some(basis.rows() as u64) {
            return Err(Error::Shape(format!("LDA header d_out {d_out:?}, basis has {} rows", basis.rows())));
        }
        let class_means = (0..cm.rows()).map(|i| cm.row(i).to_vec()).collect();
        LdaProjection::from_parts(basis, mean, eig, class_means)
    }
}

impl Artifact for PldaModel<f64> {
    const KIND: &'static str = "plda";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let d = self.dim();
        let tensors = vec![
            Tensor::from_f64("mu", vec![d], self.mu()),
            Tensor::matrix("F", self.f()),
            Tensor::matrix("G", self.g()),
            Tensor::from_f64("Sigma", vec![d], self.sigma()),
        ];
        (json!({ "dim": d, "r_b": self.f().cols(), "r_w": self.g().cols() }), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let mu = c.take("mu")?.to_f64();
        let f = c.take("F")?.to_matrix()?;
        let g = c.take("G")?.to_matrix()?;
        let sigma = c.take("Sigma")?.to_f64();
        if c.meta.get("dim").and_then(Value::as_u64) != Some(mu.len() as u64) {
            return Err(Error::Shape("PLDA header dimension does not match mu".into()));
        }
        PldaModel::from_parts(mu, f, g, sigma)
    }
}

impl Artifact for ClassCentroids {
    const KIND: &'static str = "centroids";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let d = self.xvec_pd.len();
        let tensors = vec![Tensor::from_f64("xvec_pd", vec![d], &self.xvec_pd), Tensor::from_f64("xvec_hc", vec![d], &self.xvec_hc)];
        (json!({ "dim": d, "n_pd": self.n_pd, "n_hc": self.n_hc }), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let pd = c.take("xvec_pd")?.to_f64();
        let hc = c.take("xvec_hc")?.to_f64();
        let count = |k: &str| c.meta.get(k).and_then(Value::as_u64).map(|v| v as usize).ok_or_else(|| Error::Format(format!("missing {k}")));
        let (n_pd, n_hc) = (count("n_pd")?, count("n_hc")?);
        if pd.len() != hc.len() || n_pd == 0 || n_hc == 0 {
            return Err(Error::Shape("centroids must share a dimension and have positive counts".into()));
        }
        Ok(ClassCentroids { xvec_pd: pd, xvec_hc: hc, n_pd, n_hc })
    }
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    frame_hop_ms: f64,
    base_dim: usize,
    delta_order: u8,
    meta: FeatureMeta,
}

impl Artifact for FeatureMatrix<f64> {
    const KIND: &'static str = "features";

    fn to_parts(&self) -> (Value, Vec<Tensor>) {
        let h = FeatureHeader { frame_hop_ms: self.frame_hop_ms(), base_dim: self.base_dim(), delta_order: self.delta_order(), meta: self.meta.clone() };
        let tensors = vec![Tensor::matrix("frames", self.frames()), Tensor::new("vad_mask", vec![self.n_frames()], self.vad_mask().iter().map(|b| f32::from(u8::from(*b))))];
        (serde_json::to_value(h).expect("plain struct"), tensors)
    }

    fn from_container(mut c: Container) -> Result<Self> {
        let h: FeatureHeader = c.meta()?;
        let frames = c.take("frames")?.to_matrix()?;
        let mask = c.take("vad_mask")?;
        let mut fm = FeatureMatrix::with_layout(frames, h.frame_hop_ms, h.base_dim, h.delta_order, h.meta)?;
        if mask.data.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::Format("VAD mask values must be 0 or 1".into()));
        }
        fm.set_vad_mask(mask.data.iter().map(|v| *v == 1.0).collect())?;
        Ok(fm)
    }
}
