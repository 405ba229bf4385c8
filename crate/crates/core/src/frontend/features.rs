use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Where a feature matrix came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureMeta {
    pub utterance_id: String,
    /// Index of the segment within its utterance, when chunked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    /// Segments sharing a group were split from one over-long span; their
    /// embeddings are averaged.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fragment_group: Option<usize>,
}

/// `T x D` per-frame features: log-energy in column 0, then cepstra, then
/// optional delta blocks. `vad_mask` flags voiced frames.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix<T> {
    frames: Matrix<T>,
    frame_hop_ms: f64,
    vad_mask: Vec<bool>,
    /// Width of the static block (log-energy + cepstra).
    base_dim: usize,
    delta_order: u8,
    pub meta: FeatureMeta,
}

impl<T: Real> FeatureMatrix<T> {
    pub fn new(frames: Matrix<T>, frame_hop_ms: f64, meta: FeatureMeta) -> Result<Self> {
        let base_dim = frames.cols();
        Self::with_layout(frames, frame_hop_ms, base_dim, 0, meta)
    }

    pub fn with_layout(frames: Matrix<T>, frame_hop_ms: f64, base_dim: usize, delta_order: u8, meta: FeatureMeta) -> Result<Self> {
        if delta_order > 2 {
            return Err(Error::Config(format!("delta order {delta_order} unsupported")));
        }
        let expected = base_dim * (1 + delta_order as usize);
        if frames.cols() != expected {
            return Err(Error::DimensionMismatch { expected, got: frames.cols() });
        }
        if !frames.is_finite() {
            return Err(Error::Numerical("non-finite feature value".into()));
        }
        let vad_mask = vec![true; frames.rows()];
        Ok(Self { frames, frame_hop_ms, vad_mask, base_dim, delta_order, meta })
    }

    pub fn from_rows(rows: &[Vec<T>], frame_hop_ms: f64) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            data.extend_from_slice(r);
        }
        Self::new(Matrix::from_vec(rows.len(), dim, data)?, frame_hop_ms, FeatureMeta::default())
    }

    #[inline]
    pub fn n_frames(&self) -> usize {
        self.frames.rows()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn delta_order(&self) -> u8 {
        self.delta_order
    }

    pub fn frame_hop_ms(&self) -> f64 {
        self.frame_hop_ms
    }

    pub fn frames(&self) -> &Matrix<T> {
        &self.frames
    }

    #[inline]
    pub fn frame(&self, t: usize) -> &[T] {
        self.frames.row(t)
    }

    pub fn vad_mask(&self) -> &[bool] {
        &self.vad_mask
    }

    pub fn n_voiced(&self) -> usize {
        self.vad_mask.iter().filter(|v| **v).count()
    }

    pub fn duration_s(&self) -> f64 {
        self.n_frames() as f64 * self.frame_hop_ms / 1000.0
    }

    pub fn set_vad_mask(&mut self, mask: Vec<bool>) -> Result<()> {
        if mask.len() != self.n_frames() {
            return Err(Error::DimensionMismatch { expected: self.n_frames(), got: mask.len() });
        }
        self.vad_mask = mask;
        Ok(())
    }

    pub(crate) fn frames_mut(&mut self) -> &mut Matrix<T> {
        &mut self.frames
    }

    /// Keeps the rows whose mask entry is set.
    pub fn retain_voiced(&self) -> Self {
        let keep: Vec<usize> = (0..self.n_frames()).filter(|&t| self.vad_mask[t]).collect();
        self.select_rows(&keep)
    }

    pub(crate) fn select_rows(&self, rows: &[usize]) -> Self {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &t in rows {
            data.extend_from_slice(self.frame(t));
        }
        Self {
            frames: Matrix::from_vec(rows.len(), d, data).expect("row selection keeps the width"),
            frame_hop_ms: self.frame_hop_ms,
            vad_mask: rows.iter().map(|&t| self.vad_mask[t]).collect(),
            base_dim: self.base_dim,
            delta_order: self.delta_order,
            meta: self.meta.clone(),
        }
    }

    /// Rows `start..end` as a new matrix.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let rows: Vec<usize> = (start..end.min(self.n_frames())).collect();
        self.select_rows(&rows)
    }

    /// Appends the rows of `other` (same layout).
    pub fn concat(&self, other: &Self) -> Result<Self> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: other.dim() });
        }
        let mut data = self.frames.as_slice().to_vec();
        data.extend_from_slice(other.frames.as_slice());
        let mut vad_mask = self.vad_mask.clone();
        vad_mask.extend_from_slice(&other.vad_mask);
        Ok(Self {
            frames: Matrix::from_vec(self.n_frames() + other.n_frames(), self.dim(), data)?,
            frame_hop_ms: self.frame_hop_ms,
            vad_mask,
            base_dim: self.base_dim,
            delta_order: self.delta_order,
            meta: self.meta.clone(),
        })
    }

    pub fn cast<U: Real>(&self) -> FeatureMatrix<U> {
        FeatureMatrix {
            frames: self.frames.cast(),
            frame_hop_ms: self.frame_hop_ms,
            vad_mask: self.vad_mask.clone(),
            base_dim: self.base_dim,
            delta_order: self.delta_order,
            meta: self.meta.clone(),
        }
    }
}
