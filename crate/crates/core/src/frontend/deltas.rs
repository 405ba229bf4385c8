use crate::error::{Error, Result};
use crate::frontend::features::FeatureMatrix;
use crate::linalg::Matrix;
use crate::scalar::Real;

/// Half-width of the regression window.
pub const DELTA_WINDOW: usize = 2;

/// Regression deltas over `+-DELTA_WINDOW` frames, boundary frames replicated.
fn regression<T: Real>(src: &Matrix<T>, col_start: usize, width: usize) -> Matrix<T> {
    let t_frames = src.rows();
    let norm: f64 = 2.0 * (1..=DELTA_WINDOW).map(|n| (n * n) as f64).sum::<f64>();
    let inv = T::of(1.0 / norm);
    let last = t_frames.saturating_sub(1) as isize;
    Matrix::from_fn(t_frames, width, |t, j| {
        let mut acc = T::zero();
        for n in 1..=DELTA_WINDOW as isize {
            let ahead = (t as isize + n).min(last) as usize;
            let behind = (t as isize - n).max(0) as usize;
            acc += T::of(n as f64) * (src[(ahead, col_start + j)] - src[(behind, col_start + j)]);
        }
        acc * inv
    })
}

/// Appends deltas (`order = 1`) or deltas and delta-deltas (`order = 2`).
pub fn append_deltas<T: Real>(fm: &FeatureMatrix<T>, order: u8) -> Result<FeatureMatrix<T>> {
    if fm.delta_order() != 0 {
        return Err(Error::Config("deltas already appended".into()));
    }
    if !(1..=2).contains(&order) {
        return Err(Error::Config(format!("delta order must be 1 or 2, got {order}")));
    }
    let base = fm.frames();
    let d = fm.dim();
    let d1 = regression(base, 0, d);
    let d2 = (order == 2).then(|| regression(&d1, 0, d));
    let width = d * (1 + order as usize);
    let t_frames = fm.n_frames();
    let mut data = Vec::with_capacity(t_frames * width);
    for t in 0..t_frames {
        data.extend_from_slice(base.row(t));
        data.extend_from_slice(d1.row(t));
        if let Some(d2) = &d2 {
            data.extend_from_slice(d2.row(t));
        }
    }
    let mut out = FeatureMatrix::with_layout(Matrix::from_vec(t_frames, width, data)?, fm.frame_hop_ms(), d, order, fm.meta.clone())?;
    out.set_vad_mask(fm.vad_mask().to_vec())?;
    Ok(out)
}
