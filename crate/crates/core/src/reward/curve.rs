//! Per-frame progress curves.

use std::borrow::Borrow;

use super::{min_center_distance, SuccessReferenceSet};
use crate::encoder::{Embedding, Encoder};
use crate::trajectory::{Observation, Trajectory};
use crate::{Error, Result};

/// Progress values in `[0, 1]`; `degenerate` marks a constant distance
/// sequence, reported as all 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct ProgressCurve {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

impl ProgressCurve {
    pub fn last(&self) -> f64 {
        *self.values.last().expect("curves are non-empty")
    }
}

/// Min-max normalization mapping the largest distance to 0 and the smallest
/// to 1.
pub fn normalize_distances(d: &[f64]) -> ProgressCurve {
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    let span = max - min;
    if d.is_empty() || !(span > 0.0) {
        return ProgressCurve {
            values: vec![0.5; d.len()],
            degenerate: true,
        };
    }
    ProgressCurve {
        values: d.iter().map(|v| ((max - v) / span).clamp(0.0, 1.0)).collect(),
        degenerate: false,
    }
}

/// What the window embeddings are compared against.
#[derive(Debug, Clone, Copy)]
pub enum CurveTarget<'a> {
    /// Successful trajectory: the embedding of the whole trajectory.
    Whole(&'a Embedding),
    /// Failed trajectory: the nearest success center.
    Reference(&'a SuccessReferenceSet),
}

/// Normalized curve from already computed window embeddings. Distances are
/// squared Euclidean in both cases.
pub fn progress_curve_from_embeddings(
    windows: &[Embedding],
    target: CurveTarget<'_>,
) -> Result<ProgressCurve> {
    if windows.is_empty() {
        return Err(Error::Contract("progress curve needs at least one window".into()));
    }
    let d: Vec<f64> = match target {
        CurveTarget::Whole(whole) => windows
            .iter()
            .map(|w| {
                if w.dim() != whole.dim() {
                    Err(Error::shape(whole.dim(), w.dim()))
                } else {
                    Ok(w.sq_dist(whole))
                }
            })
            .collect::<Result<_>>()?,
        CurveTarget::Reference(r) => windows
            .iter()
            .map(|w| min_center_distance(w, r))
            .collect::<Result<_>>()?,
    };
    Ok(normalize_distances(&d))
}

/// Latent progress curve of a trajectory over its cumulative windows.
pub fn progress_curve(
    traj: &Trajectory,
    reference: &SuccessReferenceSet,
    encoder: &Encoder,
) -> Result<ProgressCurve> {
    let frames = traj.frames();
    let windows = encoder.cumulative_window_embeddings(&frames)?;
    if traj.outcome {
        let whole = encoder.encode(&frames)?;
        progress_curve_from_embeddings(&windows, CurveTarget::Whole(&whole))
    } else {
        progress_curve_from_embeddings(&windows, CurveTarget::Reference(reference))
    }
}

/// Frame indices scored by the pixel baseline for `n_frames` frames: from
/// frame 10 to the penultimate frame, or every frame but the last when the
/// trajectory is shorter than 12 steps.
pub fn pixel_progress_frames(n_frames: usize) -> std::ops::RangeInclusive<usize> {
    if n_frames >= 13 {
        10..=n_frames - 2
    } else {
        0..=n_frames.saturating_sub(2)
    }
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Pixel baseline: L1 distance of each scored frame to the final frame,
/// normalized like the latent curve.
pub fn pixel_progress_curve<O: Borrow<Observation>>(frames: &[O]) -> Result<ProgressCurve> {
    if frames.len() < 3 {
        return Err(Error::Contract(format!(
            "pixel curve needs a trajectory of length >= 2, got {} frames",
            frames.len()
        )));
    }
    let last = &frames[frames.len() - 1].borrow().grid;
    let d: Vec<f64> = pixel_progress_frames(frames.len())
        .map(|t| l1(&frames[t].borrow().grid, last))
        .collect();
    Ok(normalize_distances(&d))
}
