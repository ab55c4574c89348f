//! Contrast-threshold visibility baseline.
//!
//! The most distant pavement row whose Michelson contrast still reaches the
//! 5% threshold is taken as the visibility limit, and its ground distance is
//! the estimate.

use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geometry::{CameraGeometry, RoiMask};

/// CIE contrast threshold.
pub const DEFAULT_THRESHOLD: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ContrastError {
    #[error("ROI is empty")]
    EmptyRoi,
    #[error("ROI is {roi:?} but frame is {frame:?}")]
    DimensionMismatch { roi: (usize, usize), frame: (usize, usize) },
    #[error("threshold must lie in (0, 1), got {0}")]
    InvalidThreshold(f64),
}

/// Michelson contrast of each ROI row, ordered by ascending row index.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastProfile {
    pub rows: Vec<(usize, f64)>,
}

pub fn row_contrast(frame: &GrayFrame, roi: &RoiMask) -> Result<ContrastProfile, ContrastError> {
    if (roi.width, roi.height) != frame.dims() {
        return Err(ContrastError::DimensionMismatch {
            roi: (roi.width, roi.height),
            frame: frame.dims(),
        });
    }
    let mut rows = Vec::new();
    for y in roi.rows() {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for (x, &v) in frame.row(y).iter().enumerate() {
            if roi.contains(x, y) {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        let sum = hi + lo;
        rows.push((y, if sum < 1e-9 { 0.0 } else { (hi - lo) / sum }));
    }
    if rows.is_empty() {
        return Err(ContrastError::EmptyRoi);
    }
    Ok(ContrastProfile { rows })
}

/// Distance of the farthest ROI row below the horizon with contrast at or
/// above `threshold`; 0 m when no row qualifies.
pub fn contrast_visibility(
    frame: &GrayFrame,
    roi: &RoiMask,
    geom: &CameraGeometry,
    threshold: f64,
) -> Result<f64, ContrastError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ContrastError::InvalidThreshold(threshold));
    }
    let profile = row_contrast(frame, roi)?;
    Ok(profile
        .rows
        .iter()
        .filter(|(y, c)| *c >= threshold && (*y as f64) > geom.v_h)
        .map(|(y, _)| geom.lambda / (*y as f64 - geom.v_h))
        .next()
        .unwrap_or(0.0))
}
