//! Image intensity entropy over the pavement ROI, the clear-day baseline and
//! the relative entropy ratio.
//!
//! The intensity entropy treats the ROI intensities themselves as a
//! distribution: `p = f / Σ f`, `H = −Σ p log₂ p`. Fog pulls every pixel
//! toward the same sky luminance, which pushes `p` toward uniform and `H`
//! toward its maximum `log₂(pixel_count)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{gaussian_smooth, FrameError, GrayFrame, Smoothing};
use crate::geometry::RoiMask;

#[derive(Debug, Error)]
pub enum EntropyError {
    #[error("ROI has fewer than 2 pixels")]
    EmptyRoi,
    #[error("every ROI intensity is zero")]
    AllZeroRoi,
    #[error("ROI is {roi:?} but frame is {frame:?}")]
    DimensionMismatch { roi: (usize, usize), frame: (usize, usize) },
    #[error("empty entropy series")]
    EmptySeries,
    #[error("clear-day baseline entropy must be positive, got {0}")]
    ZeroBaseline(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Frame(#[from] FrameError),
}

/// Entropy in bits and the number of pixels it was computed over.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyValue {
    pub value: f64,
    pub pixel_count: usize,
}

impl EntropyValue {
    pub fn max_bits(&self) -> f64 {
        (self.pixel_count as f64).log2()
    }
}

fn roi_values(frame: &GrayFrame, roi: &RoiMask) -> Result<Vec<f64>, EntropyError> {
    if (roi.width, roi.height) != frame.dims() {
        return Err(EntropyError::DimensionMismatch {
            roi: (roi.width, roi.height),
            frame: frame.dims(),
        });
    }
    let values: Vec<f64> = roi.values(frame).collect();
    if values.len() < 2 {
        return Err(EntropyError::EmptyRoi);
    }
    Ok(values)
}

/// Shannon entropy of the distribution proportional to `weights`, with the
/// logarithm taken in `base`. Zero weights contribute nothing.
pub fn weight_entropy(weights: &[f64], base: f64) -> Option<f64> {
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let ln_base = base.ln();
    let h = weights
        .iter()
        .filter(|w| **w > 0.0)
        .map(|w| {
            let p = w / total;
            -p * p.ln()
        })
        .sum::<f64>()
        / ln_base;
    Some(h)
}

/// Intensity entropy of the ROI in an arbitrary log base.
pub fn intensity_entropy_base(frame: &GrayFrame, roi: &RoiMask, base: f64) -> Result<EntropyValue, EntropyError> {
    let values = roi_values(frame, roi)?;
    let pixel_count = values.len();
    let h = weight_entropy(&values, base).ok_or(EntropyError::AllZeroRoi)?;
    let upper = (pixel_count as f64).ln() / base.ln();
    Ok(EntropyValue {
        value: h.clamp(0.0, upper),
        pixel_count,
    })
}

/// Intensity entropy of the ROI in bits.
pub fn intensity_entropy(frame: &GrayFrame, roi: &RoiMask) -> Result<EntropyValue, EntropyError> {
    intensity_entropy_base(frame, roi, 2.0)
}

/// Intensity entropy after Gaussian smoothing.
pub fn gaussian_entropy(frame: &GrayFrame, roi: &RoiMask, smoothing: Smoothing) -> Result<EntropyValue, EntropyError> {
    let smoothed = gaussian_smooth(frame, smoothing.sigma, smoothing.radius)?;
    intensity_entropy(&smoothed, roi)
}

/// Entropy of the ROI's intensity histogram, `bins` equal-width bins on
/// `[0, 1]`.
pub fn histogram_entropy(frame: &GrayFrame, roi: &RoiMask, bins: usize) -> Result<EntropyValue, EntropyError> {
    if bins < 2 {
        return Err(EntropyError::InvalidParameter(format!("bins must be >= 2, got {bins}")));
    }
    let values = roi_values(frame, roi)?;
    let mut counts = vec![0.0; bins];
    for v in &values {
        let b = ((v * bins as f64) as usize).min(bins - 1);
        counts[b] += 1.0;
    }
    Ok(EntropyValue {
        value: weight_entropy(&counts, 2.0).expect("non-empty ROI"),
        pixel_count: values.len(),
    })
}

/// Mean clear-day entropy after outlier removal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClearBaseline {
    pub camera_id: String,
    #[serde(rename = "H_clear")]
    pub h_clear: f64,
    pub n_used: usize,
    pub n_rejected: usize,
    pub rejection_k: f64,
}

/// Consistency constant making the MAD estimate σ for Gaussian data.
pub const MAD_SCALE: f64 = 1.4826;

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Hampel filter then mean: values with `|H − median| > k · 1.4826 · MAD`
/// are dropped. When the MAD is zero only values that differ from the
/// median are dropped.
pub fn clear_baseline(
    camera_id: &str,
    series: &[EntropyValue],
    rejection_k: f64,
) -> Result<ClearBaseline, EntropyError> {
    if !(rejection_k > 0.0) {
        return Err(EntropyError::InvalidParameter(format!(
            "rejection_k must be > 0, got {rejection_k}"
        )));
    }
    let values: Vec<f64> = series.iter().map(|e| e.value).collect();
    let med = median(&values).ok_or(EntropyError::EmptySeries)?;
    let deviations: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
    let mad = MAD_SCALE * median(&deviations).expect("non-empty");
    let limit = rejection_k * mad;
    let kept: Vec<f64> = values.iter().copied().filter(|v| (v - med).abs() <= limit).collect();
    // The median itself always survives, so `kept` is never empty.
    let h_clear = kept.iter().sum::<f64>() / kept.len() as f64;
    if !(h_clear > 0.0) {
        return Err(EntropyError::ZeroBaseline(h_clear));
    }
    Ok(ClearBaseline {
        camera_id: camera_id.to_string(),
        h_clear,
        n_used: kept.len(),
        n_rejected: values.len() - kept.len(),
        rejection_k,
    })
}

/// `H_r = 10 · H_fog / H_clear`.
pub fn relative_ratio(h_fog: f64, baseline: &ClearBaseline) -> Result<f64, EntropyError> {
    if !(baseline.h_clear > 0.0) {
        return Err(EntropyError::ZeroBaseline(baseline.h_clear));
    }
    Ok(10.0 * h_fog / baseline.h_clear)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyPoint {
    pub frame_index: u64,
    pub timestamp: f64,
    pub h_bits: f64,
    pub h_r: Option<f64>,
}

/// Per-camera entropy time series.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntropySeries {
    pub camera_id: String,
    points: Vec<EntropyPoint>,
}

impl EntropySeries {
    pub fn new(camera_id: &str) -> Self {
        Self {
            camera_id: camera_id.to_string(),
            points: Vec::new(),
        }
    }

    pub fn push(&mut self, point: EntropyPoint) -> Result<(), EntropyError> {
        if let Some(last) = self.points.last() {
            if point.timestamp < last.timestamp {
                return Err(EntropyError::InvalidParameter(format!(
                    "timestamp {} precedes {}",
                    point.timestamp, last.timestamp
                )));
            }
        }
        if !(point.h_bits >= 0.0) || point.h_r.is_some_and(|r| !(r > 0.0)) {
            return Err(EntropyError::InvalidParameter(format!(
                "invalid entropy point at frame {}",
                point.frame_index
            )));
        }
        self.points.push(point);
        Ok(())
    }

    pub fn points(&self) -> &[EntropyPoint] {
        &self.points
    }

    /// Fills `h_r` for every point from `baseline`.
    pub fn apply_baseline(&mut self, baseline: &ClearBaseline) -> Result<(), EntropyError> {
        for p in &mut self.points {
            p.h_r = Some(relative_ratio(p.h_bits, baseline)?);
        }
        Ok(())
    }
}
