//! Koschmieder fog synthesis.
//!
//! Observed luminance of an object at distance `d` under extinction `k`:
//! `L = L₀·e^{−kd} + L_f·(1 − e^{−kd})`. With the 5% contrast threshold the
//! meteorological visibility is `Vis = −ln(0.05)/k ≈ 2.99/k`.

use thiserror::Error;

use crate::frame::GrayFrame;
use crate::geometry::CameraGeometry;

/// `Vis · k` for the 5% contrast threshold.
pub const VIS_FACTOR: f64 = 2.99;

/// Upper bound accepted for synthesized visibilities, meters.
pub const MAX_SYNTH_VIS: f64 = 2000.0;

#[derive(Debug, Error, PartialEq)]
pub enum FogError {
    #[error("argument must be positive, got {0}")]
    NonPositiveArgument(f64),
    #[error("depth map is {depth:?} but frame is {frame:?}")]
    DimensionMismatch {
        depth: (usize, usize),
        frame: (usize, usize),
    },
    #[error("sky luminance {0} outside [0, 1]")]
    InvalidSky(f64),
    #[error("scheduled visibility {0} outside (0, {MAX_SYNTH_VIS}]")]
    InvalidSchedule(f64),
}

pub fn vis_from_k(k: f64) -> Result<f64, FogError> {
    if !(k > 0.0) {
        return Err(FogError::NonPositiveArgument(k));
    }
    Ok(VIS_FACTOR / k)
}

pub fn k_from_vis(vis: f64) -> Result<f64, FogError> {
    if !(vis > 0.0) {
        return Err(FogError::NonPositiveArgument(vis));
    }
    Ok(VIS_FACTOR / vis)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FogParams {
    /// Extinction coefficient, 1/m.
    pub k: f64,
    /// Sky luminance in intensity units.
    pub l_f: f64,
}

impl FogParams {
    pub fn new(k: f64, l_f: f64) -> Result<Self, FogError> {
        if !(k > 0.0) {
            return Err(FogError::NonPositiveArgument(k));
        }
        if !(0.0..=1.0).contains(&l_f) {
            return Err(FogError::InvalidSky(l_f));
        }
        Ok(Self { k, l_f })
    }

    pub fn from_visibility(vis: f64, l_f: f64) -> Result<Self, FogError> {
        Self::new(k_from_vis(vis)?, l_f)
    }

    pub fn vis_true(&self) -> f64 {
        VIS_FACTOR / self.k
    }
}

/// Per-pixel distance in meters; `f64::INFINITY` at and above the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    pub width: usize,
    pub height: usize,
    depth: Vec<f64>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, depth: Vec<f64>) -> Self {
        assert_eq!(depth.len(), width * height);
        Self { width, height, depth }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.depth[y * self.width + x]
    }
}

/// Flat-road depth: every pixel in row `v > v_h` is at `λ/(v − v_h)`.
pub fn depth_from_geometry(geom: &CameraGeometry, width: usize, height: usize) -> DepthMap {
    let mut depth = Vec::with_capacity(width * height);
    for y in 0..height {
        let d = geom.row_to_distance(y as f64).unwrap_or(f64::INFINITY);
        depth.extend(std::iter::repeat_n(d, width));
    }
    DepthMap::new(width, height, depth)
}

/// Applies the Koschmieder law pixelwise.
pub fn apply_fog(clear: &GrayFrame, depth: &DepthMap, fog: &FogParams) -> Result<GrayFrame, FogError> {
    if (depth.width, depth.height) != clear.dims() {
        return Err(FogError::DimensionMismatch {
            depth: (depth.width, depth.height),
            frame: clear.dims(),
        });
    }
    Ok(clear.map(|x, y, l0| {
        let d = depth.get(x, y);
        if d.is_infinite() {
            fog.l_f
        } else {
            let t = (-fog.k * d).exp();
            l0 * t + fog.l_f * (1.0 - t)
        }
    }))
}

/// One fogged frame per scheduled visibility, in schedule order.
pub fn synth_sequence(
    clear: &GrayFrame,
    geom: &CameraGeometry,
    vis_schedule: &[f64],
    l_f: f64,
) -> Result<Vec<(GrayFrame, f64)>, FogError> {
    if let Some(&bad) = vis_schedule.iter().find(|v| !(**v > 0.0 && **v <= MAX_SYNTH_VIS)) {
        return Err(FogError::InvalidSchedule(bad));
    }
    let depth = depth_from_geometry(geom, clear.width(), clear.height());
    vis_schedule
        .iter()
        .map(|&vis| {
            let fog = FogParams::from_visibility(vis, l_f)?;
            Ok((apply_fog(clear, &depth, &fog)?, vis))
        })
        .collect()
}
