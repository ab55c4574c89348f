//! Procedural clear-day road scenes used as the fog oracle's input.

use serde::{Deserialize, Serialize};

use crate::frame::GrayFrame;
use crate::geometry::{DualGeometry, GeometryError, PolarLine};

/// A straight flat road vanishing at `(vanish_x, v_h)`, with bright lane
/// borders, a textured asphalt surface, darker shoulders and a sky band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadScene {
    pub width: usize,
    pub height: usize,
    pub v_h: f64,
    pub vanish_x: f64,
    /// Lane border columns on the bottom row.
    pub left_bottom_x: f64,
    pub right_bottom_x: f64,
    /// Calibration constant of the simulated camera, meter·pixels.
    pub lambda: f64,
    pub sky: f64,
    pub asphalt: f64,
    pub shoulder: f64,
    pub stripe: f64,
    /// Half-width of a lane stripe on the bottom row, pixels.
    pub stripe_half_width: f64,
    /// Peak-to-peak amplitude of the per-pixel pavement texture.
    pub texture: f64,
    pub seed: u64,
}

impl Default for RoadScene {
    fn default() -> Self {
        Self {
            width: 640,
            height: 360,
            v_h: 62.0,
            vanish_x: 320.0,
            left_bottom_x: 40.0,
            right_bottom_x: 600.0,
            lambda: 3000.0,
            sky: 0.85,
            asphalt: 0.6,
            shoulder: 0.22,
            stripe: 1.0,
            stripe_half_width: 2.5,
            texture: 0.4,
            seed: 1,
        }
    }
}

impl RoadScene {
    /// The same camera at `k` times the resolution: every pixel-valued field
    /// and `λ` scale by `k`, so rows keep their ground distances.
    pub fn scaled(&self, k: f64) -> Self {
        Self {
            width: (self.width as f64 * k).round() as usize,
            height: (self.height as f64 * k).round() as usize,
            v_h: self.v_h * k,
            vanish_x: self.vanish_x * k,
            left_bottom_x: self.left_bottom_x * k,
            right_bottom_x: self.right_bottom_x * k,
            lambda: self.lambda * k,
            stripe_half_width: self.stripe_half_width * k,
            ..self.clone()
        }
    }

    fn bottom(&self) -> f64 {
        self.height as f64 - 1.0
    }

    fn border_x(&self, bottom_x: f64, y: f64) -> f64 {
        self.vanish_x + (bottom_x - self.vanish_x) * (y - self.v_h) / (self.bottom() - self.v_h)
    }

    /// The two lane borders as lines through the vanishing point.
    pub fn lane_lines(&self) -> (PolarLine, PolarLine) {
        let apex = (self.vanish_x, self.v_h);
        (
            PolarLine::through((self.left_bottom_x, self.bottom()), apex),
            PolarLine::through((self.right_bottom_x, self.bottom()), apex),
        )
    }

    /// Anchor rows a calibrator would mark for this camera: a near anchor
    /// close to the bottom and far anchors 15 m and 9 m beyond it.
    pub fn anchors(&self) -> (f64, f64, f64) {
        let v_2 = (self.bottom() - 0.1 * (self.bottom() - self.v_h)).round();
        let d_2 = self.lambda / (v_2 - self.v_h);
        let v_1_15 = self.v_h + self.lambda / (d_2 + 15.0);
        let v_1_9 = self.v_h + self.lambda / (d_2 + 9.0);
        (v_1_15, v_1_9, v_2)
    }

    /// Dual calibration from [`RoadScene::anchors`]; both `λ` equal `lambda`.
    pub fn geometry(&self) -> Result<DualGeometry, GeometryError> {
        let (v_1_15, v_1_9, v_2) = self.anchors();
        DualGeometry::calibrate(self.v_h, v_1_15, v_1_9, v_2, 15.0, 9.0)
    }

    pub fn render(&self) -> GrayFrame {
        GrayFrame::from_fn(self.width, self.height, |x, y| {
            let (xf, yf) = (x as f64, y as f64);
            if yf <= self.v_h {
                return (self.sky - 0.05 * (self.v_h - yf) / self.v_h.max(1.0)).clamp(0.0, 1.0);
            }
            let depth_frac = (yf - self.v_h) / (self.bottom() - self.v_h);
            let half = (self.stripe_half_width * depth_frac).max(0.6);
            let xl = self.border_x(self.left_bottom_x, yf);
            let xr = self.border_x(self.right_bottom_x, yf);
            let n = self.texture * (unit_noise(self.seed, (y * self.width + x) as u64) - 0.5);
            let v = if (xf - xl).abs() <= half || (xf - xr).abs() <= half {
                self.stripe
            } else if xf > xl && xf < xr {
                self.asphalt + n
            } else {
                self.shoulder + 0.5 * n
            };
            v.clamp(0.0, 1.0)
        })
        .expect("scene dimensions are valid")
    }
}

/// Uniform in `[0, 1)`, a pure function of `(seed, i)`.
fn unit_noise(seed: u64, i: u64) -> f64 {
    (splitmix64(seed ^ splitmix64(i)) >> 11) as f64 / (1u64 << 53) as f64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
