//! Road-plane camera geometry and pavement ROI extraction.
//!
//! A flat road seen by a pinhole camera maps image row `v` to ground
//! distance `λ / (v − v_h)`, where `v_h` is the horizon (vanishing) row.
//! `λ` is calibrated from two pavement points a known distance apart.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::{gaussian_smooth, GrayFrame, Smoothing};

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("row {v} is at or above the horizon row {v_h}")]
    BelowHorizon { v: f64, v_h: f64 },
    #[error("no Hough line reached {threshold} votes")]
    NoLinesFound { threshold: u32 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("ROI covers {count} of {total} pixels, below the 1% minimum")]
    RoiTooSmall { count: usize, total: usize },
}

/// Projective row-to-distance calibration for one camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraGeometry {
    /// Horizon row, fractional pixels.
    pub v_h: f64,
    /// Calibration constant, meter·pixels.
    pub lambda: f64,
    /// Far anchor row.
    pub v_1: f64,
    /// Near anchor row.
    pub v_2: f64,
    /// Ground distance between the anchors, meters.
    pub d_gap: f64,
}

impl CameraGeometry {
    /// Calibrates `λ` from the anchors and validates the ordering
    /// `v_h < v_1 < v_2`.
    pub fn calibrate(v_h: f64, v_1: f64, v_2: f64, d_gap: f64) -> Result<Self, GeometryError> {
        let lambda = calibrate_lambda(v_1, v_2, v_h, d_gap)?;
        Ok(Self {
            v_h,
            lambda,
            v_1,
            v_2,
            d_gap,
        })
    }

    pub fn row_to_distance(&self, v: f64) -> Result<f64, GeometryError> {
        row_to_distance(v, self.v_h, self.lambda)
    }
}

/// `λ = d_gap / (1/(v_1 − v_h) − 1/(v_2 − v_h))`.
pub fn calibrate_lambda(v_1: f64, v_2: f64, v_h: f64, d_gap: f64) -> Result<f64, GeometryError> {
    if !(v_h < v_1 && v_1 < v_2) {
        return Err(GeometryError::DegenerateGeometry(format!(
            "anchor rows must satisfy v_h < v_1 < v_2, got v_h={v_h}, v_1={v_1}, v_2={v_2}"
        )));
    }
    if !(d_gap > 0.0) {
        return Err(GeometryError::InvalidParameter(format!(
            "d_gap must be > 0, got {d_gap}"
        )));
    }
    let far = v_1 - v_h;
    let near = v_2 - v_h;
    let denom = 1.0 / far - 1.0 / near;
    if far.abs() < 1e-9 || near.abs() < 1e-9 || denom.abs() < 1e-9 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "anchor denominators vanish (v_1 - v_h = {far}, v_2 - v_h = {near})"
        )));
    }
    Ok(d_gap / denom)
}

/// Ground distance of image row `v`: `λ / (v − v_h)`.
pub fn row_to_distance(v: f64, v_h: f64, lambda: f64) -> Result<f64, GeometryError> {
    if !(v > v_h) {
        return Err(GeometryError::BelowHorizon { v, v_h });
    }
    Ok(lambda / (v - v_h))
}

/// The two calibrations of a camera: one from the 15 m anchor pair, one
/// from the 9 m pair. Both share `v_h` and the near anchor `v_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualGeometry {
    pub g15: CameraGeometry,
    pub g9: CameraGeometry,
}

impl DualGeometry {
    pub fn calibrate(v_h: f64, v_1_15: f64, v_1_9: f64, v_2: f64, d15: f64, d9: f64) -> Result<Self, GeometryError> {
        Ok(Self {
            g15: CameraGeometry::calibrate(v_h, v_1_15, v_2, d15)?,
            g9: CameraGeometry::calibrate(v_h, v_1_9, v_2, d9)?,
        })
    }

    pub fn v_h(&self) -> f64 {
        self.g15.v_h
    }

    /// Single geometry whose `λ` is the mean of the two calibrations. Since
    /// both share `v_h`, its distances are the mean of the two distances.
    pub fn mean(&self) -> CameraGeometry {
        CameraGeometry {
            lambda: 0.5 * (self.g15.lambda + self.g9.lambda),
            ..self.g15
        }
    }
}

/// A line in normal form `x·cos θ + y·sin θ = ρ`, image coordinates with
/// `y` growing downward and pixel centers on integer coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarLine {
    pub rho: f64,
    pub theta_deg: f64,
    pub votes: u32,
}

impl PolarLine {
    pub fn new(rho: f64, theta_deg: f64) -> Self {
        Self {
            rho,
            theta_deg,
            votes: 0,
        }
    }

    /// The line through two points.
    pub fn through(p: (f64, f64), q: (f64, f64)) -> Self {
        let (dx, dy) = (q.0 - p.0, q.1 - p.1);
        // Normal is perpendicular to the direction.
        let mut theta = dy.atan2(dx) + std::f64::consts::FRAC_PI_2;
        theta = theta.rem_euclid(std::f64::consts::PI);
        let rho = p.0 * theta.cos() + p.1 * theta.sin();
        Self::new(rho, theta.to_degrees())
    }

    fn normal(&self) -> (f64, f64) {
        let t = self.theta_deg.to_radians();
        (t.cos(), t.sin())
    }

    /// `x` where the line crosses row `y`; `None` for horizontal lines.
    pub fn x_at(&self, y: f64) -> Option<f64> {
        let (c, s) = self.normal();
        (c.abs() > 1e-12).then(|| (self.rho - y * s) / c)
    }

    /// `dx/dy` along the line.
    pub fn dx_dy(&self) -> f64 {
        let (c, s) = self.normal();
        -s / c
    }

    pub fn intersection(&self, other: &PolarLine) -> Option<(f64, f64)> {
        let (c1, s1) = self.normal();
        let (c2, s2) = other.normal();
        let det = c1 * s2 - s1 * c2;
        if det.abs() < 1e-12 {
            return None;
        }
        let x = (self.rho * s2 - s1 * other.rho) / det;
        let y = (c1 * other.rho - self.rho * c2) / det;
        Some((x, y))
    }
}

/// Parameters for lane-line detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineDetection {
    /// Hysteresis low threshold on Sobel gradient magnitude.
    pub canny_lo: f64,
    /// Hysteresis high threshold on Sobel gradient magnitude.
    pub canny_hi: f64,
    pub hough_threshold: u32,
    /// Gaussian pre-smoothing before the gradient step; `None` skips it.
    #[serde(default)]
    pub smoothing: Option<Smoothing>,
}

impl Default for LineDetection {
    fn default() -> Self {
        Self {
            canny_lo: 0.4,
            canny_hi: 1.0,
            hough_threshold: 40,
            smoothing: Some(Smoothing::default()),
        }
    }
}

/// Canny-style edge map: Sobel gradients, non-maximum suppression along the
/// quantized gradient direction, then hysteresis between `lo` and `hi`.
pub fn edge_map(frame: &GrayFrame, lo: f64, hi: f64) -> Vec<bool> {
    let (w, h) = frame.dims();
    let at = |x: isize, y: isize| frame.get(x.clamp(0, w as isize - 1) as usize, y.clamp(0, h as isize - 1) as usize);
    let mut mag = vec![0.0; w * h];
    let mut dir = vec![0u8; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            mag[i] = gx.hypot(gy);
            let angle = gy.atan2(gx).to_degrees().rem_euclid(180.0);
            dir[i] = match angle {
                a if !(22.5..157.5).contains(&a) => 0,
                a if a < 67.5 => 1,
                a if a < 112.5 => 2,
                _ => 3,
            };
        }
    }

    let mut thin = vec![0.0; w * h];
    for y in 1..h.saturating_sub(1) {
        for x in 1..w.saturating_sub(1) {
            let i = y * w + x;
            let m = mag[i];
            if m < lo {
                continue;
            }
            let (a, b) = match dir[i] {
                0 => (i - 1, i + 1),
                1 => (i - w - 1, i + w + 1),
                2 => (i - w, i + w),
                _ => (i - w + 1, i + w - 1),
            };
            // Ties on the forward side are broken toward the first pixel so
            // a plateau keeps one edge instead of zero.
            if m >= mag[a] && m > mag[b] || m > mag[a] && m >= mag[b] {
                thin[i] = m;
            }
        }
    }

    let mut edges = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h).filter(|&i| thin[i] >= hi).collect();
    for &i in &stack {
        edges[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if !edges[j] && thin[j] >= lo {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    edges
}

/// ρ–θ vote accumulator with 1 px ρ bins and 1° θ bins.
#[derive(Debug, Clone)]
pub struct HoughAccumulator {
    pub rho_offset: usize,
    pub n_rho: usize,
    pub votes: Vec<u32>,
}

impl HoughAccumulator {
    pub fn get(&self, rho_bin: usize, theta_deg: usize) -> u32 {
        self.votes[theta_deg * self.n_rho + rho_bin]
    }

    pub fn rho_of_bin(&self, bin: usize) -> f64 {
        bin as f64 - self.rho_offset as f64
    }
}

pub fn hough_accumulate(edges: &[bool], width: usize, height: usize) -> HoughAccumulator {
    let diag = ((width * width + height * height) as f64).sqrt().ceil() as usize;
    let n_rho = 2 * diag + 1;
    let mut votes = vec![0u32; 180 * n_rho];
    let trig: Vec<(f64, f64)> = (0..180)
        .map(|t| {
            let r = (t as f64).to_radians();
            (r.cos(), r.sin())
        })
        .collect();
    for (i, _) in edges.iter().enumerate().filter(|(_, e)| **e) {
        let (x, y) = ((i % width) as f64, (i / width) as f64);
        for (t, (c, s)) in trig.iter().enumerate() {
            let bin = (x * c + y * s).round() as isize + diag as isize;
            votes[t * n_rho + bin as usize] += 1;
        }
    }
    HoughAccumulator {
        rho_offset: diag,
        n_rho,
        votes,
    }
}

// Peaks closer than this in both ρ (px) and θ (deg) are one line; the two
// edges of a painted stripe fall inside the same window.
const PEAK_RHO_WINDOW: isize = 4;
const PEAK_THETA_WINDOW: isize = 3;

// Edge pixels within this distance (px) of a Hough peak take part in its
// least-squares refinement.
const REFINE_BAND: f64 = 6.0;
const REFINE_ITERATIONS: usize = 3;

/// Total-least-squares fit of the line through the edge pixels within
/// `band` of `line`. Returns `line` unchanged when fewer than 2 pixels qualify.
fn refine_line(edges: &[bool], width: usize, line: &PolarLine, band: f64) -> PolarLine {
    let (c, s) = line.normal();
    let pts: Vec<(f64, f64)> = edges
        .iter()
        .enumerate()
        .filter(|(_, e)| **e)
        .map(|(i, _)| ((i % width) as f64, (i / width) as f64))
        .filter(|(x, y)| (x * c + y * s - line.rho).abs() <= band)
        .collect();
    if pts.len() < 2 {
        return *line;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x / n, b + y / n));
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    // The normal is the eigenvector of the smaller eigenvalue, at angle
    // half the orientation of the scatter plus 90°.
    let mut theta = 0.5 * (2.0 * sxy).atan2(sxx - syy) + std::f64::consts::FRAC_PI_2;
    let mut rho = mx * theta.cos() + my * theta.sin();
    if theta >= std::f64::consts::PI {
        theta -= std::f64::consts::PI;
        rho = -rho;
    }
    PolarLine {
        rho,
        theta_deg: theta.to_degrees(),
        votes: line.votes,
    }
}

/// Detects straight lines: edge map, Hough accumulation, local-maximum
/// peaks with at least `hough_threshold` votes, sorted by votes descending.
/// Each peak is refined to the vote-weighted centroid of its neighborhood,
/// then by a least-squares fit to the nearby edge pixels.
pub fn detect_lane_lines(clear_frame: &GrayFrame, params: &LineDetection) -> Result<Vec<PolarLine>, GeometryError> {
    if !(params.canny_lo > 0.0 && params.canny_lo < params.canny_hi) {
        return Err(GeometryError::InvalidParameter(format!(
            "need 0 < canny_lo < canny_hi, got {} and {}",
            params.canny_lo, params.canny_hi
        )));
    }
    if params.hough_threshold < 1 {
        return Err(GeometryError::InvalidParameter("hough_threshold must be >= 1".into()));
    }
    let (w, h) = clear_frame.dims();
    let smoothed;
    let source = match params.smoothing {
        Some(s) => {
            smoothed = gaussian_smooth(clear_frame, s.sigma, s.radius)
                .map_err(|e| GeometryError::InvalidParameter(e.to_string()))?;
            &smoothed
        }
        None => clear_frame,
    };
    let edges = edge_map(source, params.canny_lo, params.canny_hi);
    let acc = hough_accumulate(&edges, w, h);

    let n_rho = acc.n_rho as isize;
    let vote_at = |rho: isize, theta: isize| -> u32 {
        // θ wraps with ρ negated: (ρ, θ+180) is the same line as (−ρ, θ).
        let (rho, theta) = if theta < 0 {
            (2 * acc.rho_offset as isize - rho, theta + 180)
        } else if theta >= 180 {
            (2 * acc.rho_offset as isize - rho, theta - 180)
        } else {
            (rho, theta)
        };
        if rho < 0 || rho >= n_rho {
            0
        } else {
            acc.get(rho as usize, theta as usize)
        }
    };

    let mut lines = Vec::new();
    for theta in 0..180isize {
        for rho in 0..n_rho {
            let v = acc.get(rho as usize, theta as usize);
            if v < params.hough_threshold {
                continue;
            }
            let mut is_peak = true;
            let mut sum = 0.0;
            let mut rho_moment = 0.0;
            let mut theta_moment = 0.0;
            'window: for dt in -PEAK_THETA_WINDOW..=PEAK_THETA_WINDOW {
                for dr in -PEAK_RHO_WINDOW..=PEAK_RHO_WINDOW {
                    if dt == 0 && dr == 0 {
                        continue;
                    }
                    let other = vote_at(rho + dr, theta + dt);
                    // Strict on one side so plateaus yield exactly one peak.
                    let earlier = (dt, dr) < (0, 0);
                    if other > v || (earlier && other == v) {
                        is_peak = false;
                        break 'window;
                    }
                    if dt.abs() <= 1 {
                        sum += other as f64;
                        rho_moment += other as f64 * dr as f64;
                        theta_moment += other as f64 * dt as f64;
                    }
                }
            }
            if !is_peak {
                continue;
            }
            sum += v as f64;
            let mut line = PolarLine {
                rho: acc.rho_of_bin(rho as usize) + rho_moment / sum,
                theta_deg: theta as f64 + theta_moment / sum,
                votes: v,
            };
            for _ in 0..REFINE_ITERATIONS {
                line = refine_line(&edges, w, &line, REFINE_BAND);
            }
            lines.push(line);
        }
    }
    if lines.is_empty() {
        return Err(GeometryError::NoLinesFound {
            threshold: params.hough_threshold,
        });
    }
    lines.sort_by(|a, b| {
        b.votes
            .cmp(&a.votes)
            .then(a.theta_deg.total_cmp(&b.theta_deg))
            .then(a.rho.total_cmp(&b.rho))
    });
    Ok(lines)
}

/// Boolean pavement mask plus the polygon it was rasterized from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoiMask {
    pub width: usize,
    pub height: usize,
    #[serde(skip)]
    mask: Vec<bool>,
    /// Vertices `(x, y)` in pixel coordinates.
    pub polygon: Vec<(f64, f64)>,
}

impl RoiMask {
    /// Rasterizes `polygon`: a pixel is inside when its center lies within
    /// the polygon, boundary inclusive.
    pub fn from_polygon(width: usize, height: usize, polygon: Vec<(f64, f64)>) -> Result<Self, GeometryError> {
        if polygon.len() < 3 {
            return Err(GeometryError::InvalidParameter("ROI polygon needs 3+ vertices".into()));
        }
        let mask = rasterize(width, height, &polygon);
        let count = mask.iter().filter(|m| **m).count();
        let total = width * height;
        if count * 100 < total {
            return Err(GeometryError::RoiTooSmall { count, total });
        }
        Ok(Self {
            width,
            height,
            mask,
            polygon,
        })
    }

    /// Whole-frame ROI.
    pub fn full(width: usize, height: usize) -> Self {
        let (w, h) = ((width - 1) as f64, (height - 1) as f64);
        Self {
            width,
            height,
            mask: vec![true; width * height],
            polygon: vec![(0.0, 0.0), (w, 0.0), (w, h), (0.0, h)],
        }
    }

    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        self.mask[y * self.width + x]
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn count(&self) -> usize {
        self.mask.iter().filter(|m| **m).count()
    }

    /// Rows with at least one ROI pixel, ascending.
    pub fn rows(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.height).filter(move |&y| self.mask[y * self.width..(y + 1) * self.width].iter().any(|m| *m))
    }

    /// Intensities under the mask, in row-major order.
    pub fn values<'a>(&'a self, frame: &'a GrayFrame) -> impl Iterator<Item = f64> + 'a {
        frame
            .data()
            .iter()
            .zip(self.mask.iter())
            .filter_map(|(v, m)| m.then_some(*v))
    }

    /// 0/1 mask as a frame, for PGM export.
    pub fn to_frame(&self) -> GrayFrame {
        GrayFrame::new(
            self.width,
            self.height,
            self.mask.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dimensions are valid")
    }

    /// Recomputes the raster after deserialization.
    pub fn rebuild(self) -> Result<Self, GeometryError> {
        Self::from_polygon(self.width, self.height, self.polygon)
    }
}

const EDGE_EPS: f64 = 1e-9;

fn rasterize(width: usize, height: usize, polygon: &[(f64, f64)]) -> Vec<bool> {
    let mut mask = vec![false; width * height];
    let n = polygon.len();
    for y in 0..height {
        let yc = y as f64;
        let mut spans: Vec<(f64, f64)> = Vec::new();
        let mut crossings: Vec<f64> = Vec::new();
        for i in 0..n {
            let (x0, y0) = polygon[i];
            let (x1, y1) = polygon[(i + 1) % n];
            if (y0 - yc).abs() < EDGE_EPS && (y1 - yc).abs() < EDGE_EPS {
                // Horizontal edge lying on this row.
                spans.push((x0.min(x1), x0.max(x1)));
                continue;
            }
            let (lo, hi) = if y0 < y1 { (y0, y1) } else { (y1, y0) };
            // Half-open in y so shared vertices count once; the closed top is
            // handled by the horizontal-edge branch or the span below.
            if yc >= lo - EDGE_EPS && yc < hi - EDGE_EPS {
                let t = (yc - y0) / (y1 - y0);
                crossings.push(x0 + t * (x1 - x0));
            } else if (yc - hi).abs() < EDGE_EPS {
                let x = if y0 > y1 { x0 } else { x1 };
                spans.push((x, x));
            }
        }
        crossings.sort_by(f64::total_cmp);
        for pair in crossings.chunks_exact(2) {
            spans.push((pair[0], pair[1]));
        }
        for (a, b) in spans {
            let start = (a - EDGE_EPS).ceil().max(0.0);
            let end = (b + EDGE_EPS).floor().min(width as f64 - 1.0);
            if start > end {
                continue;
            }
            for x in start as usize..=end as usize {
                mask[y * width + x] = true;
            }
        }
    }
    mask
}

/// Default gap between the horizon and the top of the ROI, pixels.
pub const DEFAULT_H_MARGIN: f64 = 10.0;

/// Builds the pavement trapezoid from detected lines.
///
/// Picks the strongest line, then the strongest line whose `dx/dy` has the
/// opposite sign. Near-horizontal lines (within 10° of horizontal) are not
/// lane borders and are skipped. Their intersection row is the horizon.
pub fn build_roi(
    lines: &[PolarLine],
    width: usize,
    height: usize,
    h_margin: f64,
) -> Result<(RoiMask, f64), GeometryError> {
    let usable: Vec<&PolarLine> = lines
        .iter()
        .filter(|l| (l.theta_deg - 90.0).abs() >= 10.0 && l.dx_dy().abs() > 1e-9)
        .collect();
    let first = usable
        .first()
        .ok_or_else(|| GeometryError::DegenerateGeometry("no usable lane lines".into()))?;
    let second = usable
        .iter()
        .skip(1)
        .find(|l| l.dx_dy().signum() != first.dx_dy().signum())
        .ok_or_else(|| GeometryError::DegenerateGeometry("no pair of lines with opposite slopes".into()))?;
    trapezoid_from_pair(first, second, width, height, h_margin)
}

/// Trapezoid between two lane borders, from `v_h + h_margin` down to the
/// bottom edge. Returns the mask and the horizon row.
pub fn trapezoid_from_pair(
    a: &PolarLine,
    b: &PolarLine,
    width: usize,
    height: usize,
    h_margin: f64,
) -> Result<(RoiMask, f64), GeometryError> {
    let dtheta = (a.theta_deg - b.theta_deg).rem_euclid(180.0);
    if dtheta.min(180.0 - dtheta) < 0.5 {
        return Err(GeometryError::DegenerateGeometry(format!(
            "lines at θ={:.2}° and θ={:.2}° are parallel",
            a.theta_deg, b.theta_deg
        )));
    }
    let (_, v_h) = a
        .intersection(b)
        .ok_or_else(|| GeometryError::DegenerateGeometry("lines do not intersect".into()))?;
    let h = height as f64;
    if v_h < -h || v_h > 2.0 * h {
        return Err(GeometryError::DegenerateGeometry(format!(
            "lines intersect at row {v_h:.2}, more than one frame height outside the image"
        )));
    }
    let top = (v_h + h_margin).max(0.0);
    let bottom = h - 1.0;
    if top >= bottom {
        return Err(GeometryError::DegenerateGeometry(format!(
            "horizon row {v_h:.2} leaves no pavement below it"
        )));
    }
    let x = |l: &PolarLine, y: f64| l.x_at(y).expect("usable lines are not horizontal");
    let (mut left, mut right) = (a, b);
    if x(left, bottom) > x(right, bottom) {
        std::mem::swap(&mut left, &mut right);
    }
    let polygon = vec![
        (x(left, top), top),
        (x(right, top), top),
        (x(right, bottom), bottom),
        (x(left, bottom), bottom),
    ];
    Ok((RoiMask::from_polygon(width, height, polygon)?, v_h))
}

#[cfg(test)]
mod tests {
    use super::*;

    const CAMERA1_VH: f64 = 289.45;

    #[test]
    fn lambda_unit_case() {
        let l = calibrate_lambda(110.0, 210.0, 10.0, 1.0).unwrap();
        assert!((l - 200.0).abs() < 1e-9);
    }

    #[test]
    fn lambda_matches_camera1_anchors() {
        let l15 = calibrate_lambda(544.0, 650.0, CAMERA1_VH, 15.0).unwrap();
        let l9 = calibrate_lambda(577.0, 650.0, CAMERA1_VH, 9.0).unwrap();
        assert!(((l15 - 12987.24) / 12987.24).abs() < 0.005);
        assert!(((l9 - 12781.79) / 12781.79).abs() < 0.005);
    }

    #[test]
    fn lambda_rejects_bad_anchors() {
        assert!(calibrate_lambda(300.0, 200.0, 100.0, 15.0).is_err());
        assert!(calibrate_lambda(200.0, 300.0, 250.0, 15.0).is_err());
        assert!(calibrate_lambda(200.0, 300.0, 100.0, 0.0).is_err());
    }

    #[test]
    fn row_to_distance_cases() {
        assert!((row_to_distance(CAMERA1_VH + 500.0, CAMERA1_VH, 500.0).unwrap() - 1.0).abs() < 1e-12);
        let d = row_to_distance(650.0, CAMERA1_VH, 12987.24).unwrap();
        assert!((d - 36.02).abs() < 0.005);
        assert_eq!(
            row_to_distance(CAMERA1_VH, CAMERA1_VH, 1.0),
            Err(GeometryError::BelowHorizon {
                v: CAMERA1_VH,
                v_h: CAMERA1_VH
            })
        );
    }

    #[test]
    fn anchors_are_reproduced() {
        let g = CameraGeometry::calibrate(CAMERA1_VH, 544.0, 650.0, 15.0).unwrap();
        let gap = g.row_to_distance(g.v_1).unwrap() - g.row_to_distance(g.v_2).unwrap();
        assert!(((gap - 15.0) / 15.0).abs() < 1e-9);
    }

    #[test]
    fn polar_line_through_points() {
        let l = PolarLine::through((0.0, 0.0), (10.0, 10.0));
        assert!((l.theta_deg - 135.0).abs() < 1e-9);
        assert!(l.rho.abs() < 1e-9);
        assert!((l.x_at(5.0).unwrap() - 5.0).abs() < 1e-9);
        assert!((l.dx_dy() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn intersection_of_lane_pair() {
        let a = PolarLine::through((100.0, 479.0), (320.0, CAMERA1_VH));
        let b = PolarLine::through((560.0, 479.0), (320.0, CAMERA1_VH));
        let (x, y) = a.intersection(&b).unwrap();
        assert!((x - 320.0).abs() < 1e-9 && (y - CAMERA1_VH).abs() < 1e-9);
    }

    #[test]
    fn roi_horizon_from_analytic_lanes() {
        let (w, h) = (640, 540);
        let a = PolarLine::through((60.0, 539.0), (330.0, CAMERA1_VH));
        let b = PolarLine::through((600.0, 539.0), (330.0, CAMERA1_VH));
        let (roi, v_h) = build_roi(&[a, b], w, h, DEFAULT_H_MARGIN).unwrap();
        assert!((v_h - CAMERA1_VH).abs() < 2.0);
        let first_row = roi.rows().next().unwrap() as f64;
        assert!(first_row >= v_h + DEFAULT_H_MARGIN && first_row < v_h + DEFAULT_H_MARGIN + 1.0);
        assert!(roi.contains(330, 530));
        assert!(!roi.contains(5, 530));
    }

    #[test]
    fn roi_symmetric_for_mirrored_lines() {
        let (w, h) = (101, 81);
        let (cx, cy) = (50.0, 40.0);
        let line = |deg: f64| {
            let t = deg.to_radians();
            PolarLine::new(cx * t.cos() + cy * t.sin(), deg)
        };
        let (roi, v_h) = build_roi(&[line(45.0), line(135.0)], w, h, 0.0).unwrap();
        assert!((v_h - cy).abs() < 1e-9);
        for y in 0..h {
            for x in 0..w {
                assert_eq!(roi.contains(x, y), roi.contains(w - 1 - x, y), "({x},{y})");
            }
        }
    }

    #[test]
    fn parallel_lines_are_degenerate() {
        let a = PolarLine::new(100.0, 30.0);
        let b = PolarLine::new(200.0, 30.0);
        assert!(matches!(
            trapezoid_from_pair(&a, &b, 200, 200, 10.0),
            Err(GeometryError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn far_intersection_is_degenerate() {
        let a = PolarLine::through((0.0, 99.0), (1.0, -1000.0));
        let b = PolarLine::through((99.0, 99.0), (98.0, -1000.0));
        assert!(matches!(
            trapezoid_from_pair(&a, &b, 100, 100, 10.0),
            Err(GeometryError::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn black_frame_has_no_lines() {
        let frame = GrayFrame::filled(50, 50, 0.0).unwrap();
        assert_eq!(
            detect_lane_lines(&frame, &LineDetection::default()),
            Err(GeometryError::NoLinesFound { threshold: 40 })
        );
    }

    #[test]
    fn rasterized_mask_matches_point_test() {
        let poly = vec![(2.5, 1.0), (7.2, 1.0), (9.0, 8.0), (0.3, 8.0)];
        let roi = RoiMask::from_polygon(10, 10, poly.clone()).unwrap();
        for y in 0..10 {
            for x in 0..10 {
                let (xf, yf) = (x as f64, y as f64);
                let inside = (1.0..=8.0).contains(&yf) && {
                    let t = (yf - 1.0) / 7.0;
                    let xl = 2.5 + t * (0.3 - 2.5);
                    let xr = 7.2 + t * (9.0 - 7.2);
                    xf >= xl && xf <= xr
                };
                assert_eq!(roi.contains(x, y), inside, "({x},{y})");
            }
        }
    }

    #[test]
    fn tiny_roi_rejected() {
        let poly = vec![(0.0, 0.0), (0.4, 0.0), (0.0, 0.4)];
        assert!(matches!(
            RoiMask::from_polygon(20, 20, poly),
            Err(GeometryError::RoiTooSmall { .. })
        ));
    }
}
