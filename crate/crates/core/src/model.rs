//! Piecewise-stationary visibility model.
//!
//! Visibility is a cubic in the relative entropy ratio `x = H_r`, with a
//! separate set of coefficients for each visibility sub-interval:
//!
//! ```text
//! vis = α·x + β·x² + γ·x³ + η
//! ```
//!
//! Intervals are expressed in the output's units (meters), so choosing the
//! piece at inference time is itself part of the model: a piece is a
//! candidate when its output lands inside its own interval, and among
//! candidates the one closest to the previous estimate wins.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Visibility range the model covers, meters.
pub const VIS_RANGE: (f64, f64) = (0.0, 600.0);

const SHIPPED_JSON: &str = include_str!("../assets/shipped_model.json");

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("model has no pieces")]
    EmptyModel,
    #[error("malformed model file: {0}")]
    MalformedModelFile(String),
    #[error("intervals [{0}, {1}) and [{2}, {3}) overlap")]
    OverlappingIntervals(f64, f64, f64, f64),
    #[error("interval [{lo}, {hi}) has {got} samples, needs at least {needed}")]
    InsufficientData {
        lo: f64,
        hi: f64,
        got: usize,
        needed: usize,
    },
    #[error("design matrix for interval [{lo}, {hi}) is rank-deficient")]
    SingularDesign { lo: f64, hi: f64 },
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
}

/// One cubic piece and the visibility interval it is responsible for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiecePoly {
    pub lo: f64,
    pub hi: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub eta: f64,
}

impl PiecePoly {
    pub fn eval(&self, x: f64) -> f64 {
        eval_piece(self, x)
    }

    /// `[η, α, β, γ]`, i.e. coefficients of `x⁰..x³`.
    pub fn coefficients(&self) -> [f64; 4] {
        [self.eta, self.alpha, self.beta, self.gamma]
    }

    /// Membership in `[lo, hi)`, or `[lo, hi]` when `closed`.
    fn contains(&self, v: f64, closed: bool) -> bool {
        v >= self.lo && (v < self.hi || (closed && v <= self.hi))
    }

    fn distance_to(&self, v: f64) -> f64 {
        if v < self.lo {
            self.lo - v
        } else if v > self.hi {
            v - self.hi
        } else {
            0.0
        }
    }
}

/// `α·x + β·x² + γ·x³ + η`.
pub fn eval_piece(piece: &PiecePoly, x: f64) -> f64 {
    // Horner form keeps the cancellation between large coefficients tame.
    ((piece.gamma * x + piece.beta) * x + piece.alpha) * x + piece.eta
}

/// Reflection of the entropy-ratio series about the midpoint of `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipSpec {
    pub enabled: bool,
    pub lo: f64,
    pub hi: f64,
}

impl Default for FlipSpec {
    fn default() -> Self {
        Self {
            enabled: false,
            lo: 10.0,
            hi: 11.0,
        }
    }
}

impl FlipSpec {
    pub fn apply(&self, x: f64) -> f64 {
        if self.enabled {
            self.lo + self.hi - x
        } else {
            x
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.enabled && !(self.lo < self.hi) {
            return Err(format!("flip bounds need lo < hi, got {} and {}", self.lo, self.hi));
        }
        Ok(())
    }
}

/// `x ↦ (lo + hi) − x` when enabled, identity otherwise.
pub fn mirror_flip(series: &[f64], spec: &FlipSpec) -> Vec<f64> {
    series.iter().map(|&x| spec.apply(x)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseModel {
    pub version: String,
    pub flip: FlipSpec,
    pub pieces: Vec<PiecePoly>,
}

/// Output of [`PiecewiseModel::predict`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub vis: f64,
    /// 1-based piece number `n`.
    pub piece: usize,
    /// Whether the chosen piece's raw output fell inside its own interval.
    pub self_consistent: bool,
}

impl PiecewiseModel {
    pub fn new(version: &str, flip: FlipSpec, pieces: Vec<PiecePoly>) -> Result<Self, ModelError> {
        let model = Self {
            version: version.to_string(),
            flip,
            pieces,
        };
        model.validate()?;
        Ok(model)
    }

    /// The 16-piece coefficient table shipped in `assets/shipped_model.json`.
    pub fn shipped() -> Self {
        load_model(SHIPPED_JSON.as_bytes()).expect("bundled model asset is valid")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.pieces.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        self.flip.validate().map_err(ModelError::MalformedModelFile)?;
        for p in &self.pieces {
            let finite = [p.lo, p.hi, p.alpha, p.beta, p.gamma, p.eta]
                .iter()
                .all(|v| v.is_finite());
            if !finite {
                return Err(ModelError::MalformedModelFile("non-finite value in piece".into()));
            }
            if !(p.lo < p.hi) {
                return Err(ModelError::MalformedModelFile(format!(
                    "interval [{}, {}) is empty",
                    p.lo, p.hi
                )));
            }
        }
        let mut sorted = self.pieces.clone();
        sorted.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        for pair in sorted.windows(2) {
            if pair[1].lo < pair[0].hi {
                return Err(ModelError::OverlappingIntervals(
                    pair[0].lo, pair[0].hi, pair[1].lo, pair[1].hi,
                ));
            }
        }
        if sorted != self.pieces {
            return Err(ModelError::MalformedModelFile(
                "pieces are not in ascending order".into(),
            ));
        }
        for pair in self.pieces.windows(2) {
            if pair[1].lo != pair[0].hi {
                return Err(ModelError::MalformedModelFile(format!(
                    "gap between {} and {}",
                    pair[0].hi, pair[1].lo
                )));
            }
        }
        let (first, last) = (self.pieces[0].lo, self.pieces[self.pieces.len() - 1].hi);
        if first != VIS_RANGE.0 || last != VIS_RANGE.1 {
            return Err(ModelError::MalformedModelFile(format!(
                "intervals cover [{first}, {last}], expected [{}, {}]",
                VIS_RANGE.0, VIS_RANGE.1
            )));
        }
        Ok(())
    }

    fn is_last(&self, i: usize) -> bool {
        i + 1 == self.pieces.len()
    }

    /// Picks a piece for entropy ratio `x` and evaluates it.
    ///
    /// Candidates are pieces whose output lies in their own interval. With a
    /// previous estimate the candidate closest to it wins; without one the
    /// lowest-visibility candidate wins. If nothing is self-consistent, the
    /// piece whose output lands nearest its interval is used and its output
    /// is clamped into that interval. Ties go to the lower piece number.
    /// `x` is used as given; [`FlipSpec::apply`] is the caller's business.
    pub fn predict(&self, x: f64, prev_estimate: Option<f64>) -> Result<Prediction, ModelError> {
        if self.pieces.is_empty() {
            return Err(ModelError::EmptyModel);
        }
        let outputs: Vec<f64> = self.pieces.iter().map(|p| p.eval(x)).collect();
        let candidates: Vec<usize> = (0..self.pieces.len())
            .filter(|&i| self.pieces[i].contains(outputs[i], self.is_last(i)))
            .collect();

        let (index, vis, self_consistent) = if candidates.is_empty() {
            let mut best = 0;
            for i in 1..self.pieces.len() {
                let d = self.pieces[i].distance_to(outputs[i]);
                if d < self.pieces[best].distance_to(outputs[best]) || outputs[best].is_nan() {
                    best = i;
                }
            }
            let p = &self.pieces[best];
            (best, outputs[best].clamp(p.lo, p.hi), false)
        } else {
            let chosen = match prev_estimate {
                Some(prev) => *candidates
                    .iter()
                    .min_by(|&&a, &&b| {
                        (outputs[a] - prev)
                            .abs()
                            .total_cmp(&(outputs[b] - prev).abs())
                            .then(a.cmp(&b))
                    })
                    .expect("non-empty"),
                None => candidates[0],
            };
            (chosen, outputs[chosen], true)
        };
        Ok(Prediction {
            vis: vis.clamp(VIS_RANGE.0, VIS_RANGE.1),
            piece: index + 1,
            self_consistent,
        })
    }
}

pub fn save_model(model: &PiecewiseModel) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(model).expect("model serializes");
    bytes.push(b'\n');
    bytes
}

pub fn load_model(bytes: &[u8]) -> Result<PiecewiseModel, ModelError> {
    let model: PiecewiseModel =
        serde_json::from_slice(bytes).map_err(|e| ModelError::MalformedModelFile(e.to_string()))?;
    model.validate()?;
    Ok(model)
}

/// One fitting interval and the powers of `x` used in it (the constant term
/// is always included).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitInterval {
    pub lo: f64,
    pub hi: f64,
    pub powers: BTreeSet<u8>,
}

impl FitInterval {
    pub fn new(lo: f64, hi: f64, powers: &[u8]) -> Self {
        Self {
            lo,
            hi,
            powers: powers.iter().copied().collect(),
        }
    }
}

/// Interval layout and powers of the shipped table: quadratic for the six
/// pieces below 100 m, cubic above.
pub fn shipped_layout() -> Vec<FitInterval> {
    PiecewiseModel::shipped()
        .pieces
        .iter()
        .map(|p| {
            let powers: &[u8] = if p.gamma == 0.0 { &[1, 2] } else { &[1, 2, 3] };
            FitInterval::new(p.lo, p.hi, powers)
        })
        .collect()
}

/// A training pair: entropy ratio and reference visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: f64,
    pub vis: f64,
}

/// Relative rank tolerance on the triangular factor.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares per interval. Samples are grouped by `vis`
/// (`[lo, hi)`, last interval closed); samples outside every interval are
/// ignored. Sample order does not affect the result.
pub fn fit(
    samples: &[Sample],
    intervals: &[FitInterval],
    flip: FlipSpec,
    version: &str,
) -> Result<PiecewiseModel, ModelError> {
    if intervals.is_empty() {
        return Err(ModelError::EmptyModel);
    }
    for iv in intervals {
        if iv.powers.is_empty() || iv.powers.iter().any(|p| !(1..=3).contains(p)) {
            return Err(ModelError::InvalidConfig(format!(
                "powers for [{}, {}) must be a non-empty subset of {{1, 2, 3}}",
                iv.lo, iv.hi
            )));
        }
    }
    let mut sorted: Vec<Sample> = samples
        .iter()
        .copied()
        .filter(|s| s.x.is_finite() && s.vis.is_finite())
        .collect();
    sorted.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.vis.total_cmp(&b.vis)));

    let mut pieces = Vec::with_capacity(intervals.len());
    for (i, iv) in intervals.iter().enumerate() {
        let closed = i + 1 == intervals.len();
        let group: Vec<Sample> = sorted
            .iter()
            .copied()
            .filter(|s| s.vis >= iv.lo && (s.vis < iv.hi || (closed && s.vis <= iv.hi)))
            .collect();
        let needed = iv.powers.len() + 2;
        if group.len() < needed {
            return Err(ModelError::InsufficientData {
                lo: iv.lo,
                hi: iv.hi,
                got: group.len(),
                needed,
            });
        }
        let coef = least_squares(&group, &iv.powers).ok_or(ModelError::SingularDesign { lo: iv.lo, hi: iv.hi })?;
        pieces.push(PiecePoly {
            lo: iv.lo,
            hi: iv.hi,
            eta: coef[0],
            alpha: coef[1],
            beta: coef[2],
            gamma: coef[3],
        });
    }
    PiecewiseModel::new(version, flip, pieces)
}

/// Returns raw monomial coefficients `[c0, c1, c2, c3]` with zeros for
/// excluded powers, or `None` when the design is rank-deficient.
///
/// The regression runs on `t = (x − m)/s` for numerical conditioning and the
/// result is expanded back into powers of `x`. The shift is only used when
/// the power set is `{1..k}`, since otherwise it would leak into excluded
/// powers.
fn least_squares(samples: &[Sample], powers: &BTreeSet<u8>) -> Option<[f64; 4]> {
    let n = samples.len() as f64;
    let contiguous = powers.iter().copied().eq(1..=powers.len() as u8);
    let shift = if contiguous {
        samples.iter().map(|s| s.x).sum::<f64>() / n
    } else {
        0.0
    };
    let scale = samples.iter().map(|s| (s.x - shift).abs()).fold(0.0, f64::max);
    if !(scale > 0.0) {
        return None;
    }

    let cols: Vec<u8> = std::iter::once(0).chain(powers.iter().copied()).collect();
    let design = DMatrix::from_fn(samples.len(), cols.len(), |r, c| {
        ((samples[r].x - shift) / scale).powi(cols[c] as i32)
    });
    let rhs = DVector::from_iterator(samples.len(), samples.iter().map(|s| s.vis));

    let qr = design.qr();
    let r = qr.r();
    let diag_max = r.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if r.diagonal().iter().any(|v| v.abs() <= RANK_TOL * diag_max) {
        return None;
    }
    let qty = qr.q().transpose() * rhs;
    let scaled = r.solve_upper_triangular(&qty)?;

    // Σ_j b_j ((x − m)/s)^j  →  Σ_k c_k x^k
    let mut raw = [0.0; 4];
    for (j, &power) in cols.iter().enumerate() {
        let b = scaled[j] / scale.powi(power as i32);
        for k in 0..=power {
            raw[k as usize] += b * binomial(power, k) * (-shift).powi((power - k) as i32);
        }
    }
    Some(raw)
}

fn binomial(n: u8, k: u8) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}
