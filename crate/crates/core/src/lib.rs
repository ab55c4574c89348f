//! Entropy-based visibility estimation for expressway surveillance frames.
//!
//! The pipeline stages map onto modules:
//!
//! 1. [`frame`] – load 8-bit rasters into `[0, 1]` intensities, smooth, de-noise.
//! 2. [`geometry`] – lane-line detection, pavement ROI, row-to-distance calibration.
//! 3. [`entropy`] – ROI intensity entropy, clear-day baseline, relative ratio `H_r`.
//! 4. [`model`] – the piecewise cubic `H_r → visibility` model: fitting and inference.
//! 5. [`evaluation`] – relative error, summaries, leave-one-camera-out folds.
//!
//! Supporting modules: [`fog`] synthesizes foggy frames with known visibility,
//! [`scene`] renders clear road scenes for it, [`contrast`] is the 5%-contrast
//! comparison estimator, and [`subjective`] turns human markings into
//! reference visibility.

pub mod contrast;
pub mod entropy;
pub mod evaluation;
pub mod fog;
pub mod frame;
pub mod geometry;
pub mod model;
pub mod scene;
pub mod subjective;

pub use entropy::{ClearBaseline, EntropyValue};
pub use frame::{GrayFrame, Smoothing};
pub use geometry::{CameraGeometry, DualGeometry, RoiMask};
pub use model::{PiecePoly, PiecewiseModel};

/// Formats `x` with 6 significant digits in plain decimal notation, trailing
/// zeros trimmed. Used for every float written to CSV so outputs are
/// byte-stable.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{x:.5e}");
    let exp: i32 = sci[sci.find('e').expect("exponent") + 1..]
        .parse()
        .expect("integer exponent");
    let decimals = (5 - exp).max(0) as usize;
    let mut s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.truncate(s.trim_end_matches('0').trim_end_matches('.').len());
    }
    if s == "-0" {
        s = "0".into();
    }
    s
}
