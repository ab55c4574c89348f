use proptest::prelude::*;
use spev_core::frame::{gaussian_smooth, median_denoise, GrayFrame};

/// Direct 2-D convolution with the outer-product kernel and clamped
/// (edge-replicated) coordinates.
fn brute_force_smooth(f: &GrayFrame, sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as isize;
    let k1: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let norm: f64 = k1.iter().sum();
    let (w, h) = f.dims();
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let sx = (x + dx).clamp(0, w as isize - 1) as usize;
                    let sy = (y + dy).clamp(0, h as isize - 1) as usize;
                    acc += k1[(dy + r) as usize] * k1[(dx + r) as usize] * f.get(sx, sy);
                }
            }
            out.push(acc / (norm * norm));
        }
    }
    out
}

fn frame_strategy() -> impl Strategy<Value = GrayFrame> {
    (2usize..12, 2usize..12).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h).prop_map(move |d| GrayFrame::new(w, h, d).unwrap())
    })
}

proptest! {
    #[test]
    fn separable_smoothing_matches_2d_convolution(
        f in frame_strategy(),
        sigma in 0.3f64..3.0,
        radius in 1usize..4,
    ) {
        let fast = gaussian_smooth(&f, sigma, radius).unwrap();
        let slow = brute_force_smooth(&f, sigma, radius);
        for (a, b) in fast.data().iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn smoothing_stays_within_input_range(f in frame_strategy(), sigma in 0.3f64..3.0, radius in 1usize..4) {
        let lo = f.data().iter().copied().fold(f64::INFINITY, f64::min);
        let hi = f.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s = gaussian_smooth(&f, sigma, radius).unwrap();
        for v in s.data() {
            prop_assert!(*v >= lo - 1e-12 && *v <= hi + 1e-12);
        }
    }

    #[test]
    fn median_denoise_stays_within_neighbourhood(f in frame_strategy()) {
        let m = median_denoise(&f);
        let (w, h) = f.dims();
        for y in 0..h {
            for x in 0..w {
                let mut hood = Vec::new();
                for dy in -1isize..=1 {
                    for dx in -1isize..=1 {
                        let sx = (x as isize + dx).clamp(0, w as isize - 1) as usize;
                        let sy = (y as isize + dy).clamp(0, h as isize - 1) as usize;
                        hood.push(f.get(sx, sy));
                    }
                }
                hood.sort_by(f64::total_cmp);
                prop_assert_eq!(m.get(x, y), hood[4]);
            }
        }
    }
}

#[test]
fn smoothing_a_constant_frame_is_identity() {
    let f = GrayFrame::filled(9, 7, 0.37).unwrap();
    let s = gaussian_smooth(&f, 1.0, 2).unwrap();
    assert!(s.data().iter().all(|v| (v - 0.37).abs() < 1e-15));
}
