use proptest::prelude::*;
use spev_core::model::{fit, FitInterval, FlipSpec, PiecePoly, PiecewiseModel, Sample};

const SPLIT: f64 = 300.0;

fn two_intervals(powers: &[u8]) -> Vec<FitInterval> {
    vec![
        FitInterval::new(0.0, SPLIT, powers),
        FitInterval::new(SPLIT, 600.0, powers),
    ]
}

/// Solves `XᵀX c = Xᵀy` by Gaussian elimination with partial pivoting, on
/// raw powers of `x`. Returns `[c0, c1, c2, c3]` with zeros for unused powers.
fn normal_equations(samples: &[Sample], powers: &[u8]) -> [f64; 4] {
    let cols: Vec<u8> = std::iter::once(0).chain(powers.iter().copied()).collect();
    let m = cols.len();
    let mut a = vec![vec![0.0; m + 1]; m];
    for s in samples {
        let row: Vec<f64> = cols.iter().map(|p| s.x.powi(*p as i32)).collect();
        for i in 0..m {
            for j in 0..m {
                a[i][j] += row[i] * row[j];
            }
            a[i][m] += row[i] * s.vis;
        }
    }
    for col in 0..m {
        let pivot = (col..m)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        let pivot_row = a[col].clone();
        for (r, row) in a.iter_mut().enumerate() {
            if r != col {
                let f = row[col] / pivot_row[col];
                for (x, p) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * p;
                }
            }
        }
    }
    let mut out = [0.0; 4];
    for (i, p) in cols.iter().enumerate() {
        out[*p as usize] = a[i][m] / a[i][i];
    }
    out
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn powers_strategy() -> impl Strategy<Value = Vec<u8>> {
    prop_oneof![
        Just(vec![1]),
        Just(vec![1, 2]),
        Just(vec![1, 2, 3]),
        Just(vec![2]),
        Just(vec![1, 3]),
    ]
}

fn group_strategy(lo: f64, hi: f64) -> impl Strategy<Value = Vec<Sample>> {
    prop::collection::vec((0.5f64..2.5, lo..hi - 1e-6), 6..=10)
        .prop_map(|v| v.into_iter().map(|(x, vis)| Sample { x, vis }).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn matches_normal_equation_oracle(
        low in group_strategy(0.0, SPLIT),
        high in group_strategy(SPLIT, 600.0),
        powers in powers_strategy(),
    ) {
        let samples: Vec<Sample> = low.iter().chain(&high).copied().collect();
        let model = fit(&samples, &two_intervals(&powers), FlipSpec::default(), "t").unwrap();
        for (piece, group) in model.pieces.iter().zip([&low, &high]) {
            let want = normal_equations(group, &powers);
            let got = piece.coefficients();
            for k in 0..4 {
                prop_assert!(close(got[k], want[k], 1e-6), "c{k}: {} vs {}", got[k], want[k]);
            }
        }
    }

    #[test]
    fn sample_order_does_not_matter(
        low in group_strategy(0.0, SPLIT),
        high in group_strategy(SPLIT, 600.0),
        powers in powers_strategy(),
        seed in any::<u64>(),
    ) {
        let samples: Vec<Sample> = low.iter().chain(&high).copied().collect();
        let mut shuffled = samples.clone();
        let mut s = seed | 1;
        for i in (1..shuffled.len()).rev() {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            shuffled.swap(i, (s % (i as u64 + 1)) as usize);
        }
        let a = fit(&samples, &two_intervals(&powers), FlipSpec::default(), "t").unwrap();
        let b = fit(&shuffled, &two_intervals(&powers), FlipSpec::default(), "t").unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn recovers_noise_free_cubic(
        eta in 380.0f64..420.0,
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
        gamma in -3.0f64..3.0,
        xs in prop::collection::btree_set(0i32..200, 6..=20),
    ) {
        let truth = PiecePoly { lo: 0.0, hi: 600.0, alpha, beta, gamma, eta };
        let samples: Vec<Sample> = xs
            .iter()
            .map(|i| {
                let x = 0.5 + *i as f64 / 100.0;
                Sample { x, vis: truth.eval(x) }
            })
            .collect();
        let model = fit(&samples, &[FitInterval::new(0.0, 600.0, &[1, 2, 3])], FlipSpec::default(), "t").unwrap();
        let got = model.pieces[0].coefficients();
        for (g, w) in got.iter().zip(truth.coefficients()) {
            prop_assert!(close(*g, w, 1e-6), "{g} vs {w}");
        }
    }

    #[test]
    fn predictions_stay_in_range(x in -50.0f64..50.0, prev in prop::option::of(0.0f64..600.0)) {
        let p = PiecewiseModel::shipped().predict(x, prev).unwrap();
        prop_assert!((0.0..=600.0).contains(&p.vis));
        prop_assert!((1..=16).contains(&p.piece));
    }

    #[test]
    fn selection_matches_enumeration(x in 9.5f64..11.5, prev in prop::option::of(0.0f64..600.0)) {
        let model = PiecewiseModel::shipped();
        let p = model.predict(x, prev).unwrap();
        let n = model.pieces.len();
        let inside = |i: usize, v: f64| {
            let q = &model.pieces[i];
            v >= q.lo && (v < q.hi || (i + 1 == n && v <= q.hi))
        };
        let outputs: Vec<f64> = model.pieces.iter().map(|q| q.eval(x)).collect();
        let consistent: Vec<usize> = (0..n).filter(|&i| inside(i, outputs[i])).collect();
        if consistent.is_empty() {
            prop_assert!(!p.self_consistent);
            let gap = |i: usize| {
                let q = &model.pieces[i];
                (q.lo - outputs[i]).max(outputs[i] - q.hi).max(0.0)
            };
            let best = (0..n).map(gap).fold(f64::INFINITY, f64::min);
            prop_assert_eq!(gap(p.piece - 1), best);
        } else {
            prop_assert!(p.self_consistent);
            let want = match prev {
                None => consistent[0],
                Some(v) => {
                    let d = consistent.iter().map(|&i| (outputs[i] - v).abs()).fold(f64::INFINITY, f64::min);
                    *consistent.iter().find(|&&i| (outputs[i] - v).abs() == d).unwrap()
                }
            };
            prop_assert_eq!(p.piece, want + 1);
            prop_assert_eq!(p.vis, outputs[want].clamp(0.0, 600.0));
        }
    }
}

#[test]
fn noisy_linear_data_fits_closely() {
    // Deterministic pseudo-noise in ±4 m (σ ≈ 2.3 m).
    let mut s = 0x1234_5678u64;
    let mut noise = || {
        s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((s >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 8.0
    };
    let truth = |x: f64| 2000.0 - 180.0 * x;
    let samples: Vec<Sample> = (0..400)
        .map(|i| {
            let x = 7.8 + i as f64 * 0.008;
            Sample {
                x,
                vis: truth(x) + noise(),
            }
        })
        .filter(|s| (0.0..=600.0).contains(&s.vis))
        .collect();
    let model = fit(&samples, &two_intervals(&[1]), FlipSpec::default(), "t").unwrap();
    let mse = samples
        .iter()
        .map(|s| {
            let i = usize::from(s.vis >= SPLIT);
            (model.pieces[i].eval(s.x) - truth(s.x)).powi(2)
        })
        .sum::<f64>()
        / samples.len() as f64;
    assert!(mse.sqrt() <= 3.0, "rmse {}", mse.sqrt());
}

#[test]
fn too_few_samples_is_an_error() {
    let samples: Vec<Sample> = (0..3)
        .map(|i| Sample {
            x: i as f64,
            vis: 100.0 + i as f64,
        })
        .collect();
    assert!(fit(
        &samples,
        &[FitInterval::new(0.0, 600.0, &[1, 2])],
        FlipSpec::default(),
        "t"
    )
    .is_err());
}
