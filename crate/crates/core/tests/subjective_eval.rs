use std::collections::BTreeMap;

use proptest::prelude::*;
use spev_core::evaluation::{leave_one_out, spearman, summarize, FitConfig, LabelledSample};
use spev_core::geometry::DualGeometry;
use spev_core::model::{fit, FitInterval, FlipSpec};
use spev_core::subjective::{aggregate_subjects, median_vv, subjective_visibility, AnnotationRecord};

fn row1() -> DualGeometry {
    DualGeometry::calibrate(289.45, 544.0, 577.0, 650.0, 15.0, 9.0).unwrap()
}

fn record(v_v: f64, rep: u8) -> AnnotationRecord {
    AnnotationRecord {
        session_id: "s".into(),
        camera_id: "c".into(),
        frame_index: 0,
        subject_id: "p".into(),
        repetition: rep,
        v_v,
        created_at: "2020-01-01T00:00:00Z".into(),
    }
}

/// Median by sorting, written out.
fn median_oracle(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        (s[n / 2 - 1] + s[n / 2]) / 2.0
    }
}

#[test]
fn near_anchor_row_distances() {
    let v = subjective_visibility(650.0, &row1()).unwrap();
    assert!((v.vis_15 - 36.02).abs() / 36.02 < 0.005, "{}", v.vis_15);
    assert!((v.vis_9 - 35.45).abs() / 35.45 < 0.005, "{}", v.vis_9);
    assert_eq!(v.vis_mean, 0.5 * (v.vis_15 + v.vis_9));
}

#[test]
fn both_calibrations_agree_closely() {
    let rows = [
        (311.41, 733.0, 791.0, 919.0),
        (334.20, 805.0, 885.0, 1076.0),
        (340.47, 714.0, 762.0, 865.0),
        (455.48, 829.0, 880.0, 992.0),
        (289.45, 544.0, 577.0, 650.0),
    ];
    for (vh, v15, v9, v2) in rows {
        let g = DualGeometry::calibrate(vh, v15, v9, v2, 15.0, 9.0).unwrap();
        for v_v in [v15, v9, v2, 0.5 * (vh + v15)] {
            let s = subjective_visibility(v_v, &g).unwrap();
            assert!((s.vis_15 - s.vis_9).abs() / s.vis_15 < 0.03);
        }
    }
}

proptest! {
    #[test]
    fn median_ignores_order(mut rows in prop::collection::vec(300.0f64..700.0, 1..12), rot in 0usize..12) {
        let want = median_oracle(&rows);
        let k = rot % rows.len();
        rows.rotate_left(k);
        rows.reverse();
        let recs: Vec<AnnotationRecord> = rows.iter().enumerate().map(|(i, v)| record(*v, i as u8 + 1)).collect();
        prop_assert_eq!(median_vv(&recs).unwrap(), want);
    }

    #[test]
    fn aggregation_matches_brute_force(marks in prop::collection::vec(prop::collection::vec(300.0f64..700.0, 5), 1..=36)) {
        let medians: Vec<f64> = marks
            .iter()
            .map(|m| {
                let recs: Vec<AnnotationRecord> = m.iter().enumerate().map(|(i, v)| record(*v, i as u8 + 1)).collect();
                median_vv(&recs).unwrap()
            })
            .collect();
        for (m, per) in medians.iter().zip(&marks) {
            prop_assert_eq!(*m, median_oracle(per));
        }
        let g = row1();
        let (row, vis) = aggregate_subjects(&medians, &g).unwrap();
        let mean_row = medians.iter().sum::<f64>() / medians.len() as f64;
        prop_assert!((row - mean_row).abs() < 1e-9);
        let d15 = g.g15.lambda / (mean_row - 289.45);
        let d9 = g.g9.lambda / (mean_row - 289.45);
        prop_assert!((vis.vis_15 - d15).abs() < 1e-9 * d15);
        prop_assert!((vis.vis_9 - d9).abs() < 1e-9 * d9);
        prop_assert!((vis.vis_mean - 0.5 * (d15 + d9)).abs() < 1e-9 * d15);
    }

    #[test]
    fn lower_rows_are_closer(a in 290.0f64..1000.0, b in 290.0f64..1000.0) {
        prop_assume!((a - b).abs() > 1e-6);
        let (up, down) = if a < b { (a, b) } else { (b, a) };
        let g = row1();
        prop_assert!(subjective_visibility(down, &g).unwrap().vis_mean < subjective_visibility(up, &g).unwrap().vis_mean);
    }

    #[test]
    fn summary_ignores_order(mut apes in prop::collection::vec(-50.0f64..50.0, 1..40)) {
        let a = summarize(&apes).unwrap();
        apes.reverse();
        let b = summarize(&apes).unwrap();
        prop_assert_eq!(a.frac_under_10pct, b.frac_under_10pct);
        prop_assert_eq!(a.frac_under_20pct, b.frac_under_20pct);
        prop_assert_eq!(a.min_ape, b.min_ape);
        prop_assert_eq!(a.max_ape, b.max_ape);
        prop_assert!((a.mean_abs_ape - b.mean_abs_ape).abs() < 1e-9);
    }
}

#[test]
fn rows_above_horizon_are_rejected() {
    assert!(subjective_visibility(289.0, &row1()).is_err());
}

fn camera_samples(offset: f64) -> Vec<LabelledSample> {
    (0..120)
        .map(|i| {
            let vis = 590.0 - i as f64 * 4.8;
            LabelledSample {
                frame_index: i,
                h_r: 10.0 + (600.0 - vis) / 600.0 + offset,
                vis_ref: vis,
            }
        })
        .collect()
}

#[test]
fn held_out_camera_never_trains_its_model() {
    let mut data = BTreeMap::new();
    data.insert("a".to_string(), camera_samples(0.0));
    data.insert("b".to_string(), camera_samples(0.01));
    data.insert("c".to_string(), camera_samples(-0.02));
    let config = FitConfig {
        intervals: vec![FitInterval::new(0.0, 300.0, &[1]), FitInterval::new(300.0, 600.0, &[1])],
        flip: FlipSpec::default(),
        denominator: Default::default(),
    };
    let reports = leave_one_out(&data, &["b".to_string()], &config).unwrap();
    let b = &reports["b"];
    assert_eq!(b.training_cameras, vec!["a".to_string(), "c".to_string()]);
    let train: Vec<_> = data["a"]
        .iter()
        .chain(&data["c"])
        .map(|s| spev_core::model::Sample {
            x: s.h_r,
            vis: s.vis_ref,
        })
        .collect();
    let direct = fit(&train, &config.intervals, config.flip, "loo-b").unwrap();
    assert_eq!(b.model, direct);
    assert_eq!(b.rows.len(), 120);
    let est: Vec<f64> = b.rows.iter().map(|r| r.vis_est).collect();
    let truth: Vec<f64> = b.rows.iter().map(|r| r.vis_ref).collect();
    assert!(spearman(&est, &truth).unwrap() > 0.99);
}

#[test]
fn spearman_cases() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 1.0], &[1.0, 2.0]), None);
}
