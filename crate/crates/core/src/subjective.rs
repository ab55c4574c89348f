//! Ground-truth visibility from human critical-point markings.
//!
//! Each subject marks the row `v_v` where the road stops being discernible,
//! five times per frame; the median of a subject's marks is their answer.
//! Subject medians are averaged into one row, which the two camera
//! calibrations turn into two distances whose mean is the reference.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::entropy::median;
use crate::geometry::DualGeometry;

pub const REQUIRED_REPETITIONS: u8 = 5;

#[derive(Debug, Error, PartialEq)]
pub enum SubjectiveError {
    #[error("no annotation records")]
    NoRecords,
    #[error("critical row {v_v} is at or above the horizon row {v_h}")]
    BelowHorizon { v_v: f64, v_h: f64 },
}

/// One human marking of the critical row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub session_id: String,
    pub camera_id: String,
    pub frame_index: u64,
    pub subject_id: String,
    /// 1 through 5.
    pub repetition: u8,
    pub v_v: f64,
    /// RFC 3339 wall-clock time.
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubjectiveVisibility {
    pub vis_15: f64,
    pub vis_9: f64,
    pub vis_mean: f64,
}

/// Median marked row; the mean of the middle pair for even counts.
pub fn median_vv(records: &[AnnotationRecord]) -> Result<f64, SubjectiveError> {
    let rows: Vec<f64> = records.iter().map(|r| r.v_v).collect();
    median(&rows).ok_or(SubjectiveError::NoRecords)
}

/// Distances of row `v_v` under both calibrations and their mean.
pub fn subjective_visibility(v_v: f64, geoms: &DualGeometry) -> Result<SubjectiveVisibility, SubjectiveError> {
    let vis = |g: &crate::geometry::CameraGeometry| {
        g.row_to_distance(v_v)
            .map_err(|_| SubjectiveError::BelowHorizon { v_v, v_h: g.v_h })
    };
    let vis_15 = vis(&geoms.g15)?;
    let vis_9 = vis(&geoms.g9)?;
    Ok(SubjectiveVisibility {
        vis_15,
        vis_9,
        vis_mean: 0.5 * (vis_15 + vis_9),
    })
}

/// Averages the subjects' median rows, then converts that row to distance.
/// Returns the averaged row alongside the visibility.
pub fn aggregate_subjects(
    per_subject_medians: &[f64],
    geoms: &DualGeometry,
) -> Result<(f64, SubjectiveVisibility), SubjectiveError> {
    if per_subject_medians.is_empty() {
        return Err(SubjectiveError::NoRecords);
    }
    let mean_row = per_subject_medians.iter().sum::<f64>() / per_subject_medians.len() as f64;
    Ok((mean_row, subjective_visibility(mean_row, geoms)?))
}

/// One row of the ground-truth CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRow {
    pub frame_index: u64,
    pub camera_id: String,
    pub v_v_agg: f64,
    pub vis_15: f64,
    pub vis_9: f64,
    pub vis_mean: f64,
    pub n_subjects: usize,
}

pub const GROUND_TRUTH_HEADER: &str = "frame_index,camera_id,v_v_agg,vis_15,vis_9,vis_mean,n_subjects";

impl GroundTruthRow {
    pub fn to_csv_line(&self) -> String {
        use crate::fmt_sig;
        format!(
            "{},{},{},{},{},{},{}",
            self.frame_index,
            self.camera_id,
            fmt_sig(self.v_v_agg),
            fmt_sig(self.vis_15),
            fmt_sig(self.vis_9),
            fmt_sig(self.vis_mean),
            self.n_subjects
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn camera1_anchors() -> DualGeometry {
        DualGeometry::calibrate(289.45, 544.0, 577.0, 650.0, 15.0, 9.0).unwrap()
    }

    fn records(rows: &[f64]) -> Vec<AnnotationRecord> {
        rows.iter()
            .enumerate()
            .map(|(i, &v_v)| AnnotationRecord {
                session_id: "s".into(),
                camera_id: "c".into(),
                frame_index: 0,
                subject_id: "u".into(),
                repetition: i as u8 + 1,
                v_v,
                created_at: String::new(),
            })
            .collect()
    }

    #[test]
    fn median_cases() {
        assert_eq!(median_vv(&records(&[650.0, 648.0, 652.0, 651.0, 649.0])), Ok(650.0));
        assert_eq!(median_vv(&records(&[650.0])), Ok(650.0));
        assert_eq!(median_vv(&records(&[648.0, 652.0])), Ok(650.0));
        assert_eq!(median_vv(&[]), Err(SubjectiveError::NoRecords));
    }

    #[test]
    fn camera1_anchors_at_650() {
        let v = subjective_visibility(650.0, &camera1_anchors()).unwrap();
        assert!((v.vis_15 - 36.02).abs() < 0.01, "{}", v.vis_15);
        assert!((v.vis_9 - 35.45).abs() < 0.01, "{}", v.vis_9);
        assert!((v.vis_mean - 35.74).abs() < 0.01, "{}", v.vis_mean);
    }

    #[test]
    fn unit_distance_row() {
        let g = camera1_anchors();
        let v = subjective_visibility(g.v_h() + g.g15.lambda, &g).unwrap();
        assert!((v.vis_15 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn at_horizon_is_an_error() {
        assert!(matches!(
            subjective_visibility(289.45, &camera1_anchors()),
            Err(SubjectiveError::BelowHorizon { .. })
        ));
        assert!(subjective_visibility(100.0, &camera1_anchors()).is_err());
    }

    #[test]
    fn aggregation_cases() {
        let g = camera1_anchors();
        let (row, single) = aggregate_subjects(&[650.0], &g).unwrap();
        assert_eq!(row, 650.0);
        assert_eq!(single, subjective_visibility(650.0, &g).unwrap());
        let (row, pair) = aggregate_subjects(&[640.0, 660.0], &g).unwrap();
        assert_eq!(row, 650.0);
        assert_eq!(pair, single);
        assert_eq!(aggregate_subjects(&[], &g), Err(SubjectiveError::NoRecords));
    }
}
