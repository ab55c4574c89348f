//! Request and response bodies. The JSON schemas under `schemas/` are
//! generated from these types.

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use spev_core::subjective::{AnnotationRecord, SubjectiveVisibility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    pub camera_id: String,
    /// Frame indices to annotate, in presentation order. Repeated indices
    /// are kept once.
    pub frames: Vec<u64>,
    pub subject_id: String,
}

/// A session as persisted in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Session {
    pub session_id: String,
    pub camera_id: String,
    pub subject_id: String,
    pub frames: Vec<u64>,
    pub required_repetitions: u8,
    /// RFC 3339 UTC.
    pub created_at: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, JsonSchema)]
#[serde(rename_all = "lowercase")]
pub enum SessionStatus {
    Open,
    Complete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct FrameProgress {
    pub frame_index: u64,
    /// Recorded repetition numbers, ascending.
    pub repetitions: Vec<u8>,
    /// Median marked row so far; absent before the first mark.
    pub median_v_v: Option<f64>,
}

/// A session with its derived status and per-frame progress.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: Session,
    pub status: SessionStatus,
    pub progress: Vec<FrameProgress>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRequest {
    pub frame_index: u64,
    /// 1 through 5.
    pub repetition: u8,
    /// Marked critical row in image pixels; fractional values allowed.
    pub v_v: f64,
}

/// One stored marking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct Annotation {
    pub session_id: String,
    pub camera_id: String,
    pub frame_index: u64,
    pub subject_id: String,
    pub repetition: u8,
    pub v_v: f64,
    pub created_at: String,
}

impl From<AnnotationRecord> for Annotation {
    fn from(r: AnnotationRecord) -> Self {
        Self {
            session_id: r.session_id,
            camera_id: r.camera_id,
            frame_index: r.frame_index,
            subject_id: r.subject_id,
            repetition: r.repetition,
            v_v: r.v_v,
            created_at: r.created_at,
        }
    }
}

impl From<Annotation> for AnnotationRecord {
    fn from(a: Annotation) -> Self {
        Self {
            session_id: a.session_id,
            camera_id: a.camera_id,
            frame_index: a.frame_index,
            subject_id: a.subject_id,
            repetition: a.repetition,
            v_v: a.v_v,
            created_at: a.created_at,
        }
    }
}

/// Distances of the current median row under both calibrations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct LiveVisibility {
    pub vis_15: f64,
    pub vis_9: f64,
    pub vis_mean: f64,
}

impl From<SubjectiveVisibility> for LiveVisibility {
    fn from(v: SubjectiveVisibility) -> Self {
        Self {
            vis_15: v.vis_15,
            vis_9: v.vis_9,
            vis_mean: v.vis_mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct AnnotationResponse {
    pub record: Annotation,
    /// Marks recorded for this frame in this session, including this one.
    pub n_repetitions: usize,
    pub median_v_v: f64,
    pub vis: LiveVisibility,
    pub session_status: SessionStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, JsonSchema)]
pub struct ErrorBody {
    /// Machine-readable kind, e.g. `DuplicateRepetition`.
    pub error: String,
    pub message: String,
}
