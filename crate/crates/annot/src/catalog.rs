//! Cameras the service knows about: calibration and frame sources.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use spev_core::frame::{load_frame, GrayFrame};
use spev_core::geometry::DualGeometry;

use crate::error::AnnotError;

#[derive(Debug, Clone)]
pub enum FrameSource {
    File(PathBuf),
    Memory(Arc<GrayFrame>),
}

impl FrameSource {
    fn load(&self) -> Result<GrayFrame, String> {
        match self {
            FrameSource::File(p) => load_frame(p).map_err(|e| e.to_string()),
            FrameSource::Memory(f) => Ok((**f).clone()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CameraEntry {
    pub geometry: DualGeometry,
    pub frames: BTreeMap<u64, FrameSource>,
}

#[derive(Debug, Clone, Default)]
pub struct Catalog {
    cameras: BTreeMap<String, CameraEntry>,
}

impl Catalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, camera_id: impl Into<String>, entry: CameraEntry) {
        self.cameras.insert(camera_id.into(), entry);
    }

    pub fn camera(&self, id: &str) -> Result<&CameraEntry, AnnotError> {
        self.cameras.get(id).ok_or_else(|| AnnotError::UnknownCamera(id.into()))
    }

    pub fn camera_ids(&self) -> impl Iterator<Item = &str> {
        self.cameras.keys().map(String::as_str)
    }

    /// PNG bytes of a frame, optionally with the horizon row drawn in white.
    pub fn frame_png(&self, camera_id: &str, frame_index: u64, horizon: bool) -> Result<Vec<u8>, AnnotError> {
        let cam = self.camera(camera_id)?;
        let source = cam.frames.get(&frame_index).ok_or_else(|| AnnotError::UnknownFrame {
            scope: format!("camera {camera_id}"),
            frame_index,
        })?;
        let mut frame = source.load().map_err(AnnotError::Storage)?;
        if horizon {
            let row = cam.geometry.v_h().round();
            frame = frame.map(|_, y, v| if y as f64 == row { 1.0 } else { v });
        }
        frame.encode_png().map_err(|e| AnnotError::Storage(e.to_string()))
    }
}
