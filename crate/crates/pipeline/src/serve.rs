//! `spev serve`: the annotation service over the configured cameras.

use spev_annot::{AnnotError, CameraEntry, Catalog, FrameSource, ServiceConfig};
use spev_core::frame::FrameManifest;
use spev_core::geometry::DualGeometry;

use crate::config::{CameraConfig, LoadedConfig};
use crate::error::PipelineError;
use crate::stages::{calibration_path, load_calibration};

/// Geometry for annotation: the `calibrate` artifact when present,
/// otherwise the anchors with the configured horizon.
fn geometry(cfg: &LoadedConfig, cam: &CameraConfig) -> Result<DualGeometry, PipelineError> {
    if calibration_path(cfg, &cam.id).exists() {
        return Ok(load_calibration(cfg, &cam.id)?.geometry);
    }
    let v_h = cam.v_h.ok_or_else(|| {
        PipelineError::Data(format!(
            "camera {} has no v_h and no calibration artifact; set v_h or run calibrate",
            cam.id
        ))
    })?;
    let a = cam.anchors;
    DualGeometry::calibrate(v_h, a.v_1_15, a.v_1_9, a.v_2, a.d_15, a.d_9)
        .map_err(|e| PipelineError::data(format!("camera {}: calibration", cam.id), e))
}

/// Catalog of the given cameras, frames taken from each camera's manifest.
pub fn catalog(cfg: &LoadedConfig, cameras: &[String]) -> Result<Catalog, PipelineError> {
    let mut catalog = Catalog::new();
    for id in cameras {
        let cam = cfg.camera(id)?;
        let manifest = cam
            .manifest
            .as_ref()
            .ok_or_else(|| PipelineError::Usage(format!("camera {id} has no manifest configured")))?;
        let manifest =
            FrameManifest::read(&cfg.resolve(manifest)).map_err(|e| PipelineError::data(format!("camera {id}"), e))?;
        let frames = manifest
            .entries
            .into_iter()
            .map(|e| (e.frame_index, FrameSource::File(e.path)))
            .collect();
        catalog.insert(
            id.clone(),
            CameraEntry {
                geometry: geometry(cfg, cam)?,
                frames,
            },
        );
    }
    Ok(catalog)
}

fn pipeline_error(e: AnnotError) -> PipelineError {
    match e {
        AnnotError::InvalidRequest(m) => PipelineError::Usage(m),
        AnnotError::Storage(m) => PipelineError::Data(m),
        other => PipelineError::Internal(other.to_string()),
    }
}

/// Serves until interrupted. Port and log directory come from
/// `ANNOT_PORT` and `ANNOT_DATA_DIR`.
pub fn run(cfg: &LoadedConfig, cameras: &[String]) -> Result<(), PipelineError> {
    let service = ServiceConfig::from_env().map_err(pipeline_error)?;
    let catalog = catalog(cfg, cameras)?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| PipelineError::Internal(e.to_string()))?;
    runtime
        .block_on(spev_annot::serve(catalog, &service))
        .map_err(pipeline_error)
}
