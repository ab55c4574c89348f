//! The pipeline steps behind each subcommand.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spev_core::contrast::contrast_visibility;
use spev_core::entropy::{clear_baseline, gaussian_entropy, relative_ratio, ClearBaseline, EntropyValue};
use spev_core::evaluation::{
    ape_with, leave_one_out, spearman, summarize, EvalReport, FitConfig, LabelledSample, Summary,
};
use spev_core::fmt_sig;
use spev_core::frame::{load_frame, median_denoise, FrameManifest, GrayFrame};
use spev_core::geometry::{build_roi, detect_lane_lines, DualGeometry, PolarLine, RoiMask};
use spev_core::model::{fit, load_model, save_model, PiecewiseModel};

use crate::config::{CameraConfig, LoadedConfig, Preprocess};
use crate::corpus;
use crate::error::PipelineError;

/// Frames processed per parallel batch while estimating; bounds memory.
const CHUNK: usize = 32;

pub const ESTIMATE_HEADER: &str =
    "frame_index,timestamp,status,H,H_r,vis_spev,piece_index,self_consistent,vis_contrast,error";

fn hash_line(hash: &str) -> String {
    format!("# config_hash={hash}\n")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| PipelineError::write(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| PipelineError::write(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| PipelineError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, what: &str) -> Result<T, PipelineError> {
    let bytes = fs::read(path).map_err(|e| {
        PipelineError::Data(format!(
            "cannot read {what} {}: {e} (run the earlier stage first)",
            path.display()
        ))
    })?;
    serde_json::from_slice(&bytes).map_err(|e| PipelineError::data(path.display(), e))
}

pub fn preprocess(frame: GrayFrame, p: &Preprocess) -> GrayFrame {
    if p.denoise {
        median_denoise(&frame)
    } else {
        frame
    }
}

fn required<'a>(cam: &CameraConfig, field: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf, PipelineError> {
    field
        .as_ref()
        .ok_or_else(|| PipelineError::Usage(format!("camera {} has no {name} configured", cam.id)))
}

fn camera_dir(cfg: &LoadedConfig, camera: &str) -> PathBuf {
    cfg.output_dir().join(camera)
}

/// Geometry and ROI of one camera, as written by `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationArtifact {
    pub config_hash: String,
    pub camera_id: String,
    pub v_h: f64,
    /// `"detected"` or `"config"`.
    pub v_h_source: String,
    pub v_h_detected: f64,
    pub geometry: DualGeometry,
    pub roi: RoiMask,
    pub lines: Vec<PolarLine>,
}

pub fn calibration_path(cfg: &LoadedConfig, camera: &str) -> PathBuf {
    camera_dir(cfg, camera).join("geometry.json")
}

/// Lane detection, ROI and dual calibration from a clear frame.
pub fn calibrate_frame(
    cfg: &LoadedConfig,
    cam: &CameraConfig,
    clear: GrayFrame,
) -> Result<CalibrationArtifact, PipelineError> {
    let c = &cfg.config;
    let clear = preprocess(clear, &c.preprocess);
    let lines = detect_lane_lines(&clear, &c.roi.detection).map_err(|e| PipelineError::data(&cam.id, e))?;
    let (roi, v_h_detected) = build_roi(&lines, clear.width(), clear.height(), c.roi.h_margin)
        .map_err(|e| PipelineError::data(format!("{}: ROI", cam.id), e))?;
    let (v_h, source) = match cam.v_h {
        Some(v) => (v, "config"),
        None => (v_h_detected, "detected"),
    };
    let a = cam.anchors;
    let geometry = DualGeometry::calibrate(v_h, a.v_1_15, a.v_1_9, a.v_2, a.d_15, a.d_9)
        .map_err(|e| PipelineError::data(format!("{}: calibration", cam.id), e))?;
    Ok(CalibrationArtifact {
        config_hash: cfg.hash(),
        camera_id: cam.id.clone(),
        v_h,
        v_h_source: source.into(),
        v_h_detected,
        geometry,
        roi,
        lines: lines.into_iter().take(8).collect(),
    })
}

pub fn run_calibrate(cfg: &LoadedConfig, camera: &str) -> Result<PathBuf, PipelineError> {
    let cam = cfg.camera(camera)?;
    let path = cfg.resolve(required(cam, &cam.clear_frame, "clear_frame")?);
    let clear = load_frame(&path).map_err(|e| PipelineError::data(format!("camera {camera}"), e))?;
    let artifact = calibrate_frame(cfg, cam, clear)?;
    let out = calibration_path(cfg, camera);
    write_json(&out, &artifact)?;
    Ok(out)
}

pub fn load_calibration(cfg: &LoadedConfig, camera: &str) -> Result<CalibrationArtifact, PipelineError> {
    let path = calibration_path(cfg, camera);
    let mut artifact: CalibrationArtifact = read_json(&path, "calibration")?;
    artifact.roi = artifact
        .roi
        .rebuild()
        .map_err(|e| PipelineError::data(path.display(), e))?;
    Ok(artifact)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineEntry {
    pub frame_index: u64,
    #[serde(rename = "H")]
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineArtifact {
    pub config_hash: String,
    pub baseline: ClearBaseline,
    pub entropies: Vec<BaselineEntry>,
}

pub fn baseline_path(cfg: &LoadedConfig, camera: &str) -> PathBuf {
    camera_dir(cfg, camera).join("baseline.json")
}

/// Entropy of each clear frame and the robust baseline over them.
pub fn baseline_from_frames(
    cfg: &LoadedConfig,
    camera: &str,
    roi: &RoiMask,
    frames: &[(u64, GrayFrame)],
) -> Result<BaselineArtifact, PipelineError> {
    let c = &cfg.config;
    let values: Vec<EntropyValue> = frames
        .par_iter()
        .map(|(_, f)| gaussian_entropy(&preprocess(f.clone(), &c.preprocess), roi, c.preprocess.smoothing))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::data(format!("camera {camera}: clear frame"), e))?;
    let baseline = clear_baseline(camera, &values, c.baseline.rejection_k)
        .map_err(|e| PipelineError::data(format!("camera {camera}"), e))?;
    Ok(BaselineArtifact {
        config_hash: cfg.hash(),
        baseline,
        entropies: frames
            .iter()
            .zip(&values)
            .map(|((i, _), v)| BaselineEntry {
                frame_index: *i,
                h: v.value,
            })
            .collect(),
    })
}

pub fn run_baseline(cfg: &LoadedConfig, camera: &str) -> Result<PathBuf, PipelineError> {
    let cam = cfg.camera(camera)?;
    let calib = load_calibration(cfg, camera)?;
    let manifest_path = cfg.resolve(required(cam, &cam.clear_manifest, "clear_manifest")?);
    let manifest =
        FrameManifest::read(&manifest_path).map_err(|e| PipelineError::data(format!("camera {camera}"), e))?;
    let frames: Vec<(u64, GrayFrame)> = manifest
        .entries
        .par_iter()
        .map(|e| load_frame(&e.path).map(|f| (e.frame_index, f)))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::data(format!("camera {camera}"), e))?;
    let artifact = baseline_from_frames(cfg, camera, &calib.roi, &frames)?;
    let out = baseline_path(cfg, camera);
    write_json(&out, &artifact)?;
    Ok(out)
}

/// Model for `estimate`: the configured file, else the bundled table.
pub fn load_model_file(path: &Path) -> Result<PiecewiseModel, PipelineError> {
    let bytes = fs::read(path).map_err(|e| PipelineError::data(format!("model {}", path.display()), e))?;
    let mut value: serde_json::Value =
        serde_json::from_slice(&bytes).map_err(|e| PipelineError::data(path.display(), e))?;
    if let Some(obj) = value.as_object_mut() {
        obj.remove("config_hash");
    }
    load_model(value.to_string().as_bytes()).map_err(|e| PipelineError::data(path.display(), e))
}

pub fn estimation_model(cfg: &LoadedConfig) -> Result<PiecewiseModel, PipelineError> {
    let model = match &cfg.config.model.path {
        Some(p) => load_model_file(&cfg.resolve(p))?,
        None => PiecewiseModel::shipped(),
    };
    if model.flip != cfg.config.flip {
        return Err(PipelineError::Data(format!(
            "model {} was fitted with flip {:?} but the configuration asks for {:?}",
            model.version, model.flip, cfg.config.flip
        )));
    }
    Ok(model)
}

/// One output row of `estimate`.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateRow {
    pub frame_index: u64,
    pub timestamp: f64,
    pub h: Option<f64>,
    pub h_r: Option<f64>,
    pub vis_spev: Option<f64>,
    pub piece: Option<usize>,
    pub self_consistent: Option<bool>,
    pub vis_contrast: Option<f64>,
    pub error: Option<String>,
}

impl EstimateRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    /// CSV line. Entropies keep full precision (a whole sequence spans a
    /// few thousandths of `H_r`); other floats use 6 significant digits.
    pub fn to_csv_line(&self) -> String {
        let full = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        let sig = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        let error = self
            .error
            .as_deref()
            .map(|e| e.replace([',', '\n', '\r', '"'], " "))
            .unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.frame_index,
            fmt_sig(self.timestamp),
            if self.is_ok() { "ok" } else { "error" },
            full(self.h),
            full(self.h_r),
            sig(self.vis_spev),
            self.piece.map(|p| p.to_string()).unwrap_or_default(),
            self.self_consistent.map(|b| b.to_string()).unwrap_or_default(),
            sig(self.vis_contrast),
            error
        )
    }
}

/// Everything `estimate` needs for one camera.
pub struct EstimateContext<'a> {
    pub cfg: &'a LoadedConfig,
    pub calibration: &'a CalibrationArtifact,
    pub baseline: &'a ClearBaseline,
    pub model: &'a PiecewiseModel,
}

struct Measured {
    h: f64,
    h_r: f64,
    vis_contrast: Option<f64>,
}

fn measure(ctx: &EstimateContext, frame: GrayFrame) -> Result<Measured, String> {
    let c = &ctx.cfg.config;
    let frame = preprocess(frame, &c.preprocess);
    let roi = &ctx.calibration.roi;
    let h = gaussian_entropy(&frame, roi, c.preprocess.smoothing).map_err(|e| e.to_string())?;
    let h_r = relative_ratio(h.value, ctx.baseline).map_err(|e| e.to_string())?;
    let vis_contrast = if c.eval.estimator.contrast() {
        Some(
            contrast_visibility(&frame, roi, &ctx.calibration.geometry.mean(), c.eval.contrast_threshold)
                .map_err(|e| e.to_string())?,
        )
    } else {
        None
    };
    Ok(Measured {
        h: h.value,
        h_r,
        vis_contrast,
    })
}

/// Two-phase estimation: frames are measured in parallel batches, then
/// piece selection runs in frame order carrying the previous estimate.
/// A frame that fails becomes an error row and does not move the previous
/// estimate. Rows go to `sink` as they are produced.
pub fn estimate_stream<L>(
    ctx: &EstimateContext,
    frames: &[(u64, f64)],
    load: L,
    mut sink: impl FnMut(EstimateRow) -> Result<(), PipelineError>,
) -> Result<(), PipelineError>
where
    L: Fn(usize) -> Result<GrayFrame, String> + Sync,
{
    let use_spev = ctx.cfg.config.eval.estimator.spev();
    let mut prev: Option<f64> = None;
    let indices: Vec<usize> = (0..frames.len()).collect();
    for chunk in indices.chunks(CHUNK) {
        let measured: Vec<Result<Measured, String>> = chunk
            .par_iter()
            .map(|&i| load(i).and_then(|f| measure(ctx, f)))
            .collect();
        for (&i, m) in chunk.iter().zip(measured) {
            let (frame_index, timestamp) = frames[i];
            let row = match m {
                Err(error) => EstimateRow {
                    frame_index,
                    timestamp,
                    h: None,
                    h_r: None,
                    vis_spev: None,
                    piece: None,
                    self_consistent: None,
                    vis_contrast: None,
                    error: Some(error),
                },
                Ok(m) => {
                    let mut row = EstimateRow {
                        frame_index,
                        timestamp,
                        h: Some(m.h),
                        h_r: Some(m.h_r),
                        vis_spev: None,
                        piece: None,
                        self_consistent: None,
                        vis_contrast: m.vis_contrast,
                        error: None,
                    };
                    if use_spev {
                        let x = ctx.cfg.config.flip.apply(m.h_r);
                        match ctx.model.predict(x, prev) {
                            Ok(p) => {
                                prev = Some(p.vis);
                                row.vis_spev = Some(p.vis);
                                row.piece = Some(p.piece);
                                row.self_consistent = Some(p.self_consistent);
                            }
                            Err(e) => row.error = Some(e.to_string()),
                        }
                    }
                    row
                }
            };
            sink(row)?;
        }
    }
    Ok(())
}

pub fn estimates_path(cfg: &LoadedConfig, camera: &str) -> PathBuf {
    camera_dir(cfg, camera).join("estimates.csv")
}

pub fn run_estimate(cfg: &LoadedConfig, camera: &str) -> Result<PathBuf, PipelineError> {
    let cam = cfg.camera(camera)?;
    let calibration = load_calibration(cfg, camera)?;
    let baseline: BaselineArtifact = read_json(&baseline_path(cfg, camera), "baseline")?;
    let model = estimation_model(cfg)?;
    let manifest_path = cfg.resolve(required(cam, &cam.manifest, "manifest")?);
    let manifest =
        FrameManifest::read(&manifest_path).map_err(|e| PipelineError::data(format!("camera {camera}"), e))?;
    let frames: Vec<(u64, f64)> = manifest.entries.iter().map(|e| (e.frame_index, e.timestamp)).collect();
    let ctx = EstimateContext {
        cfg,
        calibration: &calibration,
        baseline: &baseline.baseline,
        model: &model,
    };

    let out = estimates_path(cfg, camera);
    fs::create_dir_all(out.parent().expect("camera dir")).map_err(|e| PipelineError::write(&out, e))?;
    let file = fs::File::create(&out).map_err(|e| PipelineError::write(&out, e))?;
    let mut w = BufWriter::new(file);
    let io = |e: std::io::Error| PipelineError::write(&out, e);
    writeln!(w, "{}{ESTIMATE_HEADER}", hash_line(&cfg.hash())).map_err(io)?;
    estimate_stream(
        &ctx,
        &frames,
        |i| load_frame(&manifest.entries[i].path).map_err(|e| e.to_string()),
        |row| writeln!(w, "{}", row.to_csv_line()).map_err(io),
    )?;
    w.flush().map_err(io)?;
    Ok(out)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<fs::File>, PipelineError> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| PipelineError::data(path.display(), e))
}

fn column(headers: &csv::StringRecord, names: &[&str], path: &Path) -> Result<usize, PipelineError> {
    names
        .iter()
        .find_map(|n| headers.iter().position(|h| h == *n))
        .ok_or_else(|| PipelineError::Data(format!("{}: none of the columns {names:?} present", path.display())))
}

fn parse_f64(s: &str, path: &Path) -> Result<f64, PipelineError> {
    s.trim()
        .parse()
        .map_err(|e| PipelineError::data(format!("{}: {s:?}", path.display()), e))
}

/// Reference visibility per frame. Accepts the synthetic label file
/// (`vis_ref`), the annotation export (`vis_mean`) or a truth file
/// (`vis_true_m`).
pub fn read_labels(path: &Path) -> Result<BTreeMap<u64, f64>, PipelineError> {
    let mut r = csv_reader(path)?;
    let headers = r.headers().map_err(|e| PipelineError::data(path.display(), e))?.clone();
    let fi = column(&headers, &["frame_index"], path)?;
    let vi = column(&headers, &["vis_ref", "vis_mean", "vis_true_m"], path)?;
    let mut out = BTreeMap::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::data(path.display(), e))?;
        let idx = rec[fi]
            .trim()
            .parse::<u64>()
            .map_err(|e| PipelineError::data(path.display(), e))?;
        out.insert(idx, parse_f64(&rec[vi], path)?);
    }
    Ok(out)
}

/// `(frame_index, H_r, vis_contrast)` of the ok rows of an estimates file.
pub fn read_estimates(path: &Path) -> Result<Vec<(u64, f64, Option<f64>)>, PipelineError> {
    let mut r = csv_reader(path).map_err(|e| PipelineError::Data(format!("{e} (run estimate first)")))?;
    let headers = r.headers().map_err(|e| PipelineError::data(path.display(), e))?.clone();
    let fi = column(&headers, &["frame_index"], path)?;
    let si = column(&headers, &["status"], path)?;
    let hi = column(&headers, &["H_r"], path)?;
    let ci = column(&headers, &["vis_contrast"], path)?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| PipelineError::data(path.display(), e))?;
        if &rec[si] != "ok" {
            continue;
        }
        let idx = rec[fi]
            .parse::<u64>()
            .map_err(|e| PipelineError::data(path.display(), e))?;
        let contrast = if rec[ci].is_empty() {
            None
        } else {
            Some(parse_f64(&rec[ci], path)?)
        };
        out.push((idx, parse_f64(&rec[hi], path)?, contrast));
    }
    Ok(out)
}

/// Per-camera labelled samples plus contrast estimates, frames lacking a
/// label skipped.
pub struct CameraData {
    pub samples: Vec<LabelledSample>,
    pub contrast: Vec<(u64, f64, f64)>,
}

pub fn camera_data(cfg: &LoadedConfig, cam: &CameraConfig) -> Result<CameraData, PipelineError> {
    let labels = read_labels(&cfg.resolve(required(cam, &cam.labels, "labels")?))?;
    let mut samples = Vec::new();
    let mut contrast = Vec::new();
    for (idx, h_r, c) in read_estimates(&estimates_path(cfg, &cam.id))? {
        if let Some(&vis_ref) = labels.get(&idx) {
            samples.push(LabelledSample {
                frame_index: idx,
                h_r,
                vis_ref,
            });
            if let Some(c) = c {
                contrast.push((idx, c, vis_ref));
            }
        }
    }
    Ok(CameraData { samples, contrast })
}

fn fit_config(cfg: &LoadedConfig) -> FitConfig {
    FitConfig {
        intervals: cfg.config.fit.intervals.clone(),
        flip: cfg.config.flip,
        denominator: cfg.config.eval.denominator,
    }
}

fn model_json(model: &PiecewiseModel, hash: &str) -> Result<Vec<u8>, PipelineError> {
    let mut value: serde_json::Value =
        serde_json::from_slice(&save_model(model)).map_err(|e| PipelineError::Internal(e.to_string()))?;
    value
        .as_object_mut()
        .expect("model is an object")
        .insert("config_hash".into(), hash.into());
    let mut bytes = serde_json::to_vec_pretty(&value).map_err(|e| PipelineError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    Ok(bytes)
}

pub fn model_path(cfg: &LoadedConfig) -> PathBuf {
    cfg.output_dir().join("model.json")
}

/// Fits on every labelled camera not flagged as a test camera.
pub fn run_fit(cfg: &LoadedConfig) -> Result<PathBuf, PipelineError> {
    let fc = fit_config(cfg);
    let mut train = Vec::new();
    let mut used = 0;
    for cam in cfg.config.cameras.iter().filter(|c| !c.test && c.labels.is_some()) {
        let data = camera_data(cfg, cam)?;
        train.extend(spev_core::evaluation::training_samples(&data.samples, &fc.flip));
        used += 1;
    }
    if used == 0 {
        return Err(PipelineError::Usage(
            "no labelled training cameras (all are flagged test)".into(),
        ));
    }
    let model =
        fit(&train, &fc.intervals, fc.flip, &cfg.config.fit.version).map_err(|e| PipelineError::data("fit", e))?;
    let out = model_path(cfg);
    write_file(&out, &model_json(&model, &cfg.hash())?)?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastSummary {
    /// Rows with a zero contrast estimate, for which relative error is undefined.
    pub n_undefined: usize,
    pub summary: Option<Summary>,
    pub spearman: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub config_hash: String,
    pub camera_id: String,
    pub training_cameras: Vec<String>,
    pub n_train: usize,
    pub summary: Summary,
    pub spearman: Option<f64>,
    pub contrast: Option<ContrastSummary>,
    pub model: PiecewiseModel,
}

fn contrast_summary(rows: &[(u64, f64, f64)], cfg: &LoadedConfig) -> Result<ContrastSummary, PipelineError> {
    let defined: Vec<&(u64, f64, f64)> = rows.iter().filter(|r| r.1 > 0.0).collect();
    let apes: Vec<f64> = defined
        .iter()
        .map(|(_, est, re)| ape_with(*est, *re, cfg.config.eval.denominator))
        .collect::<Result<_, _>>()
        .map_err(|e| PipelineError::data("contrast", e))?;
    let est: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let refs: Vec<f64> = rows.iter().map(|r| r.2).collect();
    Ok(ContrastSummary {
        n_undefined: rows.len() - defined.len(),
        summary: if apes.is_empty() {
            None
        } else {
            Some(summarize(&apes).map_err(|e| PipelineError::data("contrast", e))?)
        },
        spearman: spearman(&est, &refs),
    })
}

fn eval_rows_csv(
    report: &EvalReport,
    contrast: &[(u64, f64, f64)],
    cfg: &LoadedConfig,
) -> Result<String, PipelineError> {
    let mut s = hash_line(&cfg.hash());
    s.push_str("frame_index,estimator,vis_est,vis_ref,ape_percent,H_r,piece_index\n");
    if cfg.config.eval.estimator.spev() {
        for r in &report.rows {
            s.push_str(&format!(
                "{},spev,{},{},{},{},{}\n",
                r.frame_index,
                fmt_sig(r.vis_est),
                fmt_sig(r.vis_ref),
                fmt_sig(r.ape_percent),
                r.h_r.map(|v| format!("{v:?}")).unwrap_or_default(),
                r.piece.map(|p| p.to_string()).unwrap_or_default()
            ));
        }
    }
    for (idx, est, re) in contrast {
        let ape = if *est > 0.0 {
            fmt_sig(ape_with(*est, *re, cfg.config.eval.denominator).map_err(|e| PipelineError::data("contrast", e))?)
        } else {
            String::new()
        };
        s.push_str(&format!("{idx},contrast,{},{},{ape},,\n", fmt_sig(*est), fmt_sig(*re)));
    }
    Ok(s)
}

fn plot_csv(report: &EvalReport, hash: &str) -> String {
    let mut s = hash_line(hash);
    s.push_str("vis_est,vis_ref,H_r\n");
    for r in &report.rows {
        s.push_str(&format!(
            "{},{},{}\n",
            fmt_sig(r.vis_est),
            fmt_sig(r.vis_ref),
            r.h_r.map(|v| format!("{v:?}")).unwrap_or_default()
        ));
    }
    s
}

/// Leave-one-camera-out folds, one per camera flagged `test`.
pub fn evaluate(
    cfg: &LoadedConfig,
    data: &BTreeMap<String, CameraData>,
) -> Result<Vec<(FoldReport, EvalReport)>, PipelineError> {
    let tests: Vec<String> = cfg
        .config
        .cameras
        .iter()
        .filter(|c| c.test)
        .map(|c| c.id.clone())
        .collect();
    if tests.is_empty() {
        return Err(PipelineError::Usage("no cameras are flagged test".into()));
    }
    let datasets: BTreeMap<String, Vec<LabelledSample>> =
        data.iter().map(|(k, v)| (k.clone(), v.samples.clone())).collect();
    let mut reports = leave_one_out(&datasets, &tests, &fit_config(cfg)).map_err(|e| PipelineError::data("eval", e))?;
    let mut folds = Vec::new();
    for camera in &tests {
        let report = reports.remove(camera).expect("one report per test camera");
        let est: Vec<f64> = report.rows.iter().map(|r| r.vis_est).collect();
        let refs: Vec<f64> = report.rows.iter().map(|r| r.vis_ref).collect();
        let contrast = if cfg.config.eval.estimator.contrast() {
            Some(contrast_summary(&data[camera].contrast, cfg)?)
        } else {
            None
        };
        let fold = FoldReport {
            config_hash: cfg.hash(),
            camera_id: camera.clone(),
            training_cameras: report.training_cameras.clone(),
            n_train: report.n_train,
            summary: report.summary.clone(),
            spearman: spearman(&est, &refs),
            contrast,
            model: report.model.clone(),
        };
        folds.push((fold, report));
    }
    Ok(folds)
}

pub fn eval_dir(cfg: &LoadedConfig) -> PathBuf {
    cfg.output_dir().join("eval")
}

pub fn run_eval(cfg: &LoadedConfig) -> Result<Vec<PathBuf>, PipelineError> {
    let mut data = BTreeMap::new();
    for cam in cfg.config.cameras.iter().filter(|c| c.labels.is_some()) {
        data.insert(cam.id.clone(), camera_data(cfg, cam)?);
    }
    let folds = evaluate(cfg, &data)?;

    let dir = eval_dir(cfg);
    let hash = cfg.hash();
    let mut written = Vec::new();
    for (fold, report) in &folds {
        let rows = dir.join(format!("{}_rows.csv", fold.camera_id));
        write_file(
            &rows,
            eval_rows_csv(report, &data[&fold.camera_id].contrast, cfg)?.as_bytes(),
        )?;
        let plot = dir.join(format!("{}_plot.csv", fold.camera_id));
        write_file(&plot, plot_csv(report, &hash).as_bytes())?;
        let json = dir.join(format!("{}_report.json", fold.camera_id));
        write_json(&json, fold)?;
        written.extend([rows, plot, json]);
    }
    let summary: BTreeMap<&str, serde_json::Value> = [
        ("config_hash", serde_json::Value::from(hash.clone())),
        (
            "folds",
            serde_json::to_value(
                folds
                    .iter()
                    .map(|(f, _)| (f.camera_id.clone(), (f.summary.clone(), f.spearman)))
                    .collect::<BTreeMap<_, _>>(),
            )
            .map_err(|e| PipelineError::Internal(e.to_string()))?,
        ),
    ]
    .into_iter()
    .collect();
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    written.push(summary_path);
    Ok(written)
}

pub fn run_synth(cfg: &LoadedConfig, out: &Path) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(out).map_err(|e| PipelineError::write(out, e))?;
    corpus::write_corpus(&cfg.config.synth, out, &cfg.hash())
}

/// Result of [`run_synthetic_in_memory`].
pub struct SyntheticRun {
    pub cfg: LoadedConfig,
    pub cameras: Vec<corpus::SyntheticCamera>,
    pub calibrations: BTreeMap<String, CalibrationArtifact>,
    pub folds: Vec<(FoldReport, EvalReport)>,
}

/// Calibrate, baseline, estimate and evaluate a synthetic corpus without
/// touching the filesystem. Frames go through the same stage functions as
/// the CLI; they are quantized exactly as their PNG files would be.
pub fn run_synthetic_in_memory(synth: &corpus::SynthConfig) -> Result<SyntheticRun, PipelineError> {
    synth.validate().map_err(PipelineError::Usage)?;
    let cameras = corpus::build_cameras(synth)?;
    let cfg = LoadedConfig {
        config: corpus::generated_config(synth, &cameras),
        base_dir: PathBuf::new(),
    };
    let model = PiecewiseModel::shipped();
    let mut calibrations = BTreeMap::new();
    let mut data = BTreeMap::new();
    for (cam, cam_cfg) in cameras.iter().zip(&cfg.config.cameras) {
        let calibration = calibrate_frame(&cfg, cam_cfg, cam.clear.clone())?;
        let clear: Vec<(u64, GrayFrame)> = (0..synth.clear_frames as u64).map(|i| (i, cam.clear.clone())).collect();
        let baseline = baseline_from_frames(&cfg, &cam.id, &calibration.roi, &clear)?;
        let ctx = EstimateContext {
            cfg: &cfg,
            calibration: &calibration,
            baseline: &baseline.baseline,
            model: &model,
        };
        let frames: Vec<(u64, f64)> = (0..cam.schedule.len()).map(|j| (j as u64, j as f64)).collect();
        let mut samples = Vec::new();
        let mut contrast = Vec::new();
        estimate_stream(
            &ctx,
            &frames,
            |j| cam.frame(j).map_err(|e| e.to_string()),
            |row| {
                if let Some(h_r) = row.h_r {
                    let vis_ref = cam.labels[row.frame_index as usize];
                    samples.push(LabelledSample {
                        frame_index: row.frame_index,
                        h_r,
                        vis_ref,
                    });
                    if let Some(c) = row.vis_contrast {
                        contrast.push((row.frame_index, c, vis_ref));
                    }
                }
                Ok(())
            },
        )?;
        data.insert(cam.id.clone(), CameraData { samples, contrast });
        calibrations.insert(cam.id.clone(), calibration);
    }
    let folds = evaluate(&cfg, &data)?;
    Ok(SyntheticRun {
        cfg,
        cameras,
        calibrations,
        folds,
    })
}
