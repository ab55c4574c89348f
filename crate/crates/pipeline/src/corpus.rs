//! Synthetic multi-camera corpus: procedurally rendered clear scenes fogged
//! along a known visibility schedule, with noisy reference labels.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spev_core::fmt_sig;
use spev_core::fog::{apply_fog, depth_from_geometry, k_from_vis, DepthMap, FogParams, MAX_SYNTH_VIS};
use spev_core::frame::{GrayFrame, ManifestEntry};
use spev_core::geometry::DualGeometry;
use spev_core::model::{shipped_layout, FitInterval};
use spev_core::scene::RoadScene;

use crate::config::{Anchors, CameraConfig, FitSection, PipelineConfig};
use crate::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    #[serde(default = "d_cameras")]
    pub cameras: usize,
    #[serde(default = "d_frames")]
    pub frames: usize,
    /// First and last scheduled visibility, meters; frames step linearly.
    #[serde(default = "d_vis_start")]
    pub vis_start: f64,
    #[serde(default = "d_vis_end")]
    pub vis_end: f64,
    /// Airlight.
    #[serde(default = "d_l_f")]
    pub l_f: f64,
    /// Standard deviation of the Gaussian noise added to reference labels, meters.
    #[serde(default = "d_noise")]
    pub label_noise: f64,
    /// Resolution multiplier over the 640×360 base scene.
    #[serde(default = "d_scale")]
    pub scale: f64,
    #[serde(default = "d_clear_frames")]
    pub clear_frames: usize,
    /// Cameras flagged as held-out test cameras in the generated config.
    #[serde(default = "d_test")]
    pub test_cameras: Vec<String>,
    /// Powers used in every interval of the generated config's fit layout.
    #[serde(default = "d_powers")]
    pub fit_powers: Vec<u8>,
    #[serde(default = "d_seed")]
    pub seed: u64,
}

fn d_cameras() -> usize {
    6
}
fn d_frames() -> usize {
    200
}
fn d_vis_start() -> f64 {
    600.0
}
fn d_vis_end() -> f64 {
    20.0
}
fn d_l_f() -> f64 {
    0.8
}
fn d_noise() -> f64 {
    2.0
}
fn d_scale() -> f64 {
    2.0
}
fn d_clear_frames() -> usize {
    1
}
fn d_test() -> Vec<String> {
    vec!["cam0".into(), "cam2".into(), "cam4".into()]
}
fn d_powers() -> Vec<u8> {
    vec![1]
}
fn d_seed() -> u64 {
    100
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            cameras: d_cameras(),
            frames: d_frames(),
            vis_start: d_vis_start(),
            vis_end: d_vis_end(),
            l_f: d_l_f(),
            label_noise: d_noise(),
            scale: d_scale(),
            clear_frames: d_clear_frames(),
            test_cameras: d_test(),
            fit_powers: d_powers(),
            seed: d_seed(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), String> {
        let vis_ok = |v: f64| v > 0.0 && v <= MAX_SYNTH_VIS;
        if self.cameras == 0 || self.frames == 0 || self.clear_frames == 0 {
            return Err("synth.cameras, synth.frames and synth.clear_frames must be >= 1".into());
        }
        if !vis_ok(self.vis_start) || !vis_ok(self.vis_end) {
            return Err(format!(
                "synth visibilities must be in (0, {MAX_SYNTH_VIS}], got {} and {}",
                self.vis_start, self.vis_end
            ));
        }
        if !(0.0..=1.0).contains(&self.l_f) {
            return Err(format!("synth.l_f must be in [0, 1], got {}", self.l_f));
        }
        if !(self.label_noise >= 0.0) {
            return Err(format!("synth.label_noise must be >= 0, got {}", self.label_noise));
        }
        if !(self.scale >= 0.25 && self.scale <= 4.0) {
            return Err(format!("synth.scale must be in [0.25, 4], got {}", self.scale));
        }
        if self.fit_powers.is_empty() || self.fit_powers.iter().any(|p| !(1..=3).contains(p)) {
            return Err("synth.fit_powers must be a non-empty subset of {1, 2, 3}".into());
        }
        Ok(())
    }

    pub fn camera_id(i: usize) -> String {
        format!("cam{i}")
    }

    /// Linear visibility schedule from `vis_start` to `vis_end`.
    pub fn schedule(&self) -> Vec<f64> {
        let n = self.frames;
        if n == 1 {
            return vec![self.vis_start];
        }
        (0..n)
            .map(|j| self.vis_start + (self.vis_end - self.vis_start) * j as f64 / (n - 1) as f64)
            .collect()
    }

    /// Scene of camera `i`. Cameras share a mounting and differ slightly in
    /// horizon row, focal scale, pan and pavement texture.
    pub fn scene(&self, i: usize) -> RoadScene {
        let f = i as f64 - (self.cameras as f64 - 1.0) / 2.0;
        let base = RoadScene::default();
        RoadScene {
            v_h: base.v_h + 0.5 * f,
            vanish_x: base.vanish_x + 7.5 * f,
            left_bottom_x: base.left_bottom_x + 3.0 * f,
            right_bottom_x: base.right_bottom_x + 2.5 * f,
            lambda: base.lambda * (1.0 + 0.005 * f),
            seed: self.seed.wrapping_add(i as u64),
            ..base
        }
        .scaled(self.scale)
    }

    /// Reference labels: the schedule plus Gaussian noise, one independent
    /// draw per camera and frame from a stream seeded by `seed`.
    pub fn labels(&self) -> Vec<Vec<f64>> {
        let schedule = self.schedule();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let noise = Normal::new(0.0, self.label_noise).expect("validated sigma");
        (0..self.cameras)
            .map(|_| schedule.iter().map(|v| v + noise.sample(&mut rng)).collect())
            .collect()
    }
}

/// Rounds to the nearest 8-bit level so in-memory frames equal their
/// PNG round trip.
pub fn quantize(frame: &GrayFrame) -> GrayFrame {
    frame.map(|_, _, v| (v * 255.0).round() / 255.0)
}

/// One synthetic camera, frames rendered on demand.
pub struct SyntheticCamera {
    pub id: String,
    pub scene: RoadScene,
    pub geometry: DualGeometry,
    pub clear: GrayFrame,
    pub schedule: Vec<f64>,
    pub labels: Vec<f64>,
    depth: DepthMap,
    l_f: f64,
}

impl SyntheticCamera {
    pub fn build(cfg: &SynthConfig, i: usize, labels: Vec<f64>) -> Result<Self, PipelineError> {
        let scene = cfg.scene(i);
        let geometry = scene
            .geometry()
            .map_err(|e| PipelineError::Internal(format!("synthetic geometry: {e}")))?;
        let clear = quantize(&scene.render());
        let depth = depth_from_geometry(&geometry.mean(), clear.width(), clear.height());
        Ok(Self {
            id: SynthConfig::camera_id(i),
            scene,
            geometry,
            clear,
            schedule: cfg.schedule(),
            labels,
            depth,
            l_f: cfg.l_f,
        })
    }

    /// Fogged frame `j` of the schedule.
    pub fn frame(&self, j: usize) -> Result<GrayFrame, PipelineError> {
        let fog = FogParams::from_visibility(self.schedule[j], self.l_f)
            .map_err(|e| PipelineError::Internal(e.to_string()))?;
        let fogged = apply_fog(&self.clear, &self.depth, &fog).map_err(|e| PipelineError::Internal(e.to_string()))?;
        Ok(quantize(&fogged))
    }

    pub fn anchors(&self) -> Anchors {
        let (v_1_15, v_1_9, v_2) = self.scene.anchors();
        Anchors {
            v_1_15,
            v_1_9,
            v_2,
            d_15: 15.0,
            d_9: 9.0,
        }
    }
}

pub fn build_cameras(cfg: &SynthConfig) -> Result<Vec<SyntheticCamera>, PipelineError> {
    cfg.labels()
        .into_iter()
        .enumerate()
        .map(|(i, labels)| SyntheticCamera::build(cfg, i, labels))
        .collect()
}

fn write_text(path: &Path, text: &str) -> Result<(), PipelineError> {
    fs::File::create(path)
        .and_then(|mut f| f.write_all(text.as_bytes()))
        .map_err(|e| PipelineError::write(path, e))
}

fn manifest_text(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| serde_json::to_string(e).expect("manifest entry serializes") + "\n")
        .collect()
}

/// Configuration for a corpus laid out as [`write_corpus`] writes it.
pub fn generated_config(cfg: &SynthConfig, cameras: &[SyntheticCamera]) -> PipelineConfig {
    let camera_configs = cameras
        .iter()
        .map(|cam| {
            let rel = |name: &str| Some(PathBuf::from(&cam.id).join(name));
            CameraConfig {
                id: cam.id.clone(),
                anchors: cam.anchors(),
                v_h: None,
                clear_frame: rel("clear.png"),
                clear_manifest: rel("clear_manifest.jsonl"),
                manifest: rel("manifest.jsonl"),
                labels: rel("labels.csv"),
                test: cfg.test_cameras.contains(&cam.id),
            }
        })
        .collect();
    PipelineConfig {
        output_dir: PathBuf::from("out"),
        preprocess: Default::default(),
        roi: Default::default(),
        baseline: Default::default(),
        flip: Default::default(),
        model: Default::default(),
        fit: FitSection {
            intervals: shipped_layout()
                .iter()
                .map(|iv| FitInterval::new(iv.lo, iv.hi, &cfg.fit_powers))
                .collect(),
            version: "synthetic".into(),
        },
        eval: Default::default(),
        synth: cfg.clone(),
        cameras: camera_configs,
    }
}

/// Writes the corpus under `dir` and a ready-to-run config `dir/spev.toml`
/// whose paths are relative to `dir`. Returns the config path.
pub fn write_corpus(cfg: &SynthConfig, dir: &Path, config_hash: &str) -> Result<PathBuf, PipelineError> {
    let cameras = build_cameras(cfg)?;
    for cam in &cameras {
        let cam_dir = dir.join(&cam.id);
        let frames_dir = cam_dir.join("frames");
        fs::create_dir_all(&frames_dir).map_err(|e| PipelineError::write(&frames_dir, e))?;

        let clear_path = cam_dir.join("clear.png");
        cam.clear
            .save(&clear_path)
            .map_err(|e| PipelineError::write(&clear_path, e))?;
        let clear_entries: Vec<ManifestEntry> = (0..cfg.clear_frames)
            .map(|j| ManifestEntry {
                frame_index: j as u64,
                timestamp: j as f64,
                camera_id: cam.id.clone(),
                path: PathBuf::from("clear.png"),
            })
            .collect();
        write_text(&cam_dir.join("clear_manifest.jsonl"), &manifest_text(&clear_entries))?;

        (0..cam.schedule.len()).into_par_iter().try_for_each(|j| {
            let path = frames_dir.join(format!("{j:06}.png"));
            cam.frame(j)?.save(&path).map_err(|e| PipelineError::write(&path, e))
        })?;
        let entries: Vec<ManifestEntry> = (0..cam.schedule.len())
            .map(|j| ManifestEntry {
                frame_index: j as u64,
                timestamp: j as f64,
                camera_id: cam.id.clone(),
                path: PathBuf::from(format!("frames/{j:06}.png")),
            })
            .collect();
        write_text(&cam_dir.join("manifest.jsonl"), &manifest_text(&entries))?;

        let mut truth = format!("# config_hash={config_hash}\nframe_index,vis_true_m,k\n");
        let mut labels = format!("# config_hash={config_hash}\nframe_index,vis_ref\n");
        for (j, (vis, label)) in cam.schedule.iter().zip(&cam.labels).enumerate() {
            let k = k_from_vis(*vis).map_err(|e| PipelineError::Internal(e.to_string()))?;
            truth.push_str(&format!("{j},{},{}\n", fmt_sig(*vis), fmt_sig(k)));
            labels.push_str(&format!("{j},{}\n", fmt_sig(*label)));
        }
        write_text(&cam_dir.join("truth.csv"), &truth)?;
        write_text(&cam_dir.join("labels.csv"), &labels)?;
    }

    let generated = generated_config(cfg, &cameras);
    let text = toml::to_string(&generated).map_err(|e| PipelineError::Internal(e.to_string()))?;
    let path = dir.join("spev.toml");
    write_text(
        &path,
        &format!("# generated by spev synth (config_hash={config_hash})\n{text}"),
    )?;
    Ok(path)
}
