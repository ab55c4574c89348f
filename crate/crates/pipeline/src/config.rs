//! TOML pipeline configuration.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use spev_core::contrast::DEFAULT_THRESHOLD;
use spev_core::evaluation::ApeDenominator;
use spev_core::frame::Smoothing;
use spev_core::geometry::{LineDetection, DEFAULT_H_MARGIN};
use spev_core::model::{shipped_layout, FitInterval, FlipSpec};

use crate::corpus::SynthConfig;
use crate::error::PipelineError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub roi: RoiConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    #[serde(default)]
    pub flip: FlipSpec,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub fit: FitSection,
    #[serde(default)]
    pub eval: EvalSection,
    #[serde(default)]
    pub synth: SynthConfig,
    #[serde(default)]
    pub cameras: Vec<CameraConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    #[serde(default)]
    pub smoothing: Smoothing,
    #[serde(default)]
    pub denoise: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoiConfig {
    #[serde(default = "default_h_margin")]
    pub h_margin: f64,
    #[serde(default)]
    pub detection: LineDetection,
}

fn default_h_margin() -> f64 {
    DEFAULT_H_MARGIN
}

impl Default for RoiConfig {
    fn default() -> Self {
        Self {
            h_margin: DEFAULT_H_MARGIN,
            detection: LineDetection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaselineConfig {
    #[serde(default = "default_rejection_k")]
    pub rejection_k: f64,
}

fn default_rejection_k() -> f64 {
    3.0
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self { rejection_k: 3.0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Model used by `estimate`; the bundled coefficient table when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default = "shipped_layout")]
    pub intervals: Vec<FitInterval>,
    #[serde(default = "default_version")]
    pub version: String,
}

fn default_version() -> String {
    "fitted".into()
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            intervals: shipped_layout(),
            version: default_version(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    #[default]
    Spev,
    Contrast,
    Both,
}

impl Estimator {
    pub fn spev(self) -> bool {
        matches!(self, Estimator::Spev | Estimator::Both)
    }

    pub fn contrast(self) -> bool {
        matches!(self, Estimator::Contrast | Estimator::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default)]
    pub denominator: ApeDenominator,
    #[serde(default = "default_contrast_threshold")]
    pub contrast_threshold: f64,
    #[serde(default)]
    pub estimator: Estimator,
}

fn default_contrast_threshold() -> f64 {
    DEFAULT_THRESHOLD
}

impl Default for EvalSection {
    fn default() -> Self {
        Self {
            denominator: ApeDenominator::Estimate,
            contrast_threshold: DEFAULT_THRESHOLD,
            estimator: Estimator::Spev,
        }
    }
}

/// Surveyed anchor rows: the far anchors sit `d_15` and `d_9` meters beyond
/// the near anchor `v_2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchors {
    pub v_1_15: f64,
    pub v_1_9: f64,
    pub v_2: f64,
    #[serde(default = "fifteen")]
    pub d_15: f64,
    #[serde(default = "nine")]
    pub d_9: f64,
}

fn fifteen() -> f64 {
    15.0
}

fn nine() -> f64 {
    9.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraConfig {
    pub id: String,
    pub anchors: Anchors,
    /// Horizon row; detected from the clear frame when absent.
    pub v_h: Option<f64>,
    /// Clear-day frame used for lane detection.
    pub clear_frame: Option<PathBuf>,
    /// Clear-day manifest for the entropy baseline.
    pub clear_manifest: Option<PathBuf>,
    /// Frames to estimate.
    pub manifest: Option<PathBuf>,
    /// Reference visibility per frame for fitting and evaluation.
    pub labels: Option<PathBuf>,
    /// Held out in evaluation folds.
    #[serde(default)]
    pub test: bool,
}

/// A loaded configuration: the parsed file plus where it lives.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PipelineConfig,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let config = parse(&text)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir })
    }

    pub fn from_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        Ok(Self {
            config: parse(text)?,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Resolves a config-relative path.
    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.config.output_dir)
    }

    pub fn camera(&self, id: &str) -> Result<&CameraConfig, PipelineError> {
        self.config
            .cameras
            .iter()
            .find(|c| c.id == id)
            .ok_or_else(|| PipelineError::Usage(format!("camera {id} is not in the config")))
    }

    /// SHA-256 of the effective configuration, hex-encoded.
    pub fn hash(&self) -> String {
        config_hash(&self.config)
    }
}

fn parse(text: &str) -> Result<PipelineConfig, PipelineError> {
    let config: PipelineConfig =
        toml::from_str(text).map_err(|e| PipelineError::Usage(format!("invalid config: {e}")))?;
    validate(&config)?;
    Ok(config)
}

fn validate(c: &PipelineConfig) -> Result<(), PipelineError> {
    let bad = |m: String| Err(PipelineError::Usage(m));
    let s = c.preprocess.smoothing;
    if !(s.sigma > 0.0) || s.radius < 1 {
        return bad(format!(
            "smoothing needs sigma > 0 and radius >= 1, got {} and {}",
            s.sigma, s.radius
        ));
    }
    if !(c.baseline.rejection_k > 0.0) {
        return bad(format!(
            "baseline.rejection_k must be > 0, got {}",
            c.baseline.rejection_k
        ));
    }
    if !(c.roi.h_margin >= 0.0) {
        return bad(format!("roi.h_margin must be >= 0, got {}", c.roi.h_margin));
    }
    if !(c.eval.contrast_threshold > 0.0 && c.eval.contrast_threshold < 1.0) {
        return bad(format!(
            "eval.contrast_threshold must be in (0, 1), got {}",
            c.eval.contrast_threshold
        ));
    }
    if c.flip.enabled && !(c.flip.lo < c.flip.hi) {
        return bad(format!("flip needs lo < hi, got {} and {}", c.flip.lo, c.flip.hi));
    }
    let mut ids: Vec<&str> = c.cameras.iter().map(|cam| cam.id.as_str()).collect();
    ids.sort_unstable();
    if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
        return bad(format!("camera id {} appears twice", w[0]));
    }
    for cam in &c.cameras {
        if cam.id.is_empty() || cam.id.contains(['/', '\\']) {
            return bad(format!(
                "camera id {:?} must be non-empty and contain no path separators",
                cam.id
            ));
        }
    }
    c.synth.validate().map_err(PipelineError::Usage)
}

/// Hash of everything that affects results; the output location is excluded.
pub fn config_hash(config: &PipelineConfig) -> String {
    let mut c = config.clone();
    c.output_dir = PathBuf::new();
    let canonical = serde_json::to_vec(&c).expect("config serializes");
    hex(&Sha256::digest(&canonical))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
