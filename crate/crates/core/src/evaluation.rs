//! Relative-error metrics and the leave-one-camera-out protocol.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{fit, FitInterval, FlipSpec, ModelError, PiecewiseModel, Sample};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("relative error is undefined for a zero denominator")]
    ZeroEstimate,
    #[error("no rows to summarize")]
    EmptyInput,
    #[error("leave-one-out needs at least 2 cameras, got {0}")]
    InsufficientCameras(usize),
    #[error("test camera {0} has no data")]
    UnknownCamera(String),
    #[error("fold for {camera}: {source}")]
    Fit {
        camera: String,
        #[source]
        source: ModelError,
    },
}

/// Which visibility goes in the APE denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApeDenominator {
    /// `(est − ref) / est`, the default.
    #[default]
    Estimate,
    /// `(est − ref) / ref`, for analysis only.
    Reference,
}

/// Signed relative error in percent, `(est − ref)/est · 100`.
pub fn ape(vis_est: f64, vis_ref: f64) -> Result<f64, EvalError> {
    ape_with(vis_est, vis_ref, ApeDenominator::Estimate)
}

pub fn ape_with(vis_est: f64, vis_ref: f64, denom: ApeDenominator) -> Result<f64, EvalError> {
    let d = match denom {
        ApeDenominator::Estimate => vis_est,
        ApeDenominator::Reference => vis_ref,
    };
    if d == 0.0 {
        return Err(EvalError::ZeroEstimate);
    }
    Ok((vis_est - vis_ref) / d * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub frame_index: u64,
    pub vis_est: f64,
    pub vis_ref: f64,
    pub ape_percent: f64,
    pub estimator: String,
    /// Entropy ratio the estimate came from, for plotting.
    pub h_r: Option<f64>,
    pub piece: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub frac_under_10pct: f64,
    pub frac_under_20pct: f64,
    pub min_ape: f64,
    pub max_ape: f64,
    pub mean_abs_ape: f64,
}

/// Threshold fractions use `|APE|`; extremes are signed.
pub fn summarize(apes: &[f64]) -> Result<Summary, EvalError> {
    if apes.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let n = apes.len();
    let frac = |limit: f64| apes.iter().filter(|a| a.abs() < limit).count() as f64 / n as f64;
    Ok(Summary {
        n,
        frac_under_10pct: frac(10.0),
        frac_under_20pct: frac(20.0),
        min_ape: apes.iter().copied().fold(f64::INFINITY, f64::min),
        max_ape: apes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean_abs_ape: apes.iter().map(|a| a.abs()).sum::<f64>() / n as f64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub camera_id: String,
    pub rows: Vec<EvalRow>,
    pub summary: Summary,
    /// Cameras whose samples trained this fold's model.
    pub training_cameras: Vec<String>,
    pub n_train: usize,
    pub model: PiecewiseModel,
}

/// A labelled frame: raw (unflipped) entropy ratio and reference visibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub frame_index: u64,
    pub h_r: f64,
    pub vis_ref: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub intervals: Vec<FitInterval>,
    pub flip: FlipSpec,
    pub denominator: ApeDenominator,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            intervals: crate::model::shipped_layout(),
            flip: FlipSpec::default(),
            denominator: ApeDenominator::Estimate,
        }
    }
}

/// Training samples for `fit`, with the flip applied.
pub fn training_samples<'a>(labelled: impl IntoIterator<Item = &'a LabelledSample>, flip: &FlipSpec) -> Vec<Sample> {
    labelled
        .into_iter()
        .map(|s| Sample {
            x: flip.apply(s.h_r),
            vis: s.vis_ref,
        })
        .collect()
}

/// Runs `model` over a camera's frames in order, feeding each estimate
/// forward as the next frame's previous estimate.
pub fn evaluate_sequence(
    model: &PiecewiseModel,
    samples: &[LabelledSample],
    denominator: ApeDenominator,
) -> Result<Vec<EvalRow>, EvalError> {
    let mut prev = None;
    let mut rows = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model
            .predict(model.flip.apply(s.h_r), prev)
            .map_err(|source| EvalError::Fit {
                camera: String::new(),
                source,
            })?;
        prev = Some(p.vis);
        rows.push(EvalRow {
            frame_index: s.frame_index,
            vis_est: p.vis,
            vis_ref: s.vis_ref,
            ape_percent: ape_with(p.vis, s.vis_ref, denominator)?,
            estimator: "spev".into(),
            h_r: Some(s.h_r),
            piece: Some(p.piece),
        });
    }
    Ok(rows)
}

/// For each test camera, fits on every other camera and evaluates on the
/// held-out one.
pub fn leave_one_out(
    datasets: &BTreeMap<String, Vec<LabelledSample>>,
    test_cameras: &[String],
    config: &FitConfig,
) -> Result<BTreeMap<String, EvalReport>, EvalError> {
    if datasets.len() < 2 {
        return Err(EvalError::InsufficientCameras(datasets.len()));
    }
    let mut reports = BTreeMap::new();
    for camera in test_cameras {
        let held_out = datasets
            .get(camera)
            .ok_or_else(|| EvalError::UnknownCamera(camera.clone()))?;
        let training_cameras: Vec<String> = datasets.keys().filter(|c| *c != camera).cloned().collect();
        let train = training_samples(training_cameras.iter().flat_map(|c| datasets[c].iter()), &config.flip);
        let model =
            fit(&train, &config.intervals, config.flip, &format!("loo-{camera}")).map_err(|source| EvalError::Fit {
                camera: camera.clone(),
                source,
            })?;
        let rows = evaluate_sequence(&model, held_out, config.denominator).map_err(|e| match e {
            EvalError::Fit { source, .. } => EvalError::Fit {
                camera: camera.clone(),
                source,
            },
            other => other,
        })?;
        let apes: Vec<f64> = rows.iter().map(|r| r.ape_percent).collect();
        reports.insert(
            camera.clone(),
            EvalReport {
                camera_id: camera.clone(),
                summary: summarize(&apes)?,
                rows,
                n_train: train.len(),
                training_cameras,
                model,
            },
        );
    }
    Ok(reports)
}

/// Fractional ranks (1-based), ties sharing their average rank.
fn ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        cov += (x - ma) * (y - mb);
        va += (x - ma).powi(2);
        vb += (y - mb).powi(2);
    }
    (va > 0.0 && vb > 0.0).then(|| cov / (va * vb).sqrt())
}
