//! Grayscale frame loading and preprocessing.
//!
//! Frames are stored as row-major `f64` intensities in `[0, 1]`. Conversion
//! from 8-bit rasters happens once at load time, so everything downstream
//! (entropy, fog synthesis, contrast) works in unit-free intensities.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Cursor};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, ImageFormat, ImageReader, Luma};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Luma weights applied to RGB rasters.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("cannot read {path}: {source}")]
    UnreadableFile {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unsupported raster format in {path}: {detail}")]
    UnsupportedFormat { path: PathBuf, detail: String },
    #[error("zero-sized image in {path}")]
    ZeroSizedImage { path: PathBuf },
    #[error("frame must be at least 2x2, got {width}x{height}")]
    TooSmall { width: usize, height: usize },
    #[error("intensity buffer has {got} values, expected {expected}")]
    BufferSize { expected: usize, got: usize },
    #[error("intensity at index {index} is {value}, outside [0, 1]")]
    InvalidIntensity { index: usize, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("manifest {path} line {line}: {detail}")]
    Manifest { path: PathBuf, line: usize, detail: String },
    #[error("cannot encode frame: {0}")]
    Encode(String),
}

/// A grayscale intensity raster, row-major, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    width: usize,
    height: usize,
    data: Vec<f64>,
    pub timestamp: f64,
    pub camera_id: String,
    pub frame_index: u64,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, FrameError> {
        if width < 2 || height < 2 {
            return Err(FrameError::TooSmall { width, height });
        }
        if data.len() != width * height {
            return Err(FrameError::BufferSize {
                expected: width * height,
                got: data.len(),
            });
        }
        if let Some((index, &value)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(FrameError::InvalidIntensity { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
            timestamp: 0.0,
            camera_id: String::new(),
            frame_index: 0,
        })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, FrameError> {
        Self::new(width, height, vec![value; width * height])
    }

    /// Builds a frame by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, FrameError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn with_meta(mut self, camera_id: &str, frame_index: u64, timestamp: f64) -> Self {
        self.camera_id = camera_id.to_string();
        self.frame_index = frame_index;
        self.timestamp = timestamp;
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    /// Applies `f(x, y, value)` to every pixel, keeping dimensions and
    /// metadata. Results are clamped into `[0, 1]`.
    pub fn map(&self, mut f: impl FnMut(usize, usize, f64) -> f64) -> GrayFrame {
        let mut data = Vec::with_capacity(self.data.len());
        for y in 0..self.height {
            for x in 0..self.width {
                data.push(f(x, y, self.get(x, y)).clamp(0.0, 1.0));
            }
        }
        self.with_data(data)
    }

    fn with_data(&self, data: Vec<f64>) -> GrayFrame {
        GrayFrame {
            width: self.width,
            height: self.height,
            data,
            timestamp: self.timestamp,
            camera_id: self.camera_id.clone(),
            frame_index: self.frame_index,
        }
    }

    /// Quantizes to 8 bits (round to nearest).
    pub fn to_gray_image(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([(self.get(x as usize, y as usize) * 255.0).round() as u8])
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, FrameError> {
        let mut buf = Cursor::new(Vec::new());
        self.to_gray_image()
            .write_to(&mut buf, ImageFormat::Png)
            .map_err(|e| FrameError::Encode(e.to_string()))?;
        Ok(buf.into_inner())
    }

    /// Writes an 8-bit raster; the container is picked from the extension
    /// (`.pgm` gives binary P5, anything else PNG).
    pub fn save(&self, path: &Path) -> Result<(), FrameError> {
        let format = match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pgm") => ImageFormat::Pnm,
            _ => ImageFormat::Png,
        };
        let file = File::create(path).map_err(|source| FrameError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        let mut out = BufWriter::new(file);
        self.to_gray_image()
            .write_to(&mut out, format)
            .map_err(|e| FrameError::Encode(e.to_string()))
    }
}

/// Decodes an 8-bit grayscale or RGB(A) PNG/PGM into a [`GrayFrame`].
pub fn load_frame(path: &Path) -> Result<GrayFrame, FrameError> {
    let bytes = std::fs::read(path).map_err(|source| FrameError::UnreadableFile {
        path: path.to_path_buf(),
        source,
    })?;
    decode_frame(&bytes).map_err(|e| match e {
        DecodeFailure::Unsupported(detail) => FrameError::UnsupportedFormat {
            path: path.to_path_buf(),
            detail,
        },
        DecodeFailure::ZeroSized => FrameError::ZeroSizedImage {
            path: path.to_path_buf(),
        },
        DecodeFailure::Frame(e) => e,
    })
}

enum DecodeFailure {
    Unsupported(String),
    ZeroSized,
    Frame(FrameError),
}

fn decode_frame(bytes: &[u8]) -> Result<GrayFrame, DecodeFailure> {
    let reader = ImageReader::new(Cursor::new(bytes))
        .with_guessed_format()
        .map_err(|e| DecodeFailure::Unsupported(e.to_string()))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Pnm) => {}
        other => {
            return Err(DecodeFailure::Unsupported(format!(
                "container {other:?} is not PNG or PGM"
            )))
        }
    }
    let image = reader.decode().map_err(|e| DecodeFailure::Unsupported(e.to_string()))?;
    let (width, height) = (image.width() as usize, image.height() as usize);
    if width == 0 || height == 0 {
        return Err(DecodeFailure::ZeroSized);
    }
    let data: Vec<f64> = match image {
        DynamicImage::ImageLuma8(img) => img.into_raw().iter().map(|&v| v as f64 / 255.0).collect(),
        DynamicImage::ImageLumaA8(img) => img.pixels().map(|p| p.0[0] as f64 / 255.0).collect(),
        DynamicImage::ImageRgb8(img) => img.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        DynamicImage::ImageRgba8(img) => img.pixels().map(|p| luma(p.0[0], p.0[1], p.0[2])).collect(),
        other => {
            return Err(DecodeFailure::Unsupported(format!(
                "only 8-bit rasters are supported, got {:?}",
                other.color()
            )))
        }
    };
    GrayFrame::new(width, height, data).map_err(DecodeFailure::Frame)
}

fn luma(r: u8, g: u8, b: u8) -> f64 {
    // Rounding noise can push a white pixel a hair above 1.
    let y = LUMA_WEIGHTS[0] * r as f64 + LUMA_WEIGHTS[1] * g as f64 + LUMA_WEIGHTS[2] * b as f64;
    (y / 255.0).min(1.0)
}

/// Normalized 1D Gaussian kernel of length `2 * radius + 1`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Result<Vec<f64>, FrameError> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(FrameError::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    if radius == 0 {
        return Err(FrameError::InvalidParameter("radius must be >= 1".into()));
    }
    let r = radius as isize;
    let mut kernel: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|w| *w /= total);
    Ok(kernel)
}

#[inline]
fn clamp_index(i: isize, len: usize) -> usize {
    i.clamp(0, len as isize - 1) as usize
}

/// Separable Gaussian blur, kernel truncated at `±radius`, edge replication.
pub fn gaussian_smooth(frame: &GrayFrame, sigma: f64, radius: usize) -> Result<GrayFrame, FrameError> {
    let kernel = gaussian_kernel(sigma, radius)?;
    let (w, h) = frame.dims();
    let r = radius as isize;

    let mut horizontal = vec![0.0; w * h];
    for y in 0..h {
        let row = frame.row(y);
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                acc += weight * row[clamp_index(x as isize + k as isize - r, w)];
            }
            horizontal[y * w + x] = acc;
        }
    }

    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, weight) in kernel.iter().enumerate() {
                acc += weight * horizontal[clamp_index(y as isize + k as isize - r, h) * w + x];
            }
            out[y * w + x] = acc.clamp(0.0, 1.0);
        }
    }
    Ok(frame.with_data(out))
}

/// 3x3 median filter with edge replication.
pub fn median_denoise(frame: &GrayFrame) -> GrayFrame {
    let (w, h) = frame.dims();
    let mut out = Vec::with_capacity(w * h);
    let mut window = [0.0f64; 9];
    for y in 0..h {
        for x in 0..w {
            let mut n = 0;
            for dy in -1..=1isize {
                let yy = clamp_index(y as isize + dy, h);
                for dx in -1..=1isize {
                    window[n] = frame.get(clamp_index(x as isize + dx, w), yy);
                    n += 1;
                }
            }
            window.sort_unstable_by(f64::total_cmp);
            out.push(window[4]);
        }
    }
    frame.with_data(out)
}

/// Optional preprocessing applied before any measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothing {
    pub sigma: f64,
    pub radius: usize,
}

impl Default for Smoothing {
    fn default() -> Self {
        Self { sigma: 1.0, radius: 2 }
    }
}

/// One line of a JSON-lines frame manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub frame_index: u64,
    pub timestamp: f64,
    pub camera_id: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameManifest {
    pub entries: Vec<ManifestEntry>,
}

impl FrameManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self, String> {
        for pair in entries.windows(2) {
            if pair[1].frame_index <= pair[0].frame_index {
                return Err(format!(
                    "frame_index {} does not increase after {}",
                    pair[1].frame_index, pair[0].frame_index
                ));
            }
            if pair[1].timestamp < pair[0].timestamp {
                return Err(format!("timestamp decreases at frame_index {}", pair[1].frame_index));
            }
        }
        Ok(Self { entries })
    }

    /// Reads a JSON-lines manifest. Relative frame paths are resolved against
    /// the manifest's directory.
    pub fn read(path: &Path) -> Result<Self, FrameError> {
        let file = File::open(path).map_err(|source| FrameError::UnreadableFile {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let mut entries = Vec::new();
        let mut last_line = 0;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| FrameError::UnreadableFile {
                path: path.to_path_buf(),
                source,
            })?;
            last_line = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let mut entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| FrameError::Manifest {
                path: path.to_path_buf(),
                line: i + 1,
                detail: e.to_string(),
            })?;
            if entry.path.is_relative() {
                entry.path = base.join(&entry.path);
            }
            entries.push(entry);
        }
        Self::new(entries).map_err(|detail| FrameError::Manifest {
            path: path.to_path_buf(),
            line: last_line,
            detail,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
