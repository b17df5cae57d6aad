//! Image data model, pixel arithmetic, L∞ projection and lossless 8-bit I/O.
//!
//! Pixels live in `[0, 1]` as `f64`, row-major, three interleaved channels.
//! Perturbation budgets are quoted in 255-scale units (`epsilon = 2` means
//! no element moves by more than `2/255`).

use std::io::Cursor;
use std::path::Path;

use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Extensions refused for perturbed output: lossy codecs destroy ±1/255 steps.
const LOSSY_EXTENSIONS: &[&str] = &["jpg", "jpeg", "jfif", "webp", "avif", "heic", "heif", "jxl"];

/// An `H×W×3` image with every element in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

/// A signed additive perturbation with the same shape as its target image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

fn check_len(height: usize, width: usize, len: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::validation(format!("empty image shape {height}x{width}")));
    }
    let expected = height * width * CHANNELS;
    if len != expected {
        return Err(Error::validation(format!(
            "data length {len} does not match {height}x{width}x{CHANNELS} = {expected}"
        )));
    }
    Ok(())
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height, width, data.len())?;
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::validation(format!("pixel {i} = {v} is outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Builds an image, clamping every element into `[0, 1]`. Non-finite values are rejected.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f64>) -> Result<Self> {
        check_len(height, width, data.len())?;
        for (i, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::validation(format!("pixel {i} is not finite")));
            }
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Self { height, width, data })
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width * CHANNELS])
    }

    pub fn from_rgb8(height: usize, width: usize, bytes: &[u8]) -> Result<Self> {
        check_len(height, width, bytes.len())?;
        let data = bytes.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Self { height, width, data })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Quantizes to 8 bits with `round(v·255)`.
    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| quantize(v)).collect()
    }

    /// Largest absolute element-wise difference.
    pub fn linf_distance(&self, other: &ImageTensor) -> Result<f64> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(self.shape(), other.shape()));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Largest difference in 8-bit levels, if both images sit exactly on the 1/255 grid.
    pub fn linf_levels(&self, other: &ImageTensor) -> Result<Option<u32>> {
        if self.shape() != other.shape() {
            return Err(shape_mismatch(self.shape(), other.shape()));
        }
        let mut max = 0u32;
        for (a, b) in self.data.iter().zip(&other.data) {
            match (grid_level(*a), grid_level(*b)) {
                (Some(la), Some(lb)) => max = max.max(la.abs_diff(lb)),
                _ => return Ok(None),
            }
        }
        Ok(Some(max))
    }

    pub fn is_on_grid(&self) -> bool {
        self.data.iter().all(|v| grid_level(*v).is_some())
    }

    /// Encodes the quantized image as PNG bytes.
    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let img = self.to_rgb_image();
        let mut out = Cursor::new(Vec::new());
        img.write_to(&mut out, ImageFormat::Png)
            .map_err(|e| Error::validation(format!("png encode failed: {e}")))?;
        Ok(out.into_inner())
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
            .map_err(|e| Error::validation(format!("png decode failed: {e}")))?;
        Self::from_dynamic(img)
    }

    fn to_rgb_image(&self) -> RgbImage {
        RgbImage::from_raw(self.width as u32, self.height as u32, self.to_rgb8())
            .expect("length checked at construction")
    }

    fn from_dynamic(img: image::DynamicImage) -> Result<Self> {
        use image::DynamicImage::*;
        let rgb = match img {
            ImageRgb8(rgb) => rgb,
            img @ (ImageLuma8(_) | ImageLumaA8(_) | ImageRgba8(_)) => img.to_rgb8(),
            other => {
                return Err(Error::UnsupportedFormat(format!(
                    "{:?} (only 8-bit images are accepted)",
                    other.color()
                )))
            }
        };
        let (w, h) = rgb.dimensions();
        Self::from_rgb8(h as usize, w as usize, rgb.as_raw())
    }
}

impl Perturbation {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        check_len(height, width, data.len())?;
        Ok(Self { height, width, data })
    }

    pub fn zeros_like(image: &ImageTensor) -> Self {
        Self {
            height: image.height,
            width: image.width,
            data: vec![0.0; image.data.len()],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn linf_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    /// Snaps elements within float noise of a 1/255 level onto that level exactly.
    pub fn snap_to_grid(&mut self) {
        for v in &mut self.data {
            let scaled = *v * 255.0;
            let level = scaled.round();
            if (scaled - level).abs() < 1e-9 {
                *v = level / 255.0;
            }
        }
    }
}

fn shape_mismatch(a: (usize, usize), b: (usize, usize)) -> Error {
    Error::validation(format!("shape mismatch: {}x{} vs {}x{}", a.0, a.1, b.0, b.1))
}

pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Returns the signed 8-bit level `k` if `v` is exactly `k as f64 / 255.0`.
pub fn grid_level(v: f64) -> Option<i32> {
    let level = (v * 255.0).round();
    if level.abs() > 1e6 {
        return None;
    }
    (level / 255.0 == v).then_some(level as i32)
}

/// Clamps every element of `delta` into `[-epsilon/255, +epsilon/255]`.
pub fn clamp_project(delta: &Perturbation, epsilon: f64) -> Result<Perturbation> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::validation(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    let bound = epsilon / 255.0;
    let mut data = Vec::with_capacity(delta.data.len());
    for (i, v) in delta.data.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::validation(format!("perturbation element {i} is not finite")));
        }
        data.push(v.clamp(-bound, bound));
    }
    Ok(Perturbation {
        height: delta.height,
        width: delta.width,
        data,
    })
}

/// Returns `clamp[0,1](x + alpha·delta)`.
///
/// When `x`, `alpha·delta` and the result all live on the 1/255 grid, the sum
/// is taken in integer levels so the output survives 8-bit save/load exactly.
pub fn apply_perturbation(x: &ImageTensor, delta: &Perturbation, alpha: f64) -> Result<ImageTensor> {
    if x.shape() != delta.shape() || x.data.len() != delta.data.len() {
        return Err(shape_mismatch(x.shape(), delta.shape()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::validation(format!("alpha must be finite and >= 0, got {alpha}")));
    }
    let mut data = Vec::with_capacity(x.data.len());
    for (i, (&xv, &dv)) in x.data.iter().zip(&delta.data).enumerate() {
        if !dv.is_finite() {
            return Err(Error::validation(format!("perturbation element {i} is not finite")));
        }
        let step = alpha * dv;
        let out = match (grid_level(xv), grid_level(step)) {
            (Some(lx), Some(ls)) => f64::from((lx + ls).clamp(0, 255)) / 255.0,
            _ => (xv + step).clamp(0.0, 1.0),
        };
        data.push(out);
    }
    Ok(ImageTensor {
        height: x.height,
        width: x.width,
        data,
    })
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .unwrap_or_default()
}

/// Rejects output paths whose extension is not a lossless 8-bit format.
pub fn check_output_path(path: &Path) -> Result<()> {
    let ext = extension(path);
    if LOSSY_EXTENSIONS.contains(&ext.as_str()) {
        return Err(Error::LossyFormat(ext));
    }
    if ext != "png" {
        return Err(Error::UnsupportedFormat(ext));
    }
    Ok(())
}

/// Writes `x` as an 8-bit PNG (`round(v·255)` quantization).
pub fn save_image(x: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    check_output_path(path)?;
    x.to_rgb_image()
        .save_with_format(path, ImageFormat::Png)
        .map_err(|e| Error::ImageIo {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Reads an 8-bit PNG and maps each level back via `v/255`.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let ext = extension(path);
    if ext != "png" {
        return Err(Error::UnsupportedFormat(ext));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::ImageIo {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    ImageTensor::from_png_bytes(&bytes).map_err(|e| match e {
        Error::Validation(message) => Error::ImageIo {
            path: path.to_path_buf(),
            message,
        },
        other => other,
    })
}
