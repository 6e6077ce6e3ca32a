//! Raster types and their on-disk encodings.
//!
//! Three raster kinds flow through the harness:
//!
//! - [`ImageRaster`]: 8-bit grayscale or RGB images, stored as PNG.
//! - [`BinaryMask`]: ground-truth, predicted, relevance and visibility masks,
//!   stored as 8-bit single-channel PNG (positive = 255, negative = 0). Any
//!   nonzero sample reads back as positive.
//! - [`Heatmap`]: saliency values in `[0, 1]`, stored either as NPY v1.0
//!   (`<f4`, C order, shape `(H, W)`) or as 16-bit single-channel PNG where
//!   the value is `sample / 65535`.
//!
//! Loaders validate but never resize, pad or normalize.

mod npy;
mod png_io;

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use npy::{decode_npy, encode_npy};

/// An 8-bit image with 1 or 3 interleaved channels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImageRaster {
    width: u32,
    height: u32,
    channels: u8,
    samples: Vec<u8>,
}

impl ImageRaster {
    pub fn new(width: u32, height: u32, channels: u8, samples: Vec<u8>) -> Result<Self> {
        check_dims(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidRaster(format!(
                "image must have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if samples.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "image sample buffer has {} bytes, expected {expected}",
                samples.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            samples,
        })
    }

    pub fn filled(width: u32, height: u32, channels: u8, value: u8) -> Result<Self> {
        let len = width as usize * height as usize * channels as usize;
        Self::new(width, height, channels, vec![value; len])
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    /// Channel samples of the pixel at row-major index `index`.
    pub fn pixel(&self, index: usize) -> &[u8] {
        let c = self.channels as usize;
        &self.samples[index * c..(index + 1) * c]
    }

    pub fn pixels(&self) -> std::slice::ChunksExact<'_, u8> {
        self.samples.chunks_exact(self.channels as usize)
    }
}

/// What a [`BinaryMask`] represents. Informational only; comparisons never
/// look at the role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskRole {
    GroundTruth,
    Prediction,
    Relevance,
    Visibility,
}

impl fmt::Display for MaskRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MaskRole::GroundTruth => "ground-truth",
            MaskRole::Prediction => "prediction",
            MaskRole::Relevance => "relevance",
            MaskRole::Visibility => "visibility",
        })
    }
}

/// One boolean per pixel, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    role: MaskRole,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, bits: Vec<bool>, role: MaskRole) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if bits.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "mask has {} pixels, expected {expected}",
                bits.len()
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
            role,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool, role: MaskRole) -> Result<Self> {
        Self::new(
            width,
            height,
            vec![value; width as usize * height as usize],
            role,
        )
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        role: MaskRole,
        f: impl FnMut(usize) -> bool,
    ) -> Result<Self> {
        let bits = (0..width as usize * height as usize).map(f).collect();
        Self::new(width, height, bits, role)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn role(&self) -> MaskRole {
        self.role
    }

    pub fn with_role(mut self, role: MaskRole) -> Self {
        self.role = role;
        self
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, index: usize) -> bool {
        self.bits[index]
    }

    pub fn pixel_count(&self) -> usize {
        self.bits.len()
    }

    pub fn positive_count(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    pub fn negative_count(&self) -> u64 {
        self.bits.len() as u64 - self.positive_count()
    }

    pub fn complement(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            bits: self.bits.iter().map(|b| !b).collect(),
            role: self.role,
        }
    }

    pub fn union(&self, other: &BinaryMask) -> Result<Self> {
        self.ensure_dims(other.dims(), "mask")?;
        Ok(Self {
            width: self.width,
            height: self.height,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a || *b)
                .collect(),
            role: self.role,
        })
    }

    /// True when every positive pixel of `self` is also positive in `other`.
    pub fn is_subset_of(&self, other: &BinaryMask) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(a, b)| !a || *b)
    }

    pub(crate) fn ensure_dims(&self, expected: (u32, u32), what: &str) -> Result<()> {
        if self.dims() != expected {
            return Err(Error::DimensionMismatch {
                what: format!("{what} ({})", self.role),
                expected,
                found: self.dims(),
            });
        }
        Ok(())
    }
}

/// Saliency values in `[0, 1]`, row-major, tagged with the producing method.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    width: u32,
    height: u32,
    values: Vec<f32>,
    method: String,
}

impl Heatmap {
    /// Rejects NaN and anything outside `[0, 1]`; values are never clamped.
    pub fn new(width: u32, height: u32, values: Vec<f32>, method: impl Into<String>) -> Result<Self> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if values.len() != expected {
            return Err(Error::InvalidRaster(format!(
                "heatmap has {} values, expected {expected}",
                values.len()
            )));
        }
        for (index, &value) in values.iter().enumerate() {
            if value.is_nan() {
                return Err(Error::HeatmapNan { index });
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::HeatmapOutOfRange { index, value });
            }
        }
        Ok(Self {
            width,
            height,
            values,
            method: method.into(),
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn max_value(&self) -> f32 {
        self.values.iter().copied().fold(0.0, f32::max)
    }
}

/// On-disk carrier for a heatmap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeatmapEncoding {
    /// NPY v1.0, little-endian float32. Lossless.
    Npy,
    /// 16-bit grayscale PNG, `value = sample / 65535`. Lossy.
    Png16,
}

impl HeatmapEncoding {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("npy") => Ok(HeatmapEncoding::Npy),
            Some(ext) if ext.eq_ignore_ascii_case("png") => Ok(HeatmapEncoding::Png16),
            _ => Err(Error::InvalidRaster(format!(
                "{}: heatmap must have a .npy or .png extension",
                path.display()
            ))),
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            HeatmapEncoding::Npy => "npy",
            HeatmapEncoding::Png16 => "png",
        }
    }
}

fn check_dims(width: u32, height: u32) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension { width, height });
    }
    Ok(())
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_image(path: impl AsRef<Path>) -> Result<ImageRaster> {
    let path = path.as_ref();
    decode_image(&read_file(path)?, path)
}

/// Decodes an 8-bit grayscale or RGB PNG. `origin` is used in error messages.
pub fn decode_image(bytes: &[u8], origin: &Path) -> Result<ImageRaster> {
    let decoded = png_io::decode(bytes, origin)?;
    if decoded.bit_depth != 8 {
        return Err(Error::UnsupportedBitDepth {
            path: origin.to_path_buf(),
            found: decoded.bit_depth,
            expected: 8,
        });
    }
    let channels = match decoded.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::Rgb => 3,
        other => {
            return Err(Error::UnsupportedChannels {
                path: origin.to_path_buf(),
                found: format!("{other:?}"),
                expected: "grayscale or RGB",
            })
        }
    };
    ImageRaster::new(decoded.width, decoded.height, channels, decoded.data)
}

pub fn load_mask(path: impl AsRef<Path>, role: MaskRole) -> Result<BinaryMask> {
    let path = path.as_ref();
    decode_mask(&read_file(path)?, path, role)
}

/// Decodes an 8-bit single-channel PNG; a pixel is positive iff its sample is nonzero.
pub fn decode_mask(bytes: &[u8], origin: &Path, role: MaskRole) -> Result<BinaryMask> {
    let decoded = png_io::decode(bytes, origin)?;
    if decoded.color != png::ColorType::Grayscale {
        return Err(Error::UnsupportedChannels {
            path: origin.to_path_buf(),
            found: format!("{:?}", decoded.color),
            expected: "single-channel grayscale",
        });
    }
    if decoded.bit_depth != 8 {
        return Err(Error::UnsupportedBitDepth {
            path: origin.to_path_buf(),
            found: decoded.bit_depth,
            expected: 8,
        });
    }
    let bits = decoded.data.iter().map(|&s| s != 0).collect();
    BinaryMask::new(decoded.width, decoded.height, bits, role)
}

/// Loads a heatmap, choosing the decoder from the file extension.
pub fn load_heatmap(path: impl AsRef<Path>, method: &str) -> Result<Heatmap> {
    let path = path.as_ref();
    let encoding = HeatmapEncoding::from_path(path)?;
    decode_heatmap(&read_file(path)?, path, encoding, method)
}

pub fn decode_heatmap(
    bytes: &[u8],
    origin: &Path,
    encoding: HeatmapEncoding,
    method: &str,
) -> Result<Heatmap> {
    match encoding {
        HeatmapEncoding::Npy => {
            let (height, width, values) = npy::decode_npy(bytes, origin)?;
            Heatmap::new(width, height, values, method)
        }
        HeatmapEncoding::Png16 => {
            let decoded = png_io::decode(bytes, origin)?;
            if decoded.color != png::ColorType::Grayscale {
                return Err(Error::UnsupportedChannels {
                    path: origin.to_path_buf(),
                    found: format!("{:?}", decoded.color),
                    expected: "single-channel grayscale",
                });
            }
            if decoded.bit_depth != 16 {
                return Err(Error::UnsupportedBitDepth {
                    path: origin.to_path_buf(),
                    found: decoded.bit_depth,
                    expected: 16,
                });
            }
            let values = decoded
                .data
                .chunks_exact(2)
                .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32 / 65535.0)
                .collect();
            Heatmap::new(decoded.width, decoded.height, values, method)
        }
    }
}

pub fn encode_image(image: &ImageRaster) -> Result<Vec<u8>> {
    let color = if image.channels == 1 {
        png::ColorType::Grayscale
    } else {
        png::ColorType::Rgb
    };
    png_io::encode(image.width, image.height, color, png::BitDepth::Eight, &image.samples)
}

/// Canonical mask encoding: positive = 255, negative = 0.
pub fn encode_mask(mask: &BinaryMask) -> Result<Vec<u8>> {
    let samples: Vec<u8> = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    png_io::encode(
        mask.width,
        mask.height,
        png::ColorType::Grayscale,
        png::BitDepth::Eight,
        &samples,
    )
}

pub fn encode_heatmap(heatmap: &Heatmap, encoding: HeatmapEncoding) -> Result<Vec<u8>> {
    match encoding {
        HeatmapEncoding::Npy => Ok(npy::encode_npy(heatmap.height, heatmap.width, &heatmap.values)),
        HeatmapEncoding::Png16 => {
            let mut samples = Vec::with_capacity(heatmap.values.len() * 2);
            for &v in &heatmap.values {
                let q = (v as f64 * 65535.0).round() as u16;
                samples.extend_from_slice(&q.to_be_bytes());
            }
            png_io::encode(
                heatmap.width,
                heatmap.height,
                png::ColorType::Grayscale,
                png::BitDepth::Sixteen,
                &samples,
            )
        }
    }
}

pub fn store_image(image: &ImageRaster, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_image(image)?)
}

pub fn store_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_mask(mask)?)
}

pub fn store_heatmap(heatmap: &Heatmap, path: impl AsRef<Path>, encoding: HeatmapEncoding) -> Result<()> {
    write_file(path.as_ref(), &encode_heatmap(heatmap, encoding)?)
}
