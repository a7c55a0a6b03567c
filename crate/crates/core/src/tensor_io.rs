//! Raster and tensor containers plus their on-disk formats.
//!
//! Tensors persist in the OTSR container:
//!
//! | bytes        | content                                   |
//! |--------------|-------------------------------------------|
//! | 0..8         | magic `b"OTSR\0\0\0\x01"` (last byte = version) |
//! | 8            | dtype code, `0` = f32 little-endian       |
//! | 9            | rank `r`                                  |
//! | 10..10+4r    | dimension sizes, u32 little-endian        |
//! | rest         | row-major payload                         |
//!
//! Masks and images are PNG. Depth maps are either rank-2 OTSR files or
//! 16-bit grayscale PNGs with a `{"min": .., "max": ..}` JSON sidecar stored
//! next to the PNG as `<file>.json` (e.g. `depth.png.json`).

use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

pub const OTSR_MAGIC: [u8; 8] = *b"OTSR\0\0\0\x01";
pub const DTYPE_F32: u8 = 0;
pub const DEFAULT_MASK_THRESHOLD: u8 = 128;

/// Dense row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        ensure!(
            expected == data.len(),
            Shape,
            "shape {:?} needs {} values, got {}",
            shape,
            expected,
            data.len()
        );
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "tensor value at flat index {i} is not finite"
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; n],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Fails unless the tensor has exactly `rank` dimensions.
    pub fn expect_rank(&self, rank: usize, what: &str) -> Result<()> {
        ensure!(
            self.rank() == rank,
            Shape,
            "{what} must be rank {rank}, got shape {:?}",
            self.shape
        );
        Ok(())
    }

    /// Encode as an OTSR byte stream.
    pub fn to_otsr_bytes(&self) -> Result<Vec<u8>> {
        ensure!(
            self.shape.len() <= u8::MAX as usize,
            Unsupported,
            "rank {} exceeds 255",
            self.shape.len()
        );
        let mut out = Vec::with_capacity(10 + 4 * self.shape.len() + 4 * self.data.len());
        out.extend_from_slice(&OTSR_MAGIC);
        out.push(DTYPE_F32);
        out.push(self.shape.len() as u8);
        for &d in &self.shape {
            let d = u32::try_from(d)
                .map_err(|_| Error::Unsupported(format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    /// Decode an OTSR byte stream. Never returns a partially filled tensor.
    pub fn from_otsr_bytes(bytes: &[u8]) -> Result<Self> {
        ensure!(bytes.len() >= 10, Format, "OTSR header truncated");
        ensure!(&bytes[..4] == b"OTSR", Format, "bad OTSR magic");
        ensure!(
            bytes[..8] == OTSR_MAGIC,
            Unsupported,
            "OTSR version bytes {:?}",
            &bytes[4..8]
        );
        ensure!(
            bytes[8] == DTYPE_F32,
            Unsupported,
            "OTSR dtype code {}",
            bytes[8]
        );
        let rank = bytes[9] as usize;
        let header = 10 + 4 * rank;
        ensure!(bytes.len() >= header, Format, "OTSR shape truncated");
        let shape: Vec<usize> = bytes[10..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let count = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("OTSR element count overflows".into()))?;
        let payload = &bytes[header..];
        ensure!(
            Some(payload.len()) == count.checked_mul(4),
            Format,
            "OTSR payload is {} bytes, shape {:?} needs {}",
            payload.len(),
            shape,
            count.saturating_mul(4)
        );
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        Tensor::new(shape, data)
    }
}

pub fn save_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    write_bytes(path, &t.to_otsr_bytes()?)
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    Tensor::from_otsr_bytes(&read_bytes(path)?)
}

/// 8-bit image with one or three interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, Validation, "image must be at least 1x1");
        ensure!(
            channels == 1 || channels == 3,
            Validation,
            "image must have 1 or 3 channels, got {channels}"
        );
        ensure!(
            data.len() == width * height * channels,
            Shape,
            "image data length {} != {}x{}x{}",
            data.len(),
            width,
            height,
            channels
        );
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn from_png_bytes(bytes: &[u8]) -> Result<Self> {
        let img = decode_png(bytes)?;
        match img {
            DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                Image::new(w as usize, h as usize, 1, buf.into_raw())
            }
            DynamicImage::ImageRgb8(buf) => {
                let (w, h) = buf.dimensions();
                Image::new(w as usize, h as usize, 3, buf.into_raw())
            }
            other => Err(Error::Format(format!(
                "image must be 8-bit gray or RGB, got {:?}",
                other.color()
            ))),
        }
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let color = if self.channels == 1 {
            ColorType::L8
        } else {
            ColorType::Rgb8
        };
        encode_png(&self.data, self.width, self.height, color)
    }
}

pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    Image::from_png_bytes(&read_bytes(path.as_ref())?)
}

pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &img.to_png_bytes()?)
}

/// Dense depth raster, row-major, finite and nonnegative.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, Validation, "depth map must be at least 1x1");
        ensure!(
            data.len() == width * height,
            Shape,
            "depth data length {} != {}x{}",
            data.len(),
            width,
            height
        );
        if let Some(v) = data.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::Validation(format!(
                "depth values must be finite and >= 0, found {v}"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn uniform(width: usize, height: usize, value: f32) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(0.0, f32::max)
    }

    /// Block-average pooling by an integer factor. Edge blocks average the
    /// pixels they actually contain, so the output is `ceil(w/f) x ceil(h/f)`.
    pub fn avg_pool(&self, factor: usize) -> Result<DepthMap> {
        ensure!(factor >= 1, Validation, "pool factor must be >= 1");
        if factor == 1 {
            return Ok(self.clone());
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut out = Vec::with_capacity(w * h);
        for by in 0..h {
            for bx in 0..w {
                let mut sum = 0.0f64;
                let mut n = 0usize;
                for y in by * factor..((by + 1) * factor).min(self.height) {
                    for x in bx * factor..((bx + 1) * factor).min(self.width) {
                        sum += self.get(x, y) as f64;
                        n += 1;
                    }
                }
                out.push((sum / n as f64) as f32);
            }
        }
        DepthMap::new(w, h, out)
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor {
            shape: vec![self.height, self.width],
            data: self.data.clone(),
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        ensure!(
            t.rank() == 2,
            Validation,
            "depth tensor must be rank 2, got shape {:?}",
            t.shape()
        );
        DepthMap::new(t.shape()[1], t.shape()[0], t.data().to_vec())
    }
}

/// Linear value range of a 16-bit depth PNG.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

pub fn depth_sidecar_path(png: &Path) -> PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Load a depth map from a rank-2 OTSR file or a 16-bit PNG with sidecar.
pub fn load_depth(path: impl AsRef<Path>) -> Result<DepthMap> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.starts_with(b"OTSR") {
        return DepthMap::from_tensor(&Tensor::from_otsr_bytes(&bytes)?);
    }
    let sidecar = depth_sidecar_path(path);
    let range_bytes = std::fs::read(&sidecar).map_err(|e| Error::io(&sidecar, e))?;
    let range: DepthRange = serde_json::from_slice(&range_bytes)
        .map_err(|e| Error::Format(format!("depth sidecar {}: {e}", sidecar.display())))?;
    depth_from_png16_bytes(&bytes, range)
}

/// Decode either encoding of a depth map held in memory.
pub fn depth_from_bytes(bytes: &[u8], range: Option<DepthRange>) -> Result<DepthMap> {
    if bytes.starts_with(b"OTSR") {
        return DepthMap::from_tensor(&Tensor::from_otsr_bytes(bytes)?);
    }
    let range = range.ok_or_else(|| {
        Error::Validation("16-bit depth PNG requires a min/max range".into())
    })?;
    depth_from_png16_bytes(bytes, range)
}

pub fn depth_from_png16_bytes(bytes: &[u8], range: DepthRange) -> Result<DepthMap> {
    ensure!(
        range.min.is_finite() && range.max.is_finite(),
        Validation,
        "depth range must be finite"
    );
    let buf = match decode_png(bytes)? {
        DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::Format(format!(
                "depth PNG must be 16-bit grayscale, got {:?}",
                other.color()
            )))
        }
    };
    let (w, h) = buf.dimensions();
    let span = range.max - range.min;
    let data = buf
        .into_raw()
        .into_iter()
        .map(|s| (range.min + (s as f64 / 65535.0) * span) as f32)
        .collect();
    DepthMap::new(w as usize, h as usize, data)
}

/// Write a depth map as a rank-2 `[H, W]` OTSR file.
pub fn save_depth(depth: &DepthMap, path: impl AsRef<Path>) -> Result<()> {
    save_tensor(&depth.to_tensor(), path)
}

/// Write a depth map as 16-bit PNG plus sidecar. Quantizes to the given range.
pub fn save_depth_png(depth: &DepthMap, range: DepthRange, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let span = range.max - range.min;
    ensure!(span > 0.0, Validation, "depth range must have max > min");
    let samples: Vec<u16> = depth
        .data
        .iter()
        .map(|&v| (((v as f64 - range.min) / span).clamp(0.0, 1.0) * 65535.0).round() as u16)
        .collect();
    let buf = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(
        depth.width as u32,
        depth.height as u32,
        samples,
    )
    .ok_or_else(|| Error::Shape("depth buffer size mismatch".into()))?;
    let mut out = Cursor::new(Vec::new());
    DynamicImage::ImageLuma16(buf)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    write_bytes(path, out.get_ref())?;
    let sidecar = depth_sidecar_path(path);
    let json = serde_json::to_vec(&range).map_err(|e| Error::Format(e.to_string()))?;
    write_bytes(&sidecar, &json)
}

/// Binary raster; every stored value is exactly 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Mask {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        ensure!(width >= 1 && height >= 1, Validation, "mask must be at least 1x1");
        ensure!(
            data.len() == width * height,
            Shape,
            "mask data length {} != {}x{}",
            data.len(),
            width,
            height
        );
        ensure!(
            data.iter().all(|&v| v <= 1),
            Validation,
            "mask values must be 0 or 1"
        );
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y) as u8);
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Threshold arbitrary samples: `1` iff `sample >= threshold`.
    pub fn from_samples(width: usize, height: usize, samples: &[u8], threshold: u8) -> Result<Self> {
        ensure!(
            samples.len() == width * height,
            Shape,
            "sample count {} != {}x{}",
            samples.len(),
            width,
            height
        );
        Mask::new(
            width,
            height,
            samples.iter().map(|&s| (s >= threshold) as u8).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn same_dims(&self, other: &Mask) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Pixelwise AND.
    pub fn and(&self, other: &Mask) -> Result<Mask> {
        ensure!(
            self.same_dims(other),
            Shape,
            "mask dims {}x{} vs {}x{}",
            self.width,
            self.height,
            other.width,
            other.height
        );
        Ok(Mask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a & b).collect(),
        })
    }

    /// `true` when every set pixel of `other` is also set here.
    pub fn covers(&self, other: &Mask) -> bool {
        self.same_dims(other) && self.data.iter().zip(&other.data).all(|(a, b)| a >= b)
    }

    /// Coordinates of every set pixel, row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.data
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0)
            .map(move |(i, _)| (i % self.width, i / self.width))
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let samples: Vec<u8> = self.data.iter().map(|&v| v * 255).collect();
        encode_png(&samples, self.width, self.height, ColorType::L8)
    }

    pub fn from_png_bytes(bytes: &[u8], threshold: u8) -> Result<Self> {
        match decode_png(bytes)? {
            DynamicImage::ImageLuma8(buf) => {
                let (w, h) = buf.dimensions();
                Mask::from_samples(w as usize, h as usize, buf.as_raw(), threshold)
            }
            other => Err(Error::Format(format!(
                "mask PNG must be 8-bit grayscale, got {:?}",
                other.color()
            ))),
        }
    }
}

pub fn load_mask(path: impl AsRef<Path>, threshold: u8) -> Result<Mask> {
    Mask::from_png_bytes(&read_bytes(path.as_ref())?, threshold)
}

pub fn save_mask(mask: &Mask, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), &mask.to_png_bytes()?)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

/// Whole file as UTF-8.
pub fn read_text(path: &Path) -> Result<String> {
    String::from_utf8(read_bytes(path)?)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn decode_png(bytes: &[u8]) -> Result<DynamicImage> {
    image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| Error::Format(format!("png decode: {e}")))
}

fn encode_png(samples: &[u8], width: usize, height: usize, color: ColorType) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        samples,
        width as u32,
        height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    Ok(out.into_inner())
}
