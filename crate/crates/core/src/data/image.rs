//! Image decoding, bilinear resizing and the in-memory sample type.
//!
//! PPM (`P6`) and PGM (`P5`) are decoded natively; PNG and JPEG need the
//! `codecs` feature.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Default intensity rescale applied at decode time.
pub const DEFAULT_RESCALE: f32 = 1.0 / 255.0;

/// Decoded RGB raster, channels-last, intensities on the 0..=255 scale.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn from_u8(width: usize, height: usize, rgb: &[u8]) -> Self {
        assert_eq!(rgb.len(), width * height * 3);
        Self {
            width,
            height,
            data: rgb.iter().map(|&v| v as f32).collect(),
        }
    }
}

/// One normalised image: `(H, W, 3)` pixels in [0,1] plus its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageSample {
    pub pixels: Tensor<f32>,
    pub label: usize,
    pub path: PathBuf,
}

impl ImageSample {
    pub fn new(pixels: Tensor<f32>, label: usize, path: impl Into<PathBuf>) -> Result<Self> {
        if pixels.rank() != 3 || pixels.shape()[2] != 3 {
            return Err(Error::InvalidShape {
                shape: pixels.shape().to_vec(),
                reason: "image samples are (H, W, 3)".into(),
            });
        }
        if pixels.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::invalid("pixel values must lie in [0, 1]"));
        }
        Ok(Self {
            pixels,
            label,
            path: path.into(),
        })
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }

    /// Channels-first copy, `(3, H, W)`, as the network consumes it.
    pub fn to_chw(&self) -> Vec<f32> {
        let (h, w) = (self.height(), self.width());
        let src = self.pixels.data();
        let mut out = vec![0.0; 3 * h * w];
        for y in 0..h {
            for x in 0..w {
                for c in 0..3 {
                    out[(c * h + y) * w + x] = src[(y * w + x) * 3 + c];
                }
            }
        }
        out
    }
}

fn decode_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Decode {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Netpbm header tokenizer that skips whitespace and `#` comments.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Header<'_> {
    fn token(&mut self) -> Option<&[u8]> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        (self.pos > start).then(|| &self.bytes[start..self.pos])
    }

    fn number(&mut self) -> Option<usize> {
        std::str::from_utf8(self.token()?).ok()?.parse().ok()
    }
}

fn decode_netpbm(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let mut h = Header { bytes, pos: 0 };
    let channels = match h.token() {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(decode_err(path, "not a binary PPM/PGM file")),
    };
    let (Some(width), Some(height), Some(maxval)) = (h.number(), h.number(), h.number()) else {
        return Err(decode_err(path, "malformed header"));
    };
    if width == 0 || height == 0 || maxval == 0 || maxval > 65535 {
        return Err(decode_err(
            path,
            format!("bad header values {width}x{height} max {maxval}"),
        ));
    }
    // exactly one whitespace byte separates the header from the raster
    let start = h.pos + 1;
    let depth = if maxval > 255 { 2 } else { 1 };
    let needed = width * height * channels * depth;
    if bytes.len() < start + needed {
        return Err(decode_err(
            path,
            format!(
                "truncated raster: need {needed} bytes, have {}",
                bytes.len().saturating_sub(start)
            ),
        ));
    }
    let raster = &bytes[start..start + needed];
    let scale = 255.0 / maxval as f32;
    let samples: Vec<f32> = if depth == 1 {
        raster.iter().map(|&v| v as f32).collect()
    } else {
        raster
            .chunks(2)
            .map(|b| u16::from_be_bytes([b[0], b[1]]) as f32)
            .collect()
    };
    let samples: Vec<f32> = if maxval == 255 {
        samples
    } else {
        samples.iter().map(|&v| (v * scale).min(255.0)).collect()
    };
    let data = if channels == 3 {
        samples
    } else {
        samples.iter().flat_map(|&v| [v, v, v]).collect()
    };
    Ok(RgbImage {
        width,
        height,
        data,
    })
}

#[cfg(feature = "codecs")]
fn decode_other(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    let img = image::load_from_memory(bytes).map_err(|e| decode_err(path, e.to_string()))?;
    let rgb = img.to_rgb8();
    Ok(RgbImage::from_u8(
        rgb.width() as usize,
        rgb.height() as usize,
        rgb.as_raw(),
    ))
}

#[cfg(not(feature = "codecs"))]
fn decode_other(_bytes: &[u8], path: &Path) -> Result<RgbImage> {
    Err(decode_err(
        path,
        "unsupported format (PNG/JPEG need the `codecs` feature)",
    ))
}

/// Whether PNG/JPEG decoding was compiled in.
pub const fn has_codecs() -> bool {
    cfg!(feature = "codecs")
}

pub fn decode_bytes(bytes: &[u8], path: &Path) -> Result<RgbImage> {
    if bytes.starts_with(b"P6") || bytes.starts_with(b"P5") {
        decode_netpbm(bytes, path)
    } else {
        decode_other(bytes, path)
    }
}

pub fn decode_file(path: &Path) -> Result<RgbImage> {
    let bytes = fs::read(path)?;
    decode_bytes(&bytes, path)
}

/// Writes an 8-bit binary PPM.
pub fn write_ppm(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    if rgb.len() != width * height * 3 {
        return Err(Error::invalid(
            "PPM raster length does not match dimensions",
        ));
    }
    let mut f = fs::File::create(path)?;
    write!(f, "P6\n{width} {height}\n255\n")?;
    f.write_all(rgb)?;
    Ok(())
}

#[inline]
fn lerp(a: f32, b: f32, t: f32) -> f32 {
    // exact when a == b, so constant regions stay constant
    a + (b - a) * t
}

/// Bilinear sample of a channels-last raster at fractional `(sx, sy)`,
/// clamping to the border (edge replication).
pub(crate) fn sample_bilinear(
    src: &[f32],
    width: usize,
    height: usize,
    sx: f32,
    sy: f32,
    out: &mut [f32; 3],
) {
    let sx = sx.clamp(0.0, (width - 1) as f32);
    let sy = sy.clamp(0.0, (height - 1) as f32);
    let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(width - 1), (y0 + 1).min(height - 1));
    let (fx, fy) = (sx - x0 as f32, sy - y0 as f32);
    for (c, o) in out.iter_mut().enumerate() {
        let p = |x: usize, y: usize| src[(y * width + x) * 3 + c];
        let top = lerp(p(x0, y0), p(x1, y0), fx);
        let bottom = lerp(p(x0, y1), p(x1, y1), fx);
        *o = lerp(top, bottom, fy);
    }
}

/// Bilinear resize with half-pixel centres. Same-size input is copied
/// unchanged.
pub fn resize_bilinear(img: &RgbImage, width: usize, height: usize) -> RgbImage {
    if img.width == width && img.height == height {
        return img.clone();
    }
    let sx_scale = img.width as f64 / width as f64;
    let sy_scale = img.height as f64 / height as f64;
    let mut data = Vec::with_capacity(width * height * 3);
    let mut px = [0.0f32; 3];
    for y in 0..height {
        let sy = ((y as f64 + 0.5) * sy_scale - 0.5) as f32;
        for x in 0..width {
            let sx = ((x as f64 + 0.5) * sx_scale - 0.5) as f32;
            sample_bilinear(&img.data, img.width, img.height, sx, sy, &mut px);
            data.extend_from_slice(&px);
        }
    }
    RgbImage {
        width,
        height,
        data,
    }
}

/// Converts a 0..=255 raster to a normalised `(size, size, 3)` sample.
pub fn to_sample(
    img: &RgbImage,
    size: usize,
    rescale: f32,
    label: usize,
    path: &Path,
) -> Result<ImageSample> {
    let resized = resize_bilinear(img, size, size);
    let data = resized
        .data
        .iter()
        .map(|&v| (v * rescale).clamp(0.0, 1.0))
        .collect();
    ImageSample::new(Tensor::new(vec![size, size, 3], data)?, label, path)
}

/// Decodes `path`, resizes it to `size × size` and rescales intensities.
pub fn decode_resize(path: &Path, size: usize, rescale: f32, label: usize) -> Result<ImageSample> {
    if size == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let img = decode_file(path)?;
    to_sample(&img, size, rescale, label, path)
}
