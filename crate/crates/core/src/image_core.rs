//! Raster types shared by every pipeline.
//!
//! All pixel work happens on 8-bit samples. 16-bit sources are shifted down
//! on load so the peak value used by PSNR is always 255.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};

use crate::error::{Error, Result};

/// Peak sample value of the canonical 8-bit working depth.
pub const MAX_SAMPLE: u8 = 255;

/// Interleaved, row-major 8-bit raster with one (luma) or three (RGB) channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "zero dimension {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidImage(format!(
                "unsupported channel count {channels}"
            )));
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::InvalidImage(format!(
                "buffer holds {} samples, expected {expected}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn from_fn_luma(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> u8,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, 1, data)
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

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Samples of pixel `(x, y)`; one element for luma, three for RGB.
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Rotates the raster 90 degrees clockwise.
    pub fn rotate90(&self) -> Image {
        let (w, h, c) = (self.width, self.height, self.channels);
        let mut data = Vec::with_capacity(self.data.len());
        // new (nx, ny) <- old (ny, h - 1 - nx); new width is h
        for ny in 0..w {
            for nx in 0..h {
                data.extend_from_slice(self.pixel(ny, h - 1 - nx));
            }
        }
        Image {
            width: h,
            height: w,
            channels: c,
            data,
        }
    }
}

/// Row-major boolean raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "mask holds {} bits, expected {}",
                bits.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self {
            width,
            height,
            bits: vec![value; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            bits,
        }
    }

    /// Thresholds a raster: luma sample >= 128 is true.
    pub fn from_image(img: &Image) -> Self {
        let luma = to_luma(img);
        Self {
            width: luma.width,
            height: luma.height,
            bits: luma.data.iter().map(|&v| v >= 128).collect(),
        }
    }

    /// Encodes as a luma raster with 255 for true and 0 for false.
    pub fn to_image(&self) -> Result<Image> {
        Image::new(
            self.width,
            self.height,
            1,
            self.bits.iter().map(|&b| if b { 255 } else { 0 }).collect(),
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_true(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn rotate90(&self) -> BinaryMask {
        let (w, h) = (self.width, self.height);
        let mut bits = Vec::with_capacity(self.bits.len());
        for ny in 0..w {
            for nx in 0..h {
                bits.push(self.get(ny, h - 1 - nx));
            }
        }
        BinaryMask {
            width: h,
            height: w,
            bits,
        }
    }
}

fn shift16(samples: &[u16]) -> Vec<u8> {
    samples.iter().map(|&v| (v >> 8) as u8).collect()
}

fn drop_alpha<T: Copy>(samples: &[T], channels: usize, keep: usize) -> Vec<T> {
    samples
        .chunks_exact(channels)
        .flat_map(|px| px[..keep].iter().copied())
        .collect()
}

fn from_dynamic(img: DynamicImage) -> Result<Image> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::InvalidImage(format!("zero dimension {w}x{h}")));
    }
    let (channels, data) = match img {
        DynamicImage::ImageLuma8(b) => (1, b.into_raw()),
        DynamicImage::ImageLumaA8(b) => (1, drop_alpha(b.as_raw(), 2, 1)),
        DynamicImage::ImageRgb8(b) => (3, b.into_raw()),
        DynamicImage::ImageRgba8(b) => (3, drop_alpha(b.as_raw(), 4, 3)),
        DynamicImage::ImageLuma16(b) => (1, shift16(b.as_raw())),
        DynamicImage::ImageLumaA16(b) => (1, shift16(&drop_alpha(b.as_raw(), 2, 1))),
        DynamicImage::ImageRgb16(b) => (3, shift16(b.as_raw())),
        DynamicImage::ImageRgba16(b) => (3, shift16(&drop_alpha(b.as_raw(), 4, 3))),
        other => (3, other.to_rgb8().into_raw()),
    };
    Image::new(w, h, channels, data)
}

/// Decodes a PNG or JPEG file.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let reader = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    match reader.format() {
        Some(ImageFormat::Png) | Some(ImageFormat::Jpeg) => {}
        Some(other) => {
            return Err(Error::Decode {
                path: path.into(),
                message: format!("unsupported format {other:?}"),
            })
        }
        None => {
            return Err(Error::Decode {
                path: path.into(),
                message: "unrecognized image format".into(),
            })
        }
    }
    let decoded = reader.decode().map_err(|e| Error::Decode {
        path: path.into(),
        message: e.to_string(),
    })?;
    from_dynamic(decoded).map_err(|e| Error::Decode {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Writes an 8-bit PNG (luma or RGB according to the channel count).
pub fn save_png(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let color = match img.channels {
        1 => ExtendedColorType::L8,
        _ => ExtendedColorType::Rgb8,
    };
    image::save_buffer_with_format(
        path,
        &img.data,
        img.width as u32,
        img.height as u32,
        color,
        ImageFormat::Png,
    )
    .map_err(|e| Error::Encode {
        path: path.into(),
        message: e.to_string(),
    })
}

/// Loads a mask image; any luma sample >= 128 is foreground.
pub fn load_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    load_image(path).map(|img| BinaryMask::from_image(&img))
}

pub fn save_mask(mask: &BinaryMask, path: impl AsRef<Path>) -> Result<()> {
    save_png(&mask.to_image()?, path)
}

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

fn is_image_file(path: &Path) -> bool {
    path.is_file()
        && path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTENSIONS.iter().any(|x| x.eq_ignore_ascii_case(e)))
}

/// Image files of a directory keyed by file stem, sorted by stem. Non-image
/// entries are skipped; when several files share a stem the first by file
/// name wins.
pub fn list_images(dir: &Path) -> Result<Vec<(String, PathBuf)>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if !is_image_file(&path) {
            continue;
        }
        if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
            out.push((stem.to_owned(), path.clone()));
        }
    }
    out.sort();
    out.dedup_by(|later, earlier| later.0 == earlier.0);
    Ok(out)
}

/// BT.601 luma. Single-channel input is returned unchanged.
pub fn to_luma(img: &Image) -> Image {
    if img.channels == 1 {
        return img.clone();
    }
    let data = img
        .data
        .chunks_exact(3)
        .map(|px| {
            let y = 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]);
            y.round().clamp(0.0, 255.0) as u8
        })
        .collect();
    Image {
        width: img.width,
        height: img.height,
        channels: 1,
        data,
    }
}

/// Zeroes every pixel outside the mask.
pub fn apply_mask(img: &Image, mask: &BinaryMask) -> Result<Image> {
    check_mask_shape(img, mask)?;
    let mut data = img.data.clone();
    for (px, &keep) in data.chunks_exact_mut(img.channels).zip(&mask.bits) {
        if !keep {
            px.fill(0);
        }
    }
    Ok(Image {
        data,
        ..img.clone()
    })
}

pub(crate) fn check_mask_shape(img: &Image, mask: &BinaryMask) -> Result<()> {
    if img.width != mask.width || img.height != mask.height {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, mask is {}x{}",
            img.width, img.height, mask.width, mask.height
        )));
    }
    Ok(())
}

/// Bilinear resample with pixel-center alignment and edge clamping.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::InvalidParameter(format!(
            "resize target {width}x{height} has a zero dimension"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let c = img.channels;
    let sx = img.width as f64 / width as f64;
    let sy = img.height as f64 / height as f64;
    let coord = |dst: usize, scale: f64, len: usize| {
        let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
        let i0 = src.floor() as usize;
        let i1 = (i0 + 1).min(len - 1);
        (i0, i1, src - i0 as f64)
    };
    let mut data = Vec::with_capacity(width * height * c);
    for y in 0..height {
        let (y0, y1, fy) = coord(y, sy, img.height);
        for x in 0..width {
            let (x0, x1, fx) = coord(x, sx, img.width);
            for ch in 0..c {
                let s = |xx: usize, yy: usize| f64::from(img.data[(yy * img.width + xx) * c + ch]);
                let top = s(x0, y0) * (1.0 - fx) + s(x1, y0) * fx;
                let bottom = s(x0, y1) * (1.0 - fx) + s(x1, y1) * fx;
                let v = top * (1.0 - fy) + bottom * fy;
                data.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Image::new(width, height, c, data)
}
