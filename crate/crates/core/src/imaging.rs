//! Raster images, labels and file I/O.
//!
//! An [`ImageBuffer`] keeps two parallel views of the same samples: 8-bit
//! storage (what gets written to disk) and a floating view in `[0, 1]` used
//! by all numeric stages. The two never differ by more than half a
//! quantization step.

use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use image::{DynamicImage, ImageFormat, ImageReader};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// BT.601 luma weights.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

const MAX_DECODE_SIDE: u32 = 1 << 15;

#[derive(Clone, Debug, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<u8>,
    values: Vec<f64>,
}

impl ImageBuffer {
    /// Builds an image from 8-bit samples, row-major and channel-interleaved.
    pub fn from_bytes(width: usize, height: usize, channels: usize, data: Vec<u8>) -> Result<Self> {
        check_shape(width, height, channels, data.len())?;
        let values = data.iter().map(|&b| f64::from(b) / 255.0).collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
            values,
        })
    }

    /// Builds an image from floating samples. Values are clamped to `[0, 1]`
    /// and the 8-bit storage is the rounded value.
    pub fn from_values(width: usize, height: usize, channels: usize, mut values: Vec<f64>) -> Result<Self> {
        check_shape(width, height, channels, values.len())?;
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::InvalidBuffer("non-finite sample".into()));
            }
            *v = v.clamp(0.0, 1.0);
        }
        let data = values.iter().map(|&v| quantize(v)).collect();
        Ok(Self {
            width,
            height,
            channels,
            data,
            values,
        })
    }

    /// Builds an image from per-channel planes of equal size.
    pub fn from_planes(width: usize, height: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let channels = planes.len();
        if planes.iter().any(|p| p.len() != width * height) {
            return Err(Error::InvalidBuffer("plane size mismatch".into()));
        }
        let mut values = Vec::with_capacity(width * height * channels);
        for i in 0..width * height {
            values.extend(planes.iter().map(|p| p[i]));
        }
        Self::from_values(width, height, channels, values)
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

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[(y * self.width + x) * self.channels + c]
    }

    /// One channel as a row-major plane of floats.
    pub fn plane(&self, c: usize) -> Vec<f64> {
        self.values
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }

    pub fn planes(&self) -> Vec<Vec<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    /// Snaps the floating view onto the 8-bit grid, as if the image had been
    /// written to disk and read back.
    pub fn quantized(self) -> Self {
        let values = self.data.iter().map(|&b| f64::from(b) / 255.0).collect();
        Self { values, ..self }
    }

    /// Copies a `w`×`h` window whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 || x + w > self.width || y + h > self.height {
            return Err(Error::InvalidBuffer(format!(
                "crop {w}x{h}+{x}+{y} outside {}x{}",
                self.width, self.height
            )));
        }
        let c = self.channels;
        let mut data = Vec::with_capacity(w * h * c);
        let mut values = Vec::with_capacity(w * h * c);
        for row in y..y + h {
            let start = (row * self.width + x) * c;
            data.extend_from_slice(&self.data[start..start + w * c]);
            values.extend_from_slice(&self.values[start..start + w * c]);
        }
        Ok(Self {
            width: w,
            height: h,
            channels: c,
            data,
            values,
        })
    }
}

fn check_shape(width: usize, height: usize, channels: usize, len: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::ZeroDimension);
    }
    if channels != 1 && channels != 3 {
        return Err(Error::InvalidBuffer(format!("unsupported channel count {channels}")));
    }
    if len != width * height * channels {
        return Err(Error::InvalidBuffer(format!(
            "expected {} samples, got {len}",
            width * height * channels
        )));
    }
    Ok(())
}

#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Ground-truth or predicted class of an image.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassLabel {
    Real,
    FullySynthetic,
    Laundered,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Real, ClassLabel::FullySynthetic, ClassLabel::Laundered];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Real => "real",
            ClassLabel::FullySynthetic => "fully_synthetic",
            ClassLabel::Laundered => "laundered",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn is_synthetic(self) -> bool {
        self != ClassLabel::Real
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ClassLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(ClassLabel::Real),
            "fully_synthetic" => Ok(ClassLabel::FullySynthetic),
            "laundered" => Ok(ClassLabel::Laundered),
            other => Err(Error::UnknownLabel(other.to_string())),
        }
    }
}

/// Reads a PNG, binary PPM/PGM or JPEG file.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageBuffer> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes)
}

/// Decodes an in-memory PNG, binary PPM/PGM or JPEG stream.
pub fn decode_image(bytes: &[u8]) -> Result<ImageBuffer> {
    let format = image::guess_format(bytes).map_err(|_| Error::UnsupportedFormat("unrecognized signature".into()))?;
    match format {
        ImageFormat::Png | ImageFormat::Jpeg => {}
        ImageFormat::Pnm => {
            // only the binary raster variants
            if !(bytes.starts_with(b"P6") || bytes.starts_with(b"P5")) {
                return Err(Error::UnsupportedFormat("only binary PPM (P6) and PGM (P5) are accepted".into()));
            }
        }
        other => return Err(Error::UnsupportedFormat(format!("{other:?}"))),
    }
    let mut reader = ImageReader::with_format(Cursor::new(bytes), format);
    let mut limits = image::Limits::default();
    limits.max_image_width = Some(MAX_DECODE_SIDE);
    limits.max_image_height = Some(MAX_DECODE_SIDE);
    reader.limits(limits);
    let decoded = reader.decode().map_err(|e| Error::CorruptImage(e.to_string()))?;
    from_dynamic(decoded)
}

fn from_dynamic(img: DynamicImage) -> Result<ImageBuffer> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::ZeroDimension);
    }
    if img.color().has_color() {
        ImageBuffer::from_bytes(w, h, 3, img.into_rgb8().into_raw())
    } else {
        ImageBuffer::from_bytes(w, h, 1, img.into_luma8().into_raw())
    }
}

/// Output container for [`save_image`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OutputFormat {
    Png,
    Ppm,
}

impl OutputFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("png") => Ok(OutputFormat::Png),
            Some("ppm") | Some("pgm") | Some("pnm") => Ok(OutputFormat::Ppm),
            _ => Err(Error::UnsupportedFormat(format!(
                "cannot write {}: use .png or .ppm",
                path.display()
            ))),
        }
    }
}

pub fn encode_image(img: &ImageBuffer, format: OutputFormat) -> Result<Vec<u8>> {
    let color = if img.channels == 3 {
        image::ExtendedColorType::Rgb8
    } else {
        image::ExtendedColorType::L8
    };
    let mut out = Vec::new();
    let (w, h) = (img.width as u32, img.height as u32);
    let res = match format {
        OutputFormat::Png => {
            use image::ImageEncoder;
            image::codecs::png::PngEncoder::new(&mut out).write_image(&img.data, w, h, color)
        }
        OutputFormat::Ppm => {
            use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
            let subtype = if img.channels == 3 {
                PnmSubtype::Pixmap(SampleEncoding::Binary)
            } else {
                PnmSubtype::Graymap(SampleEncoding::Binary)
            };
            use image::ImageEncoder;
            PnmEncoder::new(&mut out)
                .with_subtype(subtype)
                .write_image(&img.data, w, h, color)
        }
    };
    res.map_err(|e| Error::Codec(e.to_string()))?;
    Ok(out)
}

/// Writes PNG or PPM, chosen by file extension.
pub fn save_image(img: &ImageBuffer, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_image(img, OutputFormat::from_path(path)?)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-pixel BT.601 luma of the floating view, as a row-major plane.
pub fn luminance_plane(img: &ImageBuffer) -> Vec<f64> {
    if img.channels == 1 {
        return img.values.clone();
    }
    img.values
        .chunks_exact(3)
        .map(|px| LUMA_WEIGHTS[0] * px[0] + LUMA_WEIGHTS[1] * px[1] + LUMA_WEIGHTS[2] * px[2])
        .collect()
}

/// Single-channel luminance image. Grayscale input is returned unchanged.
pub fn to_luminance(img: &ImageBuffer) -> ImageBuffer {
    if img.channels == 1 {
        return img.clone();
    }
    let values = luminance_plane(img);
    ImageBuffer::from_values(img.width, img.height, 1, values).expect("luma of a valid image is valid")
}
