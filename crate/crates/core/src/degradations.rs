//! Laundering proxy, synthetic fixtures for the three classes and the
//! post-processing operations used in robustness runs.
//!
//! The proxy stands in for an autoencoder round trip: content is reduced by
//! the latent stride and reconstructed by interpolation. The reconstruction
//! also carries a small per-phase gain ripple, the fingerprint left by
//! strided upsampling layers whose kernels overlap unevenly. Its amplitude
//! follows the local activity of the latent image, so flat regions (and
//! constant images) come back untouched.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::fft::fft2_inplace;
use crate::imaging::{decode_image, save_image, ClassLabel, ImageBuffer};
use crate::manifest::{DatasetManifest, ManifestEntry};
use crate::patch::derive_seed;
use crate::resample;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DownFilter {
    Box,
    Bilinear,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpFilter {
    Bilinear,
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaunderProxyConfig {
    /// Latent stride.
    pub factor: usize,
    pub down_filter: DownFilter,
    pub up_filter: UpFilter,
    /// Peak relative gain ripple per unit of latent activity.
    pub ripple: f64,
}

pub const DEFAULT_RIPPLE: f64 = 0.1;

impl Default for LaunderProxyConfig {
    fn default() -> Self {
        Self {
            factor: 8,
            down_filter: DownFilter::Bilinear,
            up_filter: UpFilter::Bilinear,
            ripple: DEFAULT_RIPPLE,
        }
    }
}

impl LaunderProxyConfig {
    pub fn with_factor(factor: usize) -> Self {
        Self {
            factor,
            ..Default::default()
        }
    }
}

/// Zero-mean `factor`×`factor` gain pattern, scaled to unit peak.
///
/// Derived from a transposed convolution with a tent kernel one tap
/// narrower than the stride: output phases next to a latent sample receive
/// more kernel mass than the phases in between.
pub fn ripple_pattern(factor: usize) -> Vec<f64> {
    let f = factor as isize;
    let half_width = (f - 1).max(1) as f64;
    let gain_1d: Vec<f64> = (0..f)
        .map(|d| {
            [d - f, d, d + f]
                .iter()
                .map(|&s| (1.0 - (s as f64).abs() / half_width).max(0.0))
                .sum()
        })
        .collect();
    let mean_1d = gain_1d.iter().sum::<f64>() / factor as f64;
    let mut p: Vec<f64> = Vec::with_capacity(factor * factor);
    for gy in &gain_1d {
        for gx in &gain_1d {
            p.push((gy / mean_1d) * (gx / mean_1d));
        }
    }
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    p.iter_mut().for_each(|v| *v -= mean);
    let peak = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 1e-12 {
        p.iter_mut().for_each(|v| *v /= peak);
    } else {
        p.iter_mut().for_each(|v| *v = 0.0);
    }
    p
}

/// Local standard deviation over the 3×3 neighbourhood (edges replicated).
fn local_activity(plane: &[f64], width: usize, height: usize) -> Vec<f64> {
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for x in 0..width {
            let (mut s, mut s2) = (0.0, 0.0);
            for dy in -1isize..=1 {
                let yy = (y as isize + dy).clamp(0, height as isize - 1) as usize;
                for dx in -1isize..=1 {
                    let xx = (x as isize + dx).clamp(0, width as isize - 1) as usize;
                    let v = plane[yy * width + xx];
                    s += v;
                    s2 += v * v;
                }
            }
            let m = s / 9.0;
            out[y * width + x] = (s2 / 9.0 - m * m).max(0.0).sqrt();
        }
    }
    out
}

/// Down by `factor`, back up to the original size, then the activity-gated
/// gain ripple. Output is 8-bit.
pub fn launder_proxy(img: &ImageBuffer, cfg: &LaunderProxyConfig) -> Result<ImageBuffer> {
    let f = cfg.factor;
    if f == 0 {
        return Err(Error::InvalidConfig("launder factor must be at least 1".into()));
    }
    if !cfg.ripple.is_finite() || cfg.ripple < 0.0 {
        return Err(Error::InvalidConfig("ripple must be a non-negative number".into()));
    }
    let (w, h) = (img.width(), img.height());
    if w % f != 0 || h % f != 0 {
        return Err(Error::NotDivisible {
            width: w,
            height: h,
            factor: f,
        });
    }
    if f == 1 {
        return Ok(img.clone());
    }
    let (lw, lh) = (w / f, h / f);
    let pattern = ripple_pattern(f);
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|plane| {
            let latent = match cfg.down_filter {
                DownFilter::Box => resample::box_down(plane, w, h, f),
                DownFilter::Bilinear => resample::bilinear(plane, w, h, lw, lh, true),
            };
            let up = |p: &[f64]| match cfg.up_filter {
                UpFilter::Bilinear => resample::bilinear(p, lw, lh, w, h, true),
                UpFilter::Nearest => resample::nearest_up(p, lw, lh, f),
            };
            let recon = up(&latent);
            let activity = up(&local_activity(&latent, lw, lh));
            let mut out = recon;
            for y in 0..h {
                for x in 0..w {
                    let i = y * w + x;
                    out[i] += cfg.ripple * pattern[(y % f) * f + x % f] * activity[i];
                }
            }
            out
        })
        .collect();
    Ok(ImageBuffer::from_planes(w, h, &planes)?.quantized())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixtureConfig {
    pub count_per_class: usize,
    pub size: usize,
    pub seed: u64,
    pub sensor_noise_sigma: f64,
    pub synth_residual_sigma: f64,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            count_per_class: 150,
            size: 256,
            seed: 42,
            sensor_noise_sigma: 0.02,
            synth_residual_sigma: 0.03,
        }
    }
}

/// Gaussian optical blur (pixels) applied to the 1/f scene texture.
const OPTICS_SIGMA: f64 = 1.0;
const MEAN_RANGE: (f64, f64) = (0.3, 0.7);
const CONTRAST_RANGE: (f64, f64) = (0.05, 0.15);
/// Per-channel contrast jitter around the shared scene texture.
const CHANNEL_GAIN_RANGE: (f64, f64) = (0.8, 1.2);

impl FixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.count_per_class == 0 {
            return Err(Error::InvalidConfig("fixture count must be at least 1".into()));
        }
        if self.size == 0 || !self.size.is_multiple_of(8) {
            return Err(Error::InvalidConfig(format!(
                "fixture size must be a positive multiple of 8, got {}",
                self.size
            )));
        }
        for s in [self.sensor_noise_sigma, self.synth_residual_sigma] {
            if !s.is_finite() || s < 0.0 {
                return Err(Error::InvalidConfig("noise sigma must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn rng(&self, stream: u64, index: usize) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(derive_seed(derive_seed(self.seed, stream), index as u64))
    }
}

const PRISTINE_STREAM: u64 = 1;
const SYNTHETIC_STREAM: u64 = 2;

/// Unit-variance texture with a 1/f amplitude spectrum seen through a
/// Gaussian optical transfer function.
fn pink_texture(rng: &mut ChaCha8Rng, size: usize) -> Vec<f64> {
    let mut buf: Vec<Complex<f64>> = (0..size * size)
        .map(|_| Complex::new(rng.sample(StandardNormal), 0.0))
        .collect();
    fft2_inplace(&mut buf, size, size, false);
    let freq = |i: usize| {
        let k = if i <= size / 2 { i as f64 } else { i as f64 - size as f64 };
        k / size as f64
    };
    let otf = 2.0 * std::f64::consts::PI.powi(2) * OPTICS_SIGMA * OPTICS_SIGMA;
    for v in 0..size {
        let fy = freq(v);
        for u in 0..size {
            let fx = freq(u);
            let f2 = fx * fx + fy * fy;
            let gain = if f2 == 0.0 { 0.0 } else { (-otf * f2).exp() / f2.sqrt() };
            buf[v * size + u] *= gain;
        }
    }
    fft2_inplace(&mut buf, size, size, true);
    let mut out: Vec<f64> = buf.iter().map(|c| c.re).collect();
    let mean = out.iter().sum::<f64>() / out.len() as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / out.len() as f64).sqrt();
    out.iter_mut().for_each(|v| *v = (*v - mean) / sd.max(1e-300));
    out
}

/// White Gaussian noise passed through the 3×3 binomial kernel (periodic
/// borders), rescaled to standard deviation `sigma`. Models the spatial
/// correlation that demosaicing gives sensor noise.
fn correlated_noise(rng: &mut ChaCha8Rng, size: usize, sigma: f64) -> Vec<f64> {
    const TAPS: [f64; 3] = [0.25, 0.5, 0.25];
    // norm of the 2-D binomial kernel: (sum of squared 1-D taps)
    let kernel_gain = TAPS.iter().map(|t| t * t).sum::<f64>();
    let scale = sigma / kernel_gain;
    let white: Vec<f64> = (0..size * size)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let wrap = |i: usize, d: isize| (i as isize + d).rem_euclid(size as isize) as usize;
    let mut tmp = vec![0.0; white.len()];
    for y in 0..size {
        for x in 0..size {
            tmp[y * size + x] = (-1..=1)
                .map(|d| TAPS[(d + 1) as usize] * white[y * size + wrap(x, d)])
                .sum();
        }
    }
    let mut out = vec![0.0; white.len()];
    for y in 0..size {
        for x in 0..size {
            out[y * size + x] = (-1..=1)
                .map(|d| TAPS[(d + 1) as usize] * tmp[wrap(y, d) * size + x])
                .sum();
        }
    }
    out
}

fn white_noise(rng: &mut ChaCha8Rng, size: usize, sigma: f64) -> Vec<f64> {
    (0..size * size)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

enum NoiseModel {
    Sensor,
    White,
}

fn textured_scene(cfg: &FixtureConfig, rng: &mut ChaCha8Rng, noise: NoiseModel) -> Result<ImageBuffer> {
    cfg.validate()?;
    let n = cfg.size;
    let mean = rng.random_range(MEAN_RANGE.0..MEAN_RANGE.1);
    let contrast = rng.random_range(CONTRAST_RANGE.0..CONTRAST_RANGE.1);
    let texture = pink_texture(rng, n);
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|_| {
            let gain = contrast * rng.random_range(CHANNEL_GAIN_RANGE.0..CHANNEL_GAIN_RANGE.1);
            let noise = match noise {
                NoiseModel::Sensor => correlated_noise(rng, n, cfg.sensor_noise_sigma),
                NoiseModel::White => white_noise(rng, n, cfg.synth_residual_sigma),
            };
            texture
                .iter()
                .zip(&noise)
                .map(|(t, e)| mean + gain * t + e)
                .collect()
        })
        .collect();
    Ok(ImageBuffer::from_planes(n, n, &planes)?.quantized())
}

/// Camera-like image: blurred 1/f scene plus spatially correlated sensor
/// noise. Deterministic in `(cfg.seed, index)`.
pub fn gen_pristine(cfg: &FixtureConfig, index: usize) -> Result<ImageBuffer> {
    let mut rng = cfg.rng(PRISTINE_STREAM, index);
    textured_scene(cfg, &mut rng, NoiseModel::Sensor)
}

/// `gen_pristine(cfg, index)` through the laundering proxy (factor 8).
pub fn gen_laundered(cfg: &FixtureConfig, index: usize) -> Result<ImageBuffer> {
    launder_proxy(&gen_pristine(cfg, index)?, &LaunderProxyConfig::default())
}

/// Independent 1/f scene plus a white generation residual.
pub fn gen_fully_synthetic(cfg: &FixtureConfig, index: usize) -> Result<ImageBuffer> {
    let mut rng = cfg.rng(SYNTHETIC_STREAM, index);
    textured_scene(cfg, &mut rng, NoiseModel::White)
}

pub fn gen_fixture(label: ClassLabel, cfg: &FixtureConfig, index: usize) -> Result<ImageBuffer> {
    match label {
        ClassLabel::Real => gen_pristine(cfg, index),
        ClassLabel::FullySynthetic => gen_fully_synthetic(cfg, index),
        ClassLabel::Laundered => gen_laundered(cfg, index),
    }
}

/// Post-processing applied before analysis.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PostProcOp {
    Jpeg { quality: u8 },
    Resize { scale: f64 },
    DownUp { factor: usize },
}

impl PostProcOp {
    /// The five operations of the standard robustness table.
    pub fn standard_suite() -> Vec<PostProcOp> {
        vec![
            PostProcOp::Jpeg { quality: 70 },
            PostProcOp::Jpeg { quality: 80 },
            PostProcOp::Resize { scale: 0.5 },
            PostProcOp::Resize { scale: 2.0 },
            PostProcOp::DownUp { factor: 4 },
        ]
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            PostProcOp::Jpeg { quality } if !(1..=100).contains(&quality) => {
                Err(Error::InvalidConfig(format!("jpeg quality {quality} outside 1..=100")))
            }
            PostProcOp::Resize { scale } if !(scale.is_finite() && scale > 0.0 && scale <= 8.0) => {
                Err(Error::InvalidConfig(format!("resize scale {scale} outside (0, 8]")))
            }
            PostProcOp::DownUp { factor } if factor < 2 => {
                Err(Error::InvalidConfig(format!("down-up factor {factor} below 2")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for PostProcOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PostProcOp::Jpeg { quality } => write!(f, "jpeg{quality}"),
            PostProcOp::Resize { scale } => write!(f, "resize{scale}"),
            PostProcOp::DownUp { factor } => write!(f, "downup{factor}"),
        }
    }
}

impl FromStr for PostProcOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("unknown post-processing op {s:?}"));
        let op = if let Some(q) = s.strip_prefix("jpeg") {
            PostProcOp::Jpeg {
                quality: q.parse().map_err(|_| bad())?,
            }
        } else if let Some(v) = s.strip_prefix("resize") {
            PostProcOp::Resize {
                scale: v.parse().map_err(|_| bad())?,
            }
        } else if let Some(v) = s.strip_prefix("downup") {
            PostProcOp::DownUp {
                factor: v.parse().map_err(|_| bad())?,
            }
        } else {
            return Err(bad());
        };
        op.validate()?;
        Ok(op)
    }
}

impl Serialize for PostProcOp {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PostProcOp {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn resize_image(img: &ImageBuffer, new_w: usize, new_h: usize) -> Result<ImageBuffer> {
    if new_w == 0 || new_h == 0 {
        return Err(Error::ZeroDimension);
    }
    let planes: Vec<Vec<f64>> = img
        .planes()
        .iter()
        .map(|p| resample::bilinear(p, img.width(), img.height(), new_w, new_h, false))
        .collect();
    Ok(ImageBuffer::from_planes(new_w, new_h, &planes)?.quantized())
}

/// Baseline JPEG at `quality` with 4:2:0 chroma subsampling, decoded back.
pub fn jpeg_roundtrip(img: &ImageBuffer, quality: u8) -> Result<ImageBuffer> {
    let (w, h) = (img.width(), img.height());
    if w > u16::MAX as usize || h > u16::MAX as usize {
        return Err(Error::Codec("image too large for JPEG".into()));
    }
    let mut out = Vec::new();
    let mut enc = jpeg_encoder::Encoder::new(&mut out, quality);
    enc.set_sampling_factor(jpeg_encoder::SamplingFactor::R_4_2_0);
    let color = if img.channels() == 3 {
        jpeg_encoder::ColorType::Rgb
    } else {
        jpeg_encoder::ColorType::Luma
    };
    enc.encode(img.bytes(), w as u16, h as u16, color)
        .map_err(|e| Error::Codec(e.to_string()))?;
    decode_image(&out)
}

pub fn apply_postproc(img: &ImageBuffer, op: &PostProcOp) -> Result<ImageBuffer> {
    op.validate()?;
    let (w, h) = (img.width(), img.height());
    match *op {
        PostProcOp::Jpeg { quality } => jpeg_roundtrip(img, quality),
        PostProcOp::Resize { scale } => resize_image(
            img,
            (w as f64 * scale).round() as usize,
            (h as f64 * scale).round() as usize,
        ),
        PostProcOp::DownUp { factor } => {
            let down = resize_image(img, w / factor, h / factor)?;
            resize_image(&down, w, h)
        }
    }
}

/// Provenance tag written to the manifest's `group` column.
pub fn fixture_group(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Real => "camera-proxy",
        ClassLabel::FullySynthetic => "generator-proxy",
        ClassLabel::Laundered => "launder-proxy-f8",
    }
}

/// Manifests written by [`write_fixtures`].
#[derive(Clone, Debug, PartialEq)]
pub struct FixtureSet {
    pub all: DatasetManifest,
    /// First half of every class (by index).
    pub train: DatasetManifest,
    /// Remaining indices; absent when every class has a single image.
    pub test: Option<DatasetManifest>,
}

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const TRAIN_FILE: &str = "train.csv";
pub const TEST_FILE: &str = "test.csv";

/// Writes `<out>/<class>/<index>.png` for every class and index, plus
/// `manifest.csv`, `train.csv` and `test.csv` with paths relative to `out`.
/// `test.csv` is skipped when there is only one image per class.
pub fn write_fixtures(cfg: &FixtureConfig, out: impl AsRef<Path>) -> Result<FixtureSet> {
    cfg.validate()?;
    let out = out.as_ref();
    for label in ClassLabel::ALL {
        let dir = out.join(label.as_str());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let jobs: Vec<(ClassLabel, usize)> = ClassLabel::ALL
        .iter()
        .flat_map(|&l| (0..cfg.count_per_class).map(move |i| (l, i)))
        .collect();
    let entries: Vec<ManifestEntry> = jobs
        .par_iter()
        .map(|&(label, index)| {
            let rel = format!("{}/{index}.png", label.as_str());
            save_image(&gen_fixture(label, cfg, index)?, out.join(&rel))?;
            Ok(ManifestEntry {
                path: rel,
                label,
                group: fixture_group(label).to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let half = cfg.count_per_class.div_ceil(2);
    let index_of = |e: &ManifestEntry| -> usize {
        e.path
            .rsplit('/')
            .next()
            .and_then(|f| f.strip_suffix(".png"))
            .and_then(|i| i.parse().ok())
            .expect("fixture paths carry their index")
    };
    let (train, test): (Vec<ManifestEntry>, Vec<ManifestEntry>) =
        entries.iter().cloned().partition(|e| index_of(e) < half);
    let write = |name: &str, entries: Vec<ManifestEntry>| -> Result<DatasetManifest> {
        let m = DatasetManifest::new(entries, out)?;
        let path = out.join(name);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        m.write_csv(std::io::BufWriter::new(file))?;
        Ok(m)
    };
    let all = write(MANIFEST_FILE, entries)?;
    let test = if test.is_empty() { None } else { Some(write(TEST_FILE, test)?) };
    let train = write(TRAIN_FILE, train)?;
    Ok(FixtureSet { all, train, test })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> FixtureConfig {
        FixtureConfig {
            count_per_class: 1,
            size: 64,
            ..Default::default()
        }
    }

    #[test]
    fn fixture_set_layout() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = FixtureConfig {
            count_per_class: 3,
            size: 32,
            ..Default::default()
        };
        let set = write_fixtures(&cfg, dir.path()).unwrap();
        assert_eq!(set.all.len(), 9);
        assert_eq!(set.train.len(), 6);
        assert_eq!(set.test.as_ref().unwrap().len(), 3);
        for l in ClassLabel::ALL {
            assert!(dir.path().join(l.as_str()).join("2.png").is_file());
        }
        let reread = crate::manifest::load_manifest(dir.path().join(MANIFEST_FILE)).unwrap();
        assert_eq!(reread.entries(), set.all.entries());
        let img = crate::imaging::load_image(dir.path().join("laundered/1.png")).unwrap();
        assert_eq!(img, gen_laundered(&cfg, 1).unwrap());
        let single = FixtureConfig { count_per_class: 1, ..cfg };
        let other = tempfile::tempdir().unwrap();
        assert!(write_fixtures(&single, other.path()).unwrap().test.is_none());
    }

    #[test]
    fn factor_one_is_identity() {
        let img = gen_pristine(&small_cfg(), 0).unwrap();
        assert_eq!(launder_proxy(&img, &LaunderProxyConfig::with_factor(1)).unwrap(), img);
    }

    #[test]
    fn constants_survive_laundering() {
        for v in [0u8, 1, 77, 128, 254, 255] {
            let img = ImageBuffer::from_bytes(64, 48, 3, vec![v; 64 * 48 * 3]).unwrap();
            for f in [2, 4, 8, 16] {
                for up in [UpFilter::Bilinear, UpFilter::Nearest] {
                    for down in [DownFilter::Bilinear, DownFilter::Box] {
                        let cfg = LaunderProxyConfig {
                            factor: f,
                            down_filter: down,
                            up_filter: up,
                            ..Default::default()
                        };
                        assert_eq!(launder_proxy(&img, &cfg).unwrap().bytes(), img.bytes());
                    }
                }
            }
        }
    }

    #[test]
    fn launder_requires_divisible() {
        let img = ImageBuffer::from_bytes(60, 64, 3, vec![9; 60 * 64 * 3]).unwrap();
        assert!(matches!(
            launder_proxy(&img, &LaunderProxyConfig::default()),
            Err(Error::NotDivisible { .. })
        ));
    }

    #[test]
    fn ripple_pattern_shape() {
        let p = ripple_pattern(8);
        assert_eq!(p.len(), 64);
        assert!(p.iter().sum::<f64>().abs() < 1e-12);
        assert!((p.iter().fold(0.0f64, |m, v| m.max(v.abs())) - 1.0).abs() < 1e-12);
        // strongest gain at the phase aligned with latent samples
        assert!(p[0] > 0.0 && p.iter().all(|&v| v <= p[0]));
        assert!(ripple_pattern(1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn fixtures_deterministic() {
        let cfg = small_cfg();
        for label in ClassLabel::ALL {
            let a = gen_fixture(label, &cfg, 3).unwrap();
            let b = gen_fixture(label, &cfg, 3).unwrap();
            assert_eq!(a, b);
            assert_eq!((a.width(), a.height(), a.channels()), (64, 64, 3));
            assert_ne!(a, gen_fixture(label, &cfg, 4).unwrap());
        }
        assert_ne!(gen_pristine(&cfg, 0).unwrap(), gen_fully_synthetic(&cfg, 0).unwrap());
    }

    #[test]
    fn laundered_keeps_layout() {
        let cfg = small_cfg();
        let p = gen_pristine(&cfg, 1).unwrap();
        let l = gen_laundered(&cfg, 1).unwrap();
        assert_eq!((p.width(), p.height()), (l.width(), l.height()));
        assert!(l.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn fixture_config_checked() {
        let bad = FixtureConfig { size: 100, ..small_cfg() };
        assert!(gen_pristine(&bad, 0).is_err());
    }

    #[test]
    fn op_names() {
        for s in ["jpeg70", "jpeg80", "resize0.5", "resize2", "downup4"] {
            let op: PostProcOp = s.parse().unwrap();
            assert_eq!(op.to_string(), s);
        }
        for s in ["jpeg0", "jpeg101", "resize0", "resize9", "downup1", "blur3", "jpegx"] {
            assert!(s.parse::<PostProcOp>().is_err(), "{s}");
        }
        let suite: Vec<String> = PostProcOp::standard_suite().iter().map(|o| o.to_string()).collect();
        assert_eq!(suite, ["jpeg70", "jpeg80", "resize0.5", "resize2", "downup4"]);
    }

    #[test]
    fn jpeg100_flat_gray() {
        let img = ImageBuffer::from_bytes(64, 64, 3, vec![128; 64 * 64 * 3]).unwrap();
        let out = apply_postproc(&img, &PostProcOp::Jpeg { quality: 100 }).unwrap();
        for (a, b) in out.bytes().iter().zip(img.bytes()) {
            assert!(a.abs_diff(*b) <= 1);
        }
    }

    #[test]
    fn resize_dimensions() {
        let img = gen_pristine(&small_cfg(), 0).unwrap();
        let up = apply_postproc(&img, &PostProcOp::Resize { scale: 2.0 }).unwrap();
        assert_eq!((up.width(), up.height()), (128, 128));
        let down = apply_postproc(&img, &PostProcOp::Resize { scale: 0.5 }).unwrap();
        assert_eq!((down.width(), down.height()), (32, 32));
        let du = apply_postproc(&img, &PostProcOp::DownUp { factor: 4 }).unwrap();
        assert_eq!((du.width(), du.height()), (64, 64));
        let tiny = ImageBuffer::from_bytes(1, 1, 3, vec![0; 3]).unwrap();
        assert!(matches!(
            apply_postproc(&tiny, &PostProcOp::Resize { scale: 0.25 }),
            Err(Error::ZeroDimension)
        ));
    }
}
