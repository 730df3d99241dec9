//! Noise residuals, centered Fourier magnitude spectra and the statistics
//! computed on them: resampling-lattice peak strength, low-frequency energy
//! ratio and spectral flatness.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft2_real;
use crate::filters;
use crate::imaging::{luminance_plane, ImageBuffer};
use crate::patch::Patch;

pub const MIN_RESIDUAL_SIDE: usize = 8;
pub const DEFAULT_FACTOR: usize = 8;
const PEAK_EPS: f64 = 1e-12;
const DEGENERATE_ENERGY: f64 = 1e-12;
const CORE_RADIUS: isize = 1;
const ANNULUS_RADIUS: isize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
#[derive(Default)]
pub enum Denoiser {
    /// 3×3 median filter.
    #[default]
    Median3,
    Gaussian { sigma: f64 },
}


impl Denoiser {
    fn apply(&self, data: &[f64], width: usize, height: usize) -> Result<Vec<f64>> {
        match *self {
            Denoiser::Median3 => Ok(filters::median3(data, width, height)),
            Denoiser::Gaussian { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::InvalidConfig(format!("gaussian sigma must be positive, got {sigma}")));
                }
                Ok(filters::gaussian(data, width, height, sigma))
            }
        }
    }
}

/// Zero-mean single-channel noise residual.
#[derive(Clone, Debug, PartialEq)]
pub struct Residual {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

impl Residual {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "residual data has {} samples for {width}x{height}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBuffer("non-finite residual".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }
}

/// `luma − denoise(luma)`, then mean-subtracted.
pub fn extract_residual(img: &ImageBuffer, denoiser: &Denoiser) -> Result<Residual> {
    residual_from_plane(&luminance_plane(img), img.width(), img.height(), denoiser)
}

pub(crate) fn residual_from_plane(luma: &[f64], width: usize, height: usize, denoiser: &Denoiser) -> Result<Residual> {
    if width < MIN_RESIDUAL_SIDE || height < MIN_RESIDUAL_SIDE {
        return Err(Error::ImageTooSmall {
            width,
            height,
            required: MIN_RESIDUAL_SIDE,
        });
    }
    let smooth = denoiser.apply(luma, width, height)?;
    let mut data: Vec<f64> = luma.iter().zip(&smooth).map(|(a, b)| a - b).collect();
    let mean = data.iter().sum::<f64>() / data.len() as f64;
    data.iter_mut().for_each(|v| *v -= mean);
    Ok(Residual { width, height, data })
}

/// Centered magnitude spectrum: DC sits at `(height / 2, width / 2)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub width: usize,
    pub height: usize,
    pub mag: Vec<f64>,
    /// How many residual spectra were averaged into `mag`.
    pub count: usize,
}

impl Spectrum {
    pub fn center(&self) -> (usize, usize) {
        (self.width / 2, self.height / 2)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.mag[y * self.width + x]
    }

    #[inline]
    fn at_wrapped(&self, x: isize, y: isize) -> f64 {
        let xx = x.rem_euclid(self.width as isize) as usize;
        let yy = y.rem_euclid(self.height as isize) as usize;
        self.mag[yy * self.width + xx]
    }

    fn is_dc(&self, i: usize) -> bool {
        let (cx, cy) = self.center();
        i == cy * self.width + cx
    }

    pub fn non_dc_energy(&self) -> f64 {
        self.mag
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.is_dc(*i))
            .map(|(_, m)| m * m)
            .sum()
    }

    /// Share of non-DC energy within `min(W, H) / 8` bins of DC.
    pub fn low_freq_ratio(&self) -> f64 {
        let total = self.non_dc_energy();
        if total < DEGENERATE_ENERGY {
            return 0.0;
        }
        let (cx, cy) = self.center();
        let r = self.width.min(self.height) as f64 / 8.0;
        let r2 = r * r;
        let mut low = 0.0;
        for y in 0..self.height {
            let dy = y as f64 - cy as f64;
            for x in 0..self.width {
                let dx = x as f64 - cx as f64;
                let d2 = dx * dx + dy * dy;
                if d2 > 0.0 && d2 <= r2 {
                    let m = self.mag[y * self.width + x];
                    low += m * m;
                }
            }
        }
        (low / total).clamp(0.0, 1.0)
    }

    /// Geometric over arithmetic mean of non-DC magnitudes; 0 if any is 0.
    pub fn flatness(&self) -> f64 {
        let mut log_sum = 0.0;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (i, &m) in self.mag.iter().enumerate() {
            if self.is_dc(i) {
                continue;
            }
            if m <= 0.0 {
                return 0.0;
            }
            log_sum += m.ln();
            sum += m;
            n += 1;
        }
        if n == 0 || sum <= 0.0 {
            return 0.0;
        }
        let arith = sum / n as f64;
        ((log_sum / n as f64).exp() / arith).clamp(0.0, 1.0)
    }
}

pub fn magnitude_spectrum(res: &Residual) -> Result<Spectrum> {
    let (w, h) = (res.width, res.height);
    if w < MIN_RESIDUAL_SIDE || h < MIN_RESIDUAL_SIDE {
        return Err(Error::ImageTooSmall {
            width: w,
            height: h,
            required: MIN_RESIDUAL_SIDE,
        });
    }
    let freq = fft2_real(&res.data, w, h);
    let mut mag = vec![0.0; w * h];
    // fftshift: bin (u, v) lands at ((u + w/2) mod w, (v + h/2) mod h)
    for v in 0..h {
        let yy = (v + h / 2) % h;
        for u in 0..w {
            let xx = (u + w / 2) % w;
            mag[yy * w + xx] = freq[v * w + u].norm();
        }
    }
    Ok(Spectrum {
        width: w,
        height: h,
        mag,
        count: 1,
    })
}

/// Running sum of magnitude spectra; reduction order is the insertion order.
#[derive(Clone, Debug)]
pub struct SpectrumAccumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: usize,
}

impl SpectrumAccumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sum: vec![0.0; width * height],
            count: 0,
        }
    }

    /// Adds a spectrum weighted by its own `count`.
    pub fn add(&mut self, spec: &Spectrum) -> Result<()> {
        if spec.width != self.width || spec.height != self.height {
            return Err(Error::DimensionMismatch(format!(
                "spectrum {}x{} vs accumulator {}x{}",
                spec.width, spec.height, self.width, self.height
            )));
        }
        let k = spec.count as f64;
        for (s, m) in self.sum.iter_mut().zip(&spec.mag) {
            *s += k * m;
        }
        self.count += spec.count;
        Ok(())
    }

    pub fn add_residual(&mut self, res: &Residual) -> Result<()> {
        if res.width != self.width || res.height != self.height {
            return Err(Error::DimensionMismatch(format!(
                "residual {}x{} vs accumulator {}x{}",
                res.width, res.height, self.width, self.height
            )));
        }
        self.add(&magnitude_spectrum(res)?)
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self) -> Result<Spectrum> {
        if self.count == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.count as f64;
        Ok(Spectrum {
            width: self.width,
            height: self.height,
            mag: self.sum.into_iter().map(|s| s / n).collect(),
            count: self.count,
        })
    }
}

/// Element-wise mean of the residuals' magnitude spectra, in stream order.
pub fn average_spectrum<'a, I>(residuals: I) -> Result<Spectrum>
where
    I: IntoIterator<Item = &'a Residual>,
{
    let mut iter = residuals.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput)?;
    let mut acc = SpectrumAccumulator::new(first.width, first.height);
    acc.add_residual(first)?;
    for r in iter {
        acc.add_residual(r)?;
    }
    acc.finish()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatticePeak {
    pub k: i32,
    pub l: i32,
    pub peak_value: f64,
    pub background: f64,
}

impl LatticePeak {
    pub fn ratio(&self) -> f64 {
        self.peak_value / self.background.max(PEAK_EPS)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakReport {
    pub factor: usize,
    pub peaks: Vec<LatticePeak>,
    /// Mean over lattice sites of `peak_value / background`.
    pub peak_strength: f64,
}

/// Probes the `1/factor` lattice around DC. For each site `(k, l) ≠ (0, 0)`
/// with `k, l ∈ [−factor/2, factor/2]`, the peak is the 3×3 maximum and the
/// background is the median of the surrounding 11×11 window minus that core.
/// Neighborhoods wrap around the (periodic) spectrum.
pub fn detect_peaks(spec: &Spectrum, factor: usize) -> Result<PeakReport> {
    if factor < 2 {
        return Err(Error::InvalidConfig(format!("peak factor must be at least 2, got {factor}")));
    }
    if !spec.width.is_multiple_of(factor) || !spec.height.is_multiple_of(factor) {
        return Err(Error::NotDivisible {
            width: spec.width,
            height: spec.height,
            factor,
        });
    }
    let (cx, cy) = spec.center();
    let (sx, sy) = ((spec.width / factor) as isize, (spec.height / factor) as isize);
    let half = (factor / 2) as isize;
    let mut peaks = Vec::with_capacity((2 * half as usize + 1).pow(2) - 1);
    let mut ring = Vec::with_capacity(121);
    for l in -half..=half {
        for k in -half..=half {
            if k == 0 && l == 0 {
                continue;
            }
            let px = cx as isize + k * sx;
            let py = cy as isize + l * sy;
            let mut peak = f64::NEG_INFINITY;
            ring.clear();
            for dy in -ANNULUS_RADIUS..=ANNULUS_RADIUS {
                for dx in -ANNULUS_RADIUS..=ANNULUS_RADIUS {
                    let m = spec.at_wrapped(px + dx, py + dy);
                    if dx.abs() <= CORE_RADIUS && dy.abs() <= CORE_RADIUS {
                        peak = peak.max(m);
                    } else {
                        ring.push(m);
                    }
                }
            }
            peaks.push(LatticePeak {
                k: k as i32,
                l: l as i32,
                peak_value: peak,
                background: median(&mut ring),
            });
        }
    }
    let peak_strength = peaks.iter().map(LatticePeak::ratio).sum::<f64>() / peaks.len() as f64;
    Ok(PeakReport {
        factor,
        peaks,
        peak_strength,
    })
}

fn median(v: &mut [f64]) -> f64 {
    let n = v.len();
    let (lower, &mut mid, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        mid
    } else {
        // largest of the lower half is the other middle value
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + mid)
    }
}

/// Residual and lattice settings shared by feature extraction and scorers.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub denoiser: Denoiser,
    pub factor: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            denoiser: Denoiser::Median3,
            factor: DEFAULT_FACTOR,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralFeatures {
    pub peak_strength: f64,
    pub low_freq_ratio: f64,
    pub flatness: f64,
}

impl SpectralFeatures {
    pub const DIM: usize = 3;

    pub fn to_array(&self) -> [f64; 3] {
        [self.peak_strength, self.low_freq_ratio, self.flatness]
    }

    /// Spectra with no non-DC energy carry no evidence.
    pub const DEGENERATE: SpectralFeatures = SpectralFeatures {
        peak_strength: 1.0,
        low_freq_ratio: 0.0,
        flatness: 0.0,
    };
}

pub fn spectrum_features(spec: &Spectrum, factor: usize) -> Result<SpectralFeatures> {
    let peaks = detect_peaks(spec, factor)?;
    if spec.non_dc_energy() < DEGENERATE_ENERGY {
        return Ok(SpectralFeatures::DEGENERATE);
    }
    Ok(SpectralFeatures {
        peak_strength: peaks.peak_strength,
        low_freq_ratio: spec.low_freq_ratio(),
        flatness: spec.flatness(),
    })
}

pub fn spectral_features(patch: &Patch, cfg: &FeatureConfig) -> Result<SpectralFeatures> {
    image_features(&patch.pixels, cfg)
}

pub fn image_features(img: &ImageBuffer, cfg: &FeatureConfig) -> Result<SpectralFeatures> {
    if !img.width().is_multiple_of(cfg.factor) || !img.height().is_multiple_of(cfg.factor) {
        return Err(Error::NotDivisible {
            width: img.width(),
            height: img.height(),
            factor: cfg.factor,
        });
    }
    let res = extract_residual(img, &cfg.denoiser)?;
    spectrum_features(&magnitude_spectrum(&res)?, cfg.factor)
}

/// `log(1 + mag)` scaled so the largest bin maps to 255.
pub fn render_spectrum(spec: &Spectrum) -> ImageBuffer {
    let logs: Vec<f64> = spec.mag.iter().map(|m| m.ln_1p()).collect();
    let max = logs.iter().cloned().fold(0.0, f64::max);
    let values = if max > 0.0 {
        logs.iter().map(|v| v / max).collect()
    } else {
        vec![0.0; logs.len()]
    };
    ImageBuffer::from_values(spec.width, spec.height, 1, values).expect("spectrum dimensions are non-zero")
}

/// JSON sidecar written next to a rendered spectrum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSidecar {
    pub width: usize,
    pub height: usize,
    pub count: usize,
    pub factor: usize,
    pub peak_strength: f64,
}
