//! Random patch extraction and top-fraction score aggregation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::ImageBuffer;

pub const DEFAULT_PATCHES: usize = 800;
pub const DEFAULT_PATCH_SIZE: usize = 96;
pub const DEFAULT_TOP_FRACTION: f64 = 0.75;
pub const MIN_PATCH_SIZE: usize = 8;

/// A square window cut from a query image.
#[derive(Clone, Debug, PartialEq)]
pub struct Patch {
    pub pixels: ImageBuffer,
    /// Top-left corner `(x, y)` in the source image.
    pub origin: (usize, usize),
}

impl Patch {
    pub fn size(&self) -> usize {
        self.pixels.width()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_patches: usize,
    pub patch_size: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_patches: DEFAULT_PATCHES,
            patch_size: DEFAULT_PATCH_SIZE,
            seed: 0,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patches == 0 {
            return Err(Error::InvalidConfig("n_patches must be at least 1".into()));
        }
        if self.patch_size < MIN_PATCH_SIZE {
            return Err(Error::InvalidConfig(format!(
                "patch_size must be at least {MIN_PATCH_SIZE}"
            )));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregationConfig {
    pub top_fraction: f64,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self {
            top_fraction: DEFAULT_TOP_FRACTION,
        }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_fraction > 0.0 && self.top_fraction <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "top_fraction must lie in (0, 1], got {}",
                self.top_fraction
            )));
        }
        Ok(())
    }

    /// Number of scores averaged out of `n`: round-half-up of
    /// `top_fraction * n`, at least 1.
    pub fn top_count(&self, n: usize) -> usize {
        let m = (self.top_fraction * n as f64 + 0.5).floor() as usize;
        m.clamp(1, n.max(1))
    }
}

/// Mixes a global seed with a work-unit index (SplitMix64 finalizer), so
/// each image draws from an independent stream regardless of scheduling.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Top-left corners drawn uniformly, with replacement, from the valid grid.
/// The generator is ChaCha8 seeded with `cfg.seed`; each origin consumes one
/// draw for x then one for y.
pub fn sample_origins(width: usize, height: usize, cfg: &SamplerConfig) -> Result<Vec<(usize, usize)>> {
    cfg.validate()?;
    let p = cfg.patch_size;
    if width < p || height < p {
        return Err(Error::ImageTooSmall {
            width,
            height,
            required: p,
        });
    }
    let (max_x, max_y) = (width - p, height - p);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok((0..cfg.n_patches)
        .map(|_| {
            let x = rng.random_range(0..=max_x);
            let y = rng.random_range(0..=max_y);
            (x, y)
        })
        .collect())
}

pub fn sample_patches(img: &ImageBuffer, cfg: &SamplerConfig) -> Result<Vec<Patch>> {
    if img.channels() != 3 {
        return Err(Error::ColorRequired);
    }
    let origins = sample_origins(img.width(), img.height(), cfg)?;
    origins
        .into_iter()
        .map(|(x, y)| {
            Ok(Patch {
                pixels: img.crop(x, y, cfg.patch_size, cfg.patch_size)?,
                origin: (x, y),
            })
        })
        .collect()
}

/// Mean of the `M` largest scores, `M = cfg.top_count(scores.len())`.
///
/// The selected scores are summed in descending order, so the result does
/// not depend on the input order.
pub fn aggregate_top_fraction(scores: &[f64], cfg: &AggregationConfig) -> Result<f64> {
    cfg.validate()?;
    if scores.is_empty() {
        return Err(Error::EmptyScores);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFiniteScore);
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFiniteScore);
    }
    let m = cfg.top_count(scores.len());
    let mut v = scores.to_vec();
    let desc = |a: &f64, b: &f64| b.total_cmp(a);
    if m < v.len() {
        v.select_nth_unstable_by(m - 1, desc);
    }
    let top = &mut v[..m];
    top.sort_unstable_by(desc);
    Ok(top.iter().sum::<f64>() / m as f64)
}
