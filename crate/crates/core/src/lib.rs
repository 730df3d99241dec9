//! Three-way image provenance detection: real, fully synthetic, and
//! real images laundered through a generative autoencoder.

pub mod degradations;
pub mod error;
mod fft;
mod filters;
pub mod imaging;
pub mod manifest;
pub mod metrics;
pub mod patch;
pub mod pipeline;
mod resample;
pub mod scorers;
pub mod spectral;

pub use error::{Error, ErrorKind, Result, ScorerPhase};
pub use imaging::{load_image, save_image, ClassLabel, ImageBuffer};
pub use manifest::{load_manifest, DatasetManifest, ManifestEntry};
