//! Deterministic evaluation toolkit for multi-contrast MRI synthesis.
//!
//! The crate covers the measurable side of a synthesis pipeline:
//!
//! * [`metrics`]: MSE, PSNR, SSIM, Dice, accuracy and cosine similarity.
//! * [`losses`]: encoder/decoder training objectives with analytic gradients.
//! * [`corruption`]: graded motion, down-sampling, Gaussian and Rician corruptions.
//! * [`preprocess`]: isotropic resampling, slice resizing, normalization.
//! * [`analysis`]: PCA, similarity summaries and prototype classification of embeddings.
//! * [`phantom`]: synthetic volumes, masks and embeddings with known structure.
//! * [`model`]: the image/mask/embedding types and their NIfTI and JSON forms.
//! * [`harness`]: batch runs that produce reproducible CSV/JSON reports.
//!
//! Everything is a pure function of its inputs and seed.

pub mod analysis;
pub mod corruption;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod phantom;
pub mod preprocess;
pub mod rng;

pub use error::{Error, Result};
pub use model::{EmbeddingBatch, EmbeddingItem, FeatureLevel, FeatureMapSet, Mask2D, Modality, Slice2D, Volume3D};
