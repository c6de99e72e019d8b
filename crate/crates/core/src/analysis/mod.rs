//! Embedding-space diagnostics: PCA projection, cross-modality similarity
//! summaries and prototype-based modality classification.

mod classify;
pub mod eigen;
mod pca;
mod similarity;

pub use classify::{classify_modality, Classification, PrototypeClassifier};
pub use pca::{pca_fit, pca_project, PcaModel};
pub use similarity::{similarity_summary, ModalityPairMean, SimilaritySummary};
