//! Local surrogate explanations and explanation-space divergence.

pub mod divergence;
pub mod mask;
mod ridge;
pub mod surrogate;

use thiserror::Error;

use crate::model::ModelError;

pub use divergence::{
    explain_indices, explanation_vector, kld, mean_divergence, mean_divergence_of, to_distribution,
    ExplanationVector, DEFAULT_EPSILON,
};
pub use mask::{sample_neighborhood, PatchGrid, PerturbationMask};
pub use surrogate::{
    build_design, fit_surrogate, ClassDesign, ExplainerConfig, Predictor, SampleWeighting, SurrogateModel,
};

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("patch {patch_height}x{patch_width} does not tile a {image_rows}x{image_cols} image")]
    BadGrid {
        image_rows: usize,
        image_cols: usize,
        patch_height: usize,
        patch_width: usize,
    },
    #[error("labeled pool is empty")]
    EmptyPool,
    #[error("neighbourhood size must be at least 1")]
    NoSamples,
    #[error("normal equations for class {class} are singular")]
    SingularSystem { class: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid explainer configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}
