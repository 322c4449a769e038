//! Softmax image classifier: architecture, backprop, Adam training and
//! posterior-based uncertainty scores.

pub mod adam;
pub mod arch;
pub mod checkpoint;
pub mod network;
pub mod train;

use thiserror::Error;

pub use arch::{ArchId, Architecture};
pub use network::ClassifierModel;
pub use train::{train, train_on_matrix, TrainConfig};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unsupported architecture: {0}")]
    UnsupportedArchitecture(String),
    #[error("input has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("cannot train on an empty labeled pool")]
    EmptyPool,
    #[error("empty batch")]
    EmptyBatch,
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: u8, classes: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("not a probability vector: {0}")]
    InvalidPosterior(String),
    #[error("corrupt model checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

/// Class posterior, a point on the probability simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    probs: Vec<f64>,
}

/// Tolerance on the sum of a posterior.
pub const SIMPLEX_TOLERANCE: f64 = 1e-6;

impl Posterior {
    pub fn new(probs: Vec<f64>) -> Result<Self, ModelError> {
        if probs.is_empty() {
            return Err(ModelError::InvalidPosterior("empty".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(ModelError::InvalidPosterior(format!("{probs:?}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ModelError::InvalidPosterior(format!("sums to {sum}")));
        }
        Ok(Self { probs })
    }

    /// Numerically stable softmax.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self {
            probs: exps.into_iter().map(|e| e / total).collect(),
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn classes(&self) -> usize {
        self.probs.len()
    }

    /// Most likely class; ties go to the lowest class index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        best
    }
}

/// Maximum posterior probability. Lower is more uncertain.
pub fn uncertainty_score(p: &Posterior) -> f64 {
    p.probs.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Gap between the two largest posterior probabilities.
pub fn margin_score(p: &Posterior) -> f64 {
    let mut top = f64::NEG_INFINITY;
    let mut second = f64::NEG_INFINITY;
    for &v in &p.probs {
        if v > top {
            second = top;
            top = v;
        } else if v > second {
            second = v;
        }
    }
    if second == f64::NEG_INFINITY {
        top
    } else {
        top - second
    }
}
