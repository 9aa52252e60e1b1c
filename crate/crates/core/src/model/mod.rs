//! The factor network: feature extraction, hypergraph convolution, the
//! prior/hidden/alpha cascade, horizon heads and the future-window encoder.

mod config;
mod layers;
mod params;
#[cfg(test)]
mod tests;

use std::path::Path;

pub use config::{ModelConfig, Variant};
pub use layers::{
    feature_extract, forward, forward_future, hidden_beta, hidden_exposures, hypergcn_layer,
    individual_alpha, infer, predict, predict_heads, prior_beta, ForwardOut, FutureOut, Inference,
};
pub use params::{Bound, ModelParams, CHECKPOINT_FORMAT};

use crate::diffcore::DiffError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl ModelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Batch-norm behaviour of a pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics; the caller folds them into the running buffers.
    Train,
    /// Running statistics; rows are processed independently.
    Eval,
}

/// The two feature extractors, which share nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Extractor {
    Past,
    Future,
}

impl Extractor {
    pub fn prefix(self) -> &'static str {
        match self {
            Extractor::Past => "past",
            Extractor::Future => "future",
        }
    }

    /// Window length the extractor's running statistics are sized for.
    pub fn len(self, config: &ModelConfig) -> usize {
        match self {
            Extractor::Past => config.past_len,
            Extractor::Future => config.future_len,
        }
    }
}
