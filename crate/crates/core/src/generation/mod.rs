//! Generation backends: the desk-scale toy model and a remote HTTP client.

pub mod checkpoint;
pub mod model;
pub mod positions;
pub mod remote;
pub mod tokenizer;
pub mod toy;
pub mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{ModelParams, NormPlacement, ToyGlmConfig};
pub use positions::{encode_positions, PositionPair, TokenRole};
pub use remote::RemoteBackend;
pub use tokenizer::Vocabulary;
pub use toy::ToyModel;
pub use train::{train, TrainOptions, TrainReport, TrainingExample};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompt_text: String,
    pub max_new_tokens: usize,
    /// Argmax decoding when true, otherwise sampling from the softmax.
    pub greedy: bool,
}

impl GenerationRequest {
    pub fn greedy(prompt_text: impl Into<String>, max_new_tokens: usize) -> Self {
        Self {
            prompt_text: prompt_text.into(),
            max_new_tokens,
            greedy: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error("sequence of {len} tokens exceeds the maximum of {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("mask index {mask_index} is outside a context of {context_len} tokens")]
    InvalidIndex { mask_index: usize, context_len: usize },
    #[error("answer of {len} tokens (with end marker) exceeds max_new_tokens {max}")]
    AnswerTooLong { len: usize, max: usize },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Anything that turns a prompt into text.
pub trait Generator: Send + Sync {
    /// Stable identifier recorded in evaluation reports.
    fn backend_id(&self) -> String;

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError>;
}

impl<G: Generator + ?Sized> Generator for Box<G> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (**self).generate(request)
    }
}

impl<G: Generator + ?Sized> Generator for std::sync::Arc<G> {
    fn backend_id(&self) -> String {
        (**self).backend_id()
    }

    fn generate(&self, request: &GenerationRequest) -> Result<String, GenerationError> {
        (**self).generate(request)
    }
}
