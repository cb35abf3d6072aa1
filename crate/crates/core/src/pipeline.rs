//! Mark, prompt, generate, correct.

use serde::Serialize;
use thiserror::Error;

use crate::dictionary::{Dictionary, KnowledgeLimits, UnknownCharacter};
use crate::generation::{GenerationError, GenerationRequest, Generator};
use crate::postprocess::{correct, CorrectionOutcome};
use crate::prompting::{Prompt, PromptError, PromptStyle, Sample, TemplateCatalog};

pub const DEFAULT_MAX_NEW_TOKENS: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error(transparent)]
    Unknown(#[from] UnknownCharacter),
}

impl PipelineError {
    /// Failures tied to one sample rather than to the backend.
    pub fn is_per_sample(&self) -> bool {
        match self {
            PipelineError::Prompt(_) | PipelineError::Unknown(_) => true,
            PipelineError::Generation(e) => matches!(
                e,
                GenerationError::SequenceTooLong { .. } | GenerationError::InvalidIndex { .. }
            ),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOutput {
    pub prompt: Prompt,
    pub generated: String,
    pub outcome: CorrectionOutcome,
}

pub struct Pipeline {
    pub dictionary: Dictionary,
    pub catalog: TemplateCatalog,
    pub style: PromptStyle,
    pub limits: KnowledgeLimits,
    pub generator: Box<dyn Generator>,
    pub max_new_tokens: usize,
}

impl Pipeline {
    pub fn new(dictionary: Dictionary, style: PromptStyle, generator: Box<dyn Generator>) -> Self {
        Self {
            dictionary,
            catalog: TemplateCatalog::default(),
            style,
            limits: KnowledgeLimits::default(),
            generator,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }

    pub fn render(&self, sample: &Sample) -> Result<Prompt, PromptError> {
        self.catalog
            .build_prompt(sample, &self.dictionary, self.style, self.limits)
    }

    /// Greedy generation, projected onto the dictionary candidates.
    pub fn predict(&self, sample: &Sample) -> Result<PipelineOutput, PipelineError> {
        let candidates = self.dictionary.candidates(sample.target_char);
        if candidates.is_empty() {
            return Err(UnknownCharacter(sample.target_char).into());
        }
        let prompt = self.render(sample)?;
        let generated = self
            .generator
            .generate(&GenerationRequest::greedy(prompt.text.clone(), self.max_new_tokens))?;
        let outcome = correct(&generated, &candidates).expect("candidates are non-empty");
        Ok(PipelineOutput {
            prompt,
            generated,
            outcome,
        })
    }
}
