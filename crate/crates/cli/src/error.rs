use std::fmt;

use polyg2p::ablation::AblationError;
use polyg2p::dataset::DatasetError;
use polyg2p::dictionary::{DictionaryError, UnknownCharacter};
use polyg2p::eval::EvalError;
use polyg2p::generation::GenerationError;
use polyg2p::pipeline::PipelineError;
use polyg2p::prompting::{CatalogError, PromptError, SampleError};

/// Failure classes with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Backend(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Backend(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) | CliError::Backend(m) => f.write_str(m),
        }
    }
}

macro_rules! data_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Data(e.to_string())
            }
        }
    )*};
}

data_error!(
    DictionaryError,
    DatasetError,
    CatalogError,
    PromptError,
    SampleError,
    UnknownCharacter,
    std::io::Error,
    serde_json::Error
);

impl From<GenerationError> for CliError {
    fn from(e: GenerationError) -> Self {
        match e {
            GenerationError::BackendUnavailable(_) => CliError::Backend(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Generation(g) => g.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Pipeline(p) => p.into(),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<AblationError> for CliError {
    fn from(e: AblationError) -> Self {
        match e {
            AblationError::Generation(g) => g.into(),
            AblationError::Eval(e) => e.into(),
            AblationError::EmptyGrid | AblationError::BadRatio(_) => CliError::Usage(e.to_string()),
            other => CliError::Data(other.to_string()),
        }
    }
}
