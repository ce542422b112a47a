use thiserror::Error;

use crate::data::DataError;
use crate::quant::QuantError;

/// A parameter outside its valid domain.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("invalid parameter `{name}`: {reason}")]
pub struct ParamError {
    pub name: &'static str,
    pub reason: String,
}

impl ParamError {
    pub fn new(name: &'static str, reason: impl Into<String>) -> Self {
        Self {
            name,
            reason: reason.into(),
        }
    }
}

pub(crate) fn ensure(cond: bool, name: &'static str, reason: impl FnOnce() -> String) -> Result<(), ParamError> {
    if cond {
        Ok(())
    } else {
        Err(ParamError::new(name, reason()))
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("spike train has {got} input channels, model expects {expected}")]
    InputMismatch { expected: usize, got: usize },
    #[error("model has no neuron labels; run label assignment first")]
    Unlabeled,
    #[error("label assignment needs at least one sample")]
    NoLabelSamples,
    #[error("accuracy matrix is incomplete: {phases} of {expected} phases recorded")]
    IncompleteMatrix { phases: usize, expected: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    InvalidConfig(#[from] crate::config::ConfigErrors),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
