use std::path::PathBuf;

use thiserror::Error;

use crate::dataset::DatasetError;
use crate::explain::ExplainError;
use crate::fewshot::FewShotError;
use crate::nomogram::NomogramError;
use crate::render::RenderError;
use crate::report::ReportError;
use crate::signal::SignalError;
use crate::synth::SynthError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-wide error. Each pipeline stage has its own error enum; this wraps them
/// so drivers can propagate with `?` across stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Nomogram(#[from] NomogramError),
    #[error(transparent)]
    Render(#[from] RenderError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    FewShot(#[from] FewShotError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {message}")]
    Format { context: String, message: String },
}

/// Coarse failure category, used by drivers to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Data,
    Numeric,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl std::fmt::Display) -> Self {
        Error::Format {
            context: context.into(),
            message: message.to_string(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::FewShot(FewShotError::Diverged { .. })
            | Error::FewShot(FewShotError::NumericalOverflow)
            | Error::Explain(ExplainError::SingularSystem)
            | Error::Render(RenderError::RasterOverflow { .. }) => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
