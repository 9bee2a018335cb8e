use std::fmt;
use std::io::ErrorKind;

use serde::Serialize;
use ucbmir_core::dataset::DatasetError;
use ucbmir_core::eval::EvalError;
use ucbmir_core::index::IndexError;
use ucbmir_core::model::{CheckpointError, ModelError};

/// Coarse error class; also selects the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    /// Bad or missing command-line flags.
    Usage,
    /// Invalid config file or inconsistent settings.
    Config,
    /// Missing or unusable input data.
    Input,
    /// Artifact file with wrong magic, version or checksum.
    Format,
    Model,
    Io,
    Service,
}

impl Category {
    pub fn as_str(self) -> &'static str {
        match self {
            Category::Usage => "usage",
            Category::Config => "config",
            Category::Input => "input",
            Category::Format => "format",
            Category::Model => "model",
            Category::Io => "io",
            Category::Service => "service",
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Category::Usage => 2,
            Category::Config => 3,
            Category::Input => 4,
            Category::Format => 5,
            Category::Model => 6,
            Category::Io => 7,
            Category::Service => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self { category, message: message.into() }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new(Category::Usage, message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn input(message: impl Into<String>) -> Self {
        Self::new(Category::Input, message)
    }

    /// `{"error":{"category":...,"message":...}}`, the form printed on stderr.
    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": { "category": self.category, "message": self.message } }).to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.category.as_str(), self.message)
    }
}

impl std::error::Error for CliError {}

fn io_category(e: &std::io::Error) -> Category {
    match e.kind() {
        ErrorKind::NotFound | ErrorKind::PermissionDenied => Category::Input,
        _ => Category::Io,
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        let category = match e {
            DatasetError::Spec(_) => Category::Config,
            _ => Category::Input,
        };
        CliError::new(category, e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        let category = match e {
            ModelError::Config(_) | ModelError::InputShape { .. } => Category::Config,
            ModelError::EmptyTrainingSet => Category::Input,
            _ => Category::Model,
        };
        CliError::new(category, e.to_string())
    }
}

impl From<CheckpointError> for CliError {
    fn from(e: CheckpointError) -> Self {
        let category = match &e {
            CheckpointError::Io(io) => io_category(io),
            _ => Category::Format,
        };
        CliError::new(category, e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Dataset(d) => d.into(),
            IndexError::Model(m) => m.into(),
            IndexError::Io(ref io) => CliError::new(io_category(io), e.to_string()),
            IndexError::BadMagic
            | IndexError::Version { .. }
            | IndexError::Truncated
            | IndexError::Checksum { .. }
            | IndexError::Corrupt(_) => CliError::new(Category::Format, e.to_string()),
            IndexError::DimMismatch { .. } => CliError::config(e.to_string()),
            IndexError::KOutOfRange { .. } => CliError::usage(e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Index(i) => i.into(),
            EvalError::Dataset(d) => d.into(),
            EvalError::Config(_) => CliError::config(e.to_string()),
            EvalError::TooFewHits { .. } => CliError::usage(e.to_string()),
            EvalError::Report(_) => CliError::new(Category::Io, e.to_string()),
            _ => CliError::input(e.to_string()),
        }
    }
}
