use std::path::{Path, PathBuf};

use thiserror::Error;

use crs_core::persist::PersistError;

/// Command failure, mapped onto a stable process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{0}")]
    Validation(String),
    #[error("backend failure in stage {stage}: {message}")]
    Backend { stage: String, message: String },
    #[error("{}: schema violation at \"{pointer}\": {message}", path.display())]
    Schema {
        path: PathBuf,
        pointer: String,
        message: String,
    },
}

impl CliError {
    pub const IO: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const BACKEND: i32 = 4;
    pub const SCHEMA: i32 = 5;

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => Self::IO,
            CliError::Validation(_) => Self::VALIDATION,
            CliError::Backend { .. } => Self::BACKEND,
            CliError::Schema { .. } => Self::SCHEMA,
        }
    }

    pub fn io(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Io {
            path: path.to_owned(),
            message: err.to_string(),
        }
    }

    pub fn backend(stage: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        CliError::Backend {
            stage: stage.to_string(),
            message: err.to_string(),
        }
    }

    pub fn invalid(err: impl std::fmt::Display) -> Self {
        CliError::Validation(err.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        match e {
            PersistError::Io { path, source } => CliError::Io {
                path,
                message: source.to_string(),
            },
            PersistError::Schema { path, pointer, message } => CliError::Schema { path, pointer, message },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_stable() {
        assert_eq!(CliError::io(Path::new("x"), "gone").exit_code(), 2);
        assert_eq!(CliError::invalid("bad").exit_code(), 3);
        assert_eq!(CliError::backend("merge", "down").exit_code(), 4);
        let schema = CliError::from(PersistError::Schema {
            path: "r.json".into(),
            pointer: "/a/0".into(),
            message: "m".into(),
        });
        assert_eq!(schema.exit_code(), 5);
        assert_eq!(schema.to_string(), "r.json: schema violation at \"/a/0\": m");
    }
}
