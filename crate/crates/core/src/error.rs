//! Error type shared by every module, with a fixed mapping to process exit codes.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input rejected by a range or consistency check.
    #[error("validation: {0}")]
    Validation(String),

    /// A required field was absent from a payload.
    #[error("missing required field `{0}`")]
    MissingField(String),

    /// A field was present but could not be parsed into its declared type.
    #[error("field `{field}`: {message}")]
    Parse { field: String, message: String },

    /// A file exists but is not in the expected format or version.
    #[error("format: {0}")]
    Format(String),

    /// A storage key already holds different content.
    #[error("conflict: key `{key}` already stored with different content")]
    Conflict { key: String },

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// An internal invariant was violated (a bug, not a user error).
    #[error("internal: {0}")]
    Internal(String),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Range violation naming the field and its bound.
    pub fn out_of_range(field: &str, bound: &str, value: f64) -> Self {
        Error::Validation(format!("`{field}` must be within {bound}, got {value}"))
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    ///
    /// 1 = validation/parse/format/conflict, 2 = i/o, 3 = internal invariant.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_)
            | Error::MissingField(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Conflict { .. } => 1,
            Error::Io { .. } => 2,
            Error::Internal(_) => 3,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_documented_mapping() {
        assert_eq!(Error::validation("x").exit_code(), 1);
        assert_eq!(Error::MissingField("tempf".into()).exit_code(), 1);
        assert_eq!(
            Error::Parse {
                field: "tempf".into(),
                message: "not a number".into()
            }
            .exit_code(),
            1
        );
        assert_eq!(Error::Format("bad magic".into()).exit_code(), 1);
        assert_eq!(Error::Conflict { key: "k".into() }.exit_code(), 1);
        assert_eq!(
            Error::io("/nope", std::io::Error::new(std::io::ErrorKind::Other, "x")).exit_code(),
            2
        );
        assert_eq!(Error::Internal("bug".into()).exit_code(), 3);
    }
}
