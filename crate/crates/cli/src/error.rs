use thiserror::Error;

/// Exit code for a run that finished but skipped or failed some items.
pub const EXIT_PARTIAL: i32 = 1;
/// Exit code for unusable input (arguments, index, spec, output location).
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("invalid spec: field `{field}`: {reason}")]
    Spec { field: String, reason: String },
    #[error(transparent)]
    Core(#[from] tamperscope_core::Error),
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        EXIT_INVALID
    }
}
