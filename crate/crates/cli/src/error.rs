//! Exit-code classification.

use thiserror::Error;

pub const EXIT_OK: u8 = 0;
pub const EXIT_USAGE: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_RUNTIME: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    CliError::Usage(msg.into()).into()
}

pub fn io_error(msg: impl Into<String>) -> anyhow::Error {
    CliError::Io(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<CliError>() {
            return match e {
                CliError::Usage(_) => EXIT_USAGE,
                CliError::Io(_) => EXIT_IO,
            };
        }
        if let Some(e) = cause.downcast_ref::<infill::Error>() {
            return match e {
                infill::Error::Io { .. } | infill::Error::Parse { .. } | infill::Error::Json(_) | infill::Error::Wav(_) => EXIT_IO,
                infill::Error::Config(_) => EXIT_USAGE,
                _ => EXIT_RUNTIME,
            };
        }
        if cause.is::<std::io::Error>() {
            return EXIT_IO;
        }
    }
    EXIT_RUNTIME
}
