use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {op}: expected {expected}, got {got}")]
    Shape {
        op: &'static str,
        expected: String,
        got: String,
    },
    #[error("series of length {len} cannot be split into patches of length {patch_len}")]
    PatchDivisibility { len: usize, patch_len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("backward called without a recorded forward pass: {0}")]
    EmptyTape(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("feature weights rejected: {0}")]
    Weights(String),
    #[error("cycle {cycle} of battery {battery} has no {signal} samples")]
    EmptyCycle {
        battery: String,
        cycle: u32,
        signal: &'static str,
    },
    #[error("battery `{0}` not found")]
    UnknownBattery(String),
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    Diverged { epoch: usize },
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn shape_err(op: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Error {
    Error::Shape {
        op,
        expected: expected.into(),
        got: got.into(),
    }
}
