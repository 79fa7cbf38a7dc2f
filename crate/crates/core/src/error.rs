use alloc::string::String;

/// Error taxonomy shared by the whole crate.
///
/// Shape disagreements report as `Dim`, geometry/configuration problems as
/// `Config`, token-grid divisibility violations as `Partition`, NaN or other
/// numeric trouble as `Numeric`, misuse of the evaluation tape as `State`,
/// and integer overflow in the cost accounting as `Arithmetic`.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dim(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("partition error: {0}")]
    Partition(String),
    #[error("state error: {0}")]
    State(String),
    #[error("arithmetic error: {0}")]
    Arithmetic(String),
}

pub type Result<T> = core::result::Result<T, Error>;
