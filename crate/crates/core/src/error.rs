use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument violates a precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// Data produced or supplied during processing is malformed.
    #[error("data error: {0}")]
    Data(String),
    #[error("insufficient pool: need at least {needed} documents, got {got}")]
    InsufficientPool { needed: usize, got: usize },
    #[error("undefined: {0}")]
    Undefined(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

macro_rules! invalid {
    ($($arg:tt)*) => {
        $crate::Error::InvalidInput(alloc::format!($($arg)*))
    };
}
pub(crate) use invalid;
