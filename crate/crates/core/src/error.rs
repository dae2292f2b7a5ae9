use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Errors raised by the algorithmic core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor or image shapes do not fit together.
    Shape(String),
    /// A forward value, gradient or loss became NaN or infinite.
    NonFinite(String),
    /// An argument violated an operation's precondition.
    InvalidArgument(String),
    /// An image has no foreground to work with.
    Degenerate(String),
    /// AUC needs at least one positive and one negative label.
    AucUndefined,
    /// A data-model invariant does not hold (pair ordering, duplicate dates, ...).
    Invariant(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate image: {msg}"),
            Error::AucUndefined => f.write_str("AUC undefined: labels contain a single class"),
            Error::Invariant(msg) => write!(f, "invariant violated: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

macro_rules! shape_err {
    ($($arg:tt)*) => { $crate::error::Error::Shape(alloc::format!($($arg)*)) };
}
macro_rules! invalid {
    ($($arg:tt)*) => { $crate::error::Error::InvalidArgument(alloc::format!($($arg)*)) };
}
pub(crate) use invalid;
pub(crate) use shape_err;
