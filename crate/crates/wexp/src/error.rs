use thiserror::Error;

/// Errors raised by the library. Each variant belongs to one of two classes,
/// validation (bad input) or numerical (a computation broke down), which the
/// CLI maps to exit codes 2 and 3.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid path value")]
    InvalidPathValue,
    #[error("order {0} exceeds the supported maximum of {max}", max = crate::chaos::MAX_ORDER)]
    OrderTooLarge(u32),
    #[error("integer overflow in coefficient computation")]
    Overflow,
    #[error("invalid integrand order {0}")]
    InvalidIntegrandOrder(i64),
    #[error("theorem requires positive orders")]
    NonPositiveOrder,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("grid of {0} nodes exceeds the memory budget")]
    GridTooLarge(usize),
    #[error("index {index} out of range 1..={n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("explosion: non-finite state at fine step {0}")]
    Explosion(usize),
    #[error("order {0} is not in the order set")]
    OrderNotInSet(u32),
    #[error("order set violates the gap condition: {0} and {1} are adjacent")]
    AdjacentOrders(u32, u32),
    #[error("derivative handle mismatch for {0}")]
    DerivativeMismatch(String),
    #[error("unsupported configuration: {0}")]
    Unsupported(String),
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("non-finite filter value")]
    NonFiniteFilter,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown {kind} '{name}'; available: {catalog}")]
    UnknownName {
        kind: &'static str,
        name: String,
        catalog: &'static str,
    },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// True for errors caused by a numerical breakdown rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Overflow
                | Error::Explosion(_)
                | Error::DegenerateVariance
                | Error::NonFiniteFilter
                | Error::InvalidPathValue
        )
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            3
        } else {
            2
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
