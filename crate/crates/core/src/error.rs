use alloc::string::String;
use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Validation failures raised by the numerical core.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Two inputs that must agree in shape do not.
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    NonBinaryLabel {
        row: usize,
        col: usize,
    },
    DuplicateId(String),
    NonFinite {
        what: &'static str,
    },
    ProbabilityOutOfRange {
        row: usize,
        col: usize,
    },
    /// A score matrix was passed where the other kind was required.
    WrongKind {
        expected: &'static str,
    },
    /// Rows or columns of two score matrices are not aligned by id or class.
    Misaligned(String),
    ZeroCount {
        class: usize,
    },
    ZeroNorm {
        row: usize,
    },
    NotNormalized {
        row: usize,
    },
    InvalidParameter(String),
    Empty(&'static str),
    Diverged {
        epoch: usize,
    },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { what, expected, found } => {
                write!(f, "shape mismatch in {what}: expected {expected}, found {found}")
            }
            Error::NonBinaryLabel { row, col } => {
                write!(f, "non-binary label at row {row}, column {col}")
            }
            Error::DuplicateId(id) => write!(f, "duplicate id `{id}`"),
            Error::NonFinite { what } => write!(f, "non-finite value in {what}"),
            Error::ProbabilityOutOfRange { row, col } => {
                write!(f, "probability out of range at row {row}, column {col}")
            }
            Error::WrongKind { expected } => write!(f, "expected a score matrix of {expected}"),
            Error::Misaligned(msg) => write!(f, "misaligned inputs: {msg}"),
            Error::ZeroCount { class } => write!(f, "class {class} has zero positive samples"),
            Error::ZeroNorm { row } => write!(f, "row {row} has zero norm"),
            Error::NotNormalized { row } => write!(f, "row {row} is not unit-normalized"),
            Error::InvalidParameter(msg) => write!(f, "invalid parameter: {msg}"),
            Error::Empty(what) => write!(f, "empty input: {what}"),
            Error::Diverged { epoch } => write!(f, "training diverged (non-finite loss) in epoch {epoch}"),
        }
    }
}

impl core::error::Error for Error {}
