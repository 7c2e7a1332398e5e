use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(
        "matrix {matrix} is singular (smallest pivot {min_pivot:.3e} vs largest {max_pivot:.3e})"
    )]
    SingularMatrix {
        matrix: String,
        min_pivot: f64,
        max_pivot: f64,
    },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("parse error at row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("treatment column contains non-binary value {value:?} at row {row}")]
    NonBinaryTreatment { row: usize, value: String },

    #[error("arm {arm} has {size} units; at least {required} are required")]
    DegenerateArm {
        arm: char,
        size: usize,
        required: usize,
    },

    #[error("arm {arm} has {size} units; bias corrections need at least 3 per arm")]
    ArmTooSmall { arm: char, size: usize },

    #[error("unit {index} has leverage {leverage} (perfect fit); robust variance undefined")]
    LeverageOne { index: usize, leverage: f64 },

    #[error("Satterthwaite spectrum is degenerate (all eigenvalues zero)")]
    DegenerateSpectrum,

    #[error("argument {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("C({n}, {k}) does not fit in 64 bits")]
    Overflow { n: usize, k: usize },

    #[error("index {index} out of range for a space of {total} assignments")]
    IndexOutOfRange { index: u64, total: u64 },

    #[error("space of {total} assignments exceeds the exact-mode budget of {budget}; use Monte Carlo mode")]
    BudgetExceeded { total: u64, budget: u64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("assignment rank {rank}: {source}")]
    AtAssignment {
        rank: u64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Renames the matrix carried by a [`Error::SingularMatrix`]; other variants pass through.
    pub fn named(self, name: &str) -> Self {
        match self {
            Error::SingularMatrix {
                min_pivot,
                max_pivot,
                ..
            } => Error::SingularMatrix {
                matrix: name.to_string(),
                min_pivot,
                max_pivot,
            },
            other => other,
        }
    }

    /// True for I/O-class failures (as opposed to data or model errors).
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Csv(e) => e.is_io_error(),
            Error::AtAssignment { source, .. } => source.is_io(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
