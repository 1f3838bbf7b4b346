use std::path::PathBuf;

/// Errors produced by the resampling library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("sample count {actual} does not match grid size {expected}")]
    SampleCount { expected: usize, actual: usize },

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("target covariance is degenerate (min eigenvalue {min_eig:e}), cannot whiten")]
    DegenerateTarget { min_eig: f64 },

    #[error("matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("jacobian is singular (|det| = {det:e})")]
    SingularJacobian { det: f64 },

    #[error("diagonal matching requires a diagonal target covariance")]
    NonDiagonalTarget,

    #[error("negative FWHM component {value} on axis {axis}")]
    NegativeFwhm { axis: usize, value: f64 },

    #[error("invalid affine transform: {0}")]
    InvalidAffine(String),

    #[error("displacement field grid does not match the target grid")]
    GridMismatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("need at least 5 non-zero differences, got {n}")]
    TooFewPairs { n: usize },

    #[error("not applicable: {0}")]
    NotApplicable(&'static str),

    #[error("bad magic {found:?} at byte offset {offset}")]
    BadMagic { found: [u8; 4], offset: usize },

    #[error("unsupported datatype={code} at byte offset {offset}")]
    UnsupportedDatatype { code: i16, offset: usize },

    #[error("unsupported dimensions {dims:?} at byte offset {offset}")]
    UnsupportedDimensions { dims: [i16; 8], offset: usize },

    #[error("invalid header field {field}={value} at byte offset {offset}")]
    InvalidHeader {
        field: &'static str,
        value: String,
        offset: usize,
    },

    #[error("truncated file: {field} needs {needed} bytes from offset {offset}, file has {len}")]
    TruncatedFile {
        field: &'static str,
        offset: usize,
        needed: usize,
        len: usize,
    },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o failure on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
