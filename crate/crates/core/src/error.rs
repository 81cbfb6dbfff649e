use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("missing run of {len} observations at index {start} exceeds max gap {max_gap}")]
    GapTooLarge {
        start: usize,
        len: usize,
        max_gap: usize,
    },
    #[error("series begins or ends with a missing value")]
    EndpointMissing,
    #[error("series contains missing values; impute before this operation")]
    MissingValues,
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("insufficient data: need {needed} observations, have {have}")]
    InsufficientData { needed: usize, have: usize },
    #[error("series is constant")]
    ConstantSeries,
    #[error("regressor matrix is singular")]
    SingularDesign,
    #[error("residuals are identically zero")]
    DegenerateResiduals,
    #[error("series are not aligned on identical dates: {0}")]
    AlignmentError(String),
    #[error("specification mismatch: {0}")]
    SpecMismatch(String),
    #[error("conditional variance became non-positive at index {0}")]
    VarianceNonPositive(usize),
    #[error("log-likelihood is not finite")]
    NonFinite,
    #[error("out of range: {0}")]
    RangeError(String),
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("parse error at row {row}: {msg}")]
    ParseError { row: usize, msg: String },
    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: String },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
