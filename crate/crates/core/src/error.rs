use thiserror::Error;

/// Errors raised anywhere in the IHT pipeline.
#[derive(Debug, Error)]
pub enum IhtError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    #[error("response column '{0}' not found")]
    MissingResponse(String),

    #[error("duplicate column '{0}'")]
    DuplicateColumn(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("n < p + 2: need at least {required} rows for {p} predictors, got {n}")]
    TooFewRows { n: usize, p: usize, required: usize },

    #[error("singular covariance: eigenvalue {value:e} at index {index} is below {threshold:e}")]
    SingularCovariance {
        index: usize,
        value: f64,
        threshold: f64,
    },

    #[error("constant predictor column '{0}'")]
    ConstantPredictor(String),

    #[error("zero response variance")]
    ZeroResponseVariance,

    #[error("degenerate scaling: C2 = {0:e} is not positive")]
    DegenerateScaling(f64),

    #[error("index {index} out of range 0..{upper}")]
    OutOfRange { index: usize, upper: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("quadrature did not reach tolerance: estimated error {estimate:e}")]
    Accuracy { estimate: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("test sequence aborted at j = {}: {source}", trail.len())]
    Sequential {
        trail: Vec<crate::dimension::TestResult>,
        #[source]
        source: Box<IhtError>,
    },
}

impl IhtError {
    /// True for failures caused by the numbers themselves rather than by
    /// malformed input.
    pub fn is_numeric(&self) -> bool {
        if let IhtError::Sequential { source, .. } = self {
            return source.is_numeric();
        }
        matches!(
            self,
            IhtError::SingularCovariance { .. }
                | IhtError::ConstantPredictor(_)
                | IhtError::ZeroResponseVariance
                | IhtError::DegenerateScaling(_)
                | IhtError::Accuracy { .. }
                | IhtError::Numerical(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, IhtError>;
