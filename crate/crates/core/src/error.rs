use std::path::PathBuf;

/// Errors produced anywhere in the key-length engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operator is not Hermitian (max deviation {deviation:.3e})")]
    NotHermitian { deviation: f64 },

    #[error("operator is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e})")]
    NotPositive { min_eigenvalue: f64 },

    #[error("operator is not normalized (trace {trace:.12}, expected {expected})")]
    NotNormalized { trace: f64, expected: f64 },

    #[error("Kraus operators violate the trace condition (deviation {deviation:.3e})")]
    TraceCondition { deviation: f64 },

    #[error("non-finite entry in matrix")]
    NonFinite,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("weight bound is vacuous: lambda_out ({lam_out}) <= lambda_in ({lam_in})")]
    VacuousWeightBound { lam_in: f64, lam_out: f64 },

    #[error("squasher parameter c = {c} violates 0 <= c <= {lambda_min} (and c < 1)")]
    SquasherParameter { c: f64, lambda_min: f64 },

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("degenerate key map: image has zero trace")]
    ZeroTraceImage,

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    /// Short machine-readable tag for the error class.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::NotPositive { .. } => "not_positive",
            Error::NotNormalized { .. } => "not_normalized",
            Error::TraceCondition { .. } => "trace_condition",
            Error::NonFinite => "non_finite",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::SizeLimit(_) => "size_limit",
            Error::VacuousWeightBound { .. } => "vacuous_weight_bound",
            Error::SquasherParameter { .. } => "squasher_parameter",
            Error::Infeasible(_) => "infeasible",
            Error::Numerical(_) => "numerical",
            Error::ZeroTraceImage => "zero_trace_image",
            Error::Config(_) => "config",
            Error::Io { .. } => "io",
            Error::Csv { .. } => "csv",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
