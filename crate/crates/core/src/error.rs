use thiserror::Error;

pub type Result<T> = std::result::Result<T, VcldaError>;

#[derive(Debug, Error)]
pub enum VcldaError {
    #[error("invalid basis dimension: num_basis = {num_basis} must be at least degree + 1 = {}", degree + 1)]
    InvalidDimension { degree: usize, num_basis: usize },

    #[error("within-class Gram matrix for class {class} is singular (condition estimate {condition:.3e}); lower the basis size")]
    SingularGram { class: u8, condition: f64 },

    #[error("linear system is singular (condition estimate {condition:.3e}); reduce p or the basis size")]
    SingularSystem { condition: f64 },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid label {0}: labels must be 0 or 1")]
    InvalidLabel(u8),

    #[error("degenerate plug-in scale: denominator {0:.3e} is not positive")]
    DegenerateScale(f64),

    #[error("fitted discriminant direction is zero at u = {0}")]
    ZeroDirection(f64),

    #[error("unknown direction id {0} (expected 1-4)")]
    UnknownDirection(u32),

    #[error("unknown covariance id {0} (expected 1-3)")]
    UnknownCovariance(u32),

    #[error("no grid point satisfies the per-fold sample requirement")]
    InfeasibleGrid,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        row: usize,
        column: usize,
        message: String,
    },

    #[error("invalid input format: {0}")]
    Format(String),

    #[error("trial {trial} (seed {seed}) failed: {source}")]
    TrialFailed {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<VcldaError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl VcldaError {
    /// True for failures of the estimator itself (singularities, degenerate fits)
    /// as opposed to bad input or IO.
    pub fn is_numerical(&self) -> bool {
        match self {
            VcldaError::SingularGram { .. }
            | VcldaError::SingularSystem { .. }
            | VcldaError::SingularCovariance
            | VcldaError::DegenerateScale(_)
            | VcldaError::ZeroDirection(_)
            | VcldaError::InfeasibleGrid => true,
            VcldaError::TrialFailed { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}
