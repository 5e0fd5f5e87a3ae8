use thiserror::Error;

/// Library-wide error type. Variants map onto the CLI exit codes:
/// validation problems exit 2, numerical failures exit 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("angle theta={theta} is off the physical curve (discriminant {discriminant})")]
    InadmissibleAngle { theta: f64, discriminant: f64 },

    #[error("root tracking failed: {0}")]
    BranchTracking(String),

    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),

    #[error(
        "precision loss: estimated error {estimate:.3e} exceeds budget {budget:.3e}; \
         rerun with the extended accumulation mode or a looser tolerance"
    )]
    PrecisionLoss { estimate: f64, budget: f64 },

    #[error("contour truncation bound not met: {0}")]
    ContourConfig(String),

    #[error("decomposition failed after {attempts} resampling attempts")]
    Decomposition { attempts: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
