use thiserror::Error;

/// Errors surfaced by the library. Messages are single-line so the CLI can print them verbatim.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("dual basis degree {requested} exceeds the configured cap {cap}")]
    DegreeCap { requested: u32, cap: u32 },
    #[error("singular duality system in degree {0}; field definitions are inconsistent")]
    SingularDuality(u32),
    #[error("guard band {have} too small for order {order}; need at least {need}")]
    GuardBand { have: usize, need: usize, order: u32 },
    #[error("declared derivative order {have} of a coefficient is below the required {need}")]
    DerivativeOrder { have: u32, need: u32 },
    #[error("matrix is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("symbol sample is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("point z = {re} + {im}i is on the real axis")]
    RealSpectralParameter { re: f64, im: f64 },
    #[error("z - sigma0 is numerically singular (distance of z to the sampled spectrum {0:.3e})")]
    SingularResolvent(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("growth order m' = {0} >= -1 requires compact support")]
    GrowthOrder(f64),
    #[error("cap insufficient: {0}")]
    CapInsufficient(String),
    #[error("calibration functions disagree: relative gap {0:.3e}")]
    CalibrationMismatch(f64),
    #[error("unknown column '{0}'")]
    UnknownColumn(String),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
