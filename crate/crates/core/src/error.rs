use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("operator support {support} does not fit on a ring of {n} sites")]
    SupportTooLarge { support: usize, n: usize },
    #[error("operator is not Hermitian (max deviation {0:.3e})")]
    NonHermitian(f64),
    #[error("boost commutator is not translation covariant (residual {0:.3e}); the operand is not conserved")]
    NotCovariant(f64),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("negative rate {0}")]
    NegativeRate(f64),
    #[error("steady state is degenerate: singular value ratio {ratio:.3e} below threshold")]
    DegenerateSteadyState { ratio: f64 },
    #[error("no convergence after {iterations} iterations (best residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular Jacobian; a charge with identically vanishing drift should be removed")]
    SingularJacobian,
    #[error("charges do not commute within a degenerate block (residual {0:.3e})")]
    CommutatorViolation(f64),
    #[error("commutant projection is ill-conditioned: {0}")]
    IllConditionedProjection(String),
    #[error("target energy {target} outside the open spectral range ({min}, {max})")]
    TargetOutOfRange { target: f64, min: f64, max: f64 },
    #[error("expectation value has imaginary residue {0:.3e}")]
    ImaginaryResidue(f64),
    #[error("top phonon level population {0:.3e} exceeds the leakage bound")]
    CutoffLeakage(f64),
    #[error("integrator step size underflow at t = {0}")]
    StepSizeUnderflow(f64),
    #[error("singular non-Hermitian block: {0}")]
    SingularBlock(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
}

impl From<ndarray_linalg::error::LinalgError> for Error {
    fn from(e: ndarray_linalg::error::LinalgError) -> Self {
        Error::Linalg(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
