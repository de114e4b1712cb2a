use thiserror::Error;

/// Coarse classification used by front ends to map failures onto exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// A mathematical precondition of the requested operation does not hold.
    Precondition,
    /// The operation was well posed but the numerics failed.
    Numerical,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("spectra overlap: closest eigenvalue pair at distance {distance:.3e} (tolerance {tolerance:.3e})")]
    SpectraOverlap { distance: f64, tolerance: f64 },
    #[error("Sylvester operator is numerically singular (smallest pivot {pivot:.3e})")]
    Singular { pivot: f64 },
    #[error("solution residual {residual:.3e} exceeds bound {bound:.3e}")]
    Inaccurate { residual: f64, bound: f64 },
    #[error("evaluation point {point} lies within {tolerance:.3e} of a pole")]
    PoleHit { point: String, tolerance: f64 },
    #[error("feedback interconnection is ill-posed: 1 + D_P*D_K = {0:.3e}")]
    IllPosed(f64),
    #[error("pair is not observable: rank {rank} < {dim}")]
    NotObservable { rank: usize, dim: usize },
    #[error("{what} is not stable (spectral abscissa {abscissa:.6e})")]
    Unstable { what: String, abscissa: f64 },
    #[error("pole placement failed: {0}")]
    PlacementFailed(String),
    #[error("stabilization budget exhausted: best spectral abscissa {best_abscissa:.6e} ({certificate})")]
    BudgetExhausted {
        best_abscissa: f64,
        certificate: String,
        trace: Vec<f64>,
    },
    #[error("extracted controller is improper: numerator degree {num_degree} > denominator degree {den_degree}")]
    Improper { num_degree: usize, den_degree: usize },
    #[error("cancellation is ambiguous: roots {a} and {b} are {distance:.3e} apart, inside the tolerance band")]
    CancellationUnsafe { a: String, b: String, distance: f64 },
    #[error("re-closing the extracted controller misses the reduced loop by relative error {0:.3e}")]
    ReclosureFailed(f64),
    #[error("data is not real: largest imaginary part {0:.3e}")]
    NotReal(f64),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Singular { .. }
            | Error::Inaccurate { .. }
            | Error::BudgetExhausted { .. }
            | Error::ReclosureFailed(_)
            | Error::CancellationUnsafe { .. } => ErrorKind::Numerical,
            _ => ErrorKind::Precondition,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
