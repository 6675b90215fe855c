use num_complex::Complex64;

/// Errors raised by the approximation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("diskgrid: q = {q} fails the validity gate (sum of q^1..q^12 is {sum:.4}, must exceed 11)")]
    InvalidQ { q: f64, sum: f64 },
    #[error("diskgrid: point {z} lies outside the annular scheme")]
    OutOfRange { z: Complex64 },
    #[error("partition: mass {mass} is not an integer multiple of {quantum}")]
    NonIntegerMass { mass: f64, quantum: u32 },
    #[error("atomize: cell mass {found} does not match p = {expected}")]
    MassMismatch { expected: u32, found: f64 },
    #[error("atomize: root finding did not converge for degree {degree}")]
    RootFindingFailure { degree: usize },
    #[error("atomize: displacement ratio {ratio:.6} exceeds the bound {bound} for p = {p}")]
    BoundViolation { ratio: f64, bound: f64, p: u32 },
    #[error("potential: evaluation point {z} coincides with an atom")]
    AtomHit { z: Complex64 },
    #[error("slowvar: W is not invertible at target {target}")]
    NotInvertible { target: f64 },
    #[error("slowvar: curve leaves the angular band of cell {n}")]
    CurveEscapesCell { n: usize },
    #[error("{0}")]
    Unsupported(String),
    #[error("config: {0}")]
    Config(String),
    #[error("precondition: {0}")]
    Precondition(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
