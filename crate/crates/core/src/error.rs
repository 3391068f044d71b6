use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library reports. Numerical failures carry enough context
/// to be printed verbatim by the command-line front-end.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(
        "constraint Jacobian is rank-deficient at {point:?} (singular value ratio {ratio:.3e})"
    )]
    RankDeficient { point: Vec<f64>, ratio: f64 },

    #[error("retraction diverged from {point:?} (constraint residual {residual:.3e})")]
    RetractionDiverged { point: Vec<f64>, residual: f64 },

    #[error("tangent step of length {length:.3e} exceeds the retraction cap {cap:.3e}")]
    StepTooLarge { length: f64, cap: f64 },

    #[error("solution left the escape radius {radius:.3e} at t = {time:.6e}")]
    BlowUp { time: f64, radius: f64 },

    #[error("point is outside the operator domain: {0}")]
    OutsideDomain(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("point {point:?} is not a zero of the field (|g| = {norm:.3e})")]
    NotAZero { point: Vec<f64>, norm: f64 },

    #[error("tangent Jacobian is nearly singular at {point:?} (det = {det:.3e})")]
    NearSingular { point: Vec<f64>, det: f64 },

    #[error("degenerate zero at {point:?} (det = {det:.3e}); the sign-sum degree is undefined")]
    DegenerateZero { point: Vec<f64>, det: f64 },

    #[error("zero at {point:?} lies within the boundary margin of the region")]
    BoundaryZero { point: Vec<f64> },

    #[error("field/region pair is not admissible: {0}")]
    NotAdmissible(String),

    #[error("field vanishes on the boundary (min |w| = {min_norm:.3e})")]
    VanishingOnBoundary { min_norm: f64 },

    #[error("winding angle residue {residue:.3} too large after {samples} samples")]
    AngleResidueTooLarge { residue: f64, samples: usize },

    #[error("point {point:?} is not a fixed point of P (|P(p) - p| = {displacement:.3e})")]
    NotAFixedPoint { point: Vec<f64>, displacement: f64 },

    #[error("fixed point {point:?} is not hyperbolic (det(I - D) = {det:.3e})")]
    NonHyperbolic { point: Vec<f64>, det: f64 },

    #[error("fixed point index {index} disagrees with deg(-g) = {degree}")]
    IndexMismatch { index: i64, degree: i64 },

    #[error("reduction formula violated: ind(Q,W) = {index_q}, deg(-g,W_check) = {degree}, ind(P,W_check) = {index_p}")]
    ReductionMismatch {
        index_q: i64,
        degree: i64,
        index_p: i64,
    },

    #[error("Newton iteration diverged: {0}")]
    NewtonDiverged(String),

    #[error("singular Jacobian (smallest singular value {sigma_min:.3e}); possible bifurcation or resonance")]
    SingularJacobian { sigma_min: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("malformed record on line {line}: {message}")]
    Record { line: usize, message: String },
}
