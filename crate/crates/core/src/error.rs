use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coefficient field `{field}` produced a non-finite value at {point:?}")]
    CoefficientEvaluation { field: String, point: Vec<f64> },

    #[error("diffusion of `{field}` is not symmetric at {point:?} (max asymmetry {asymmetry:e})")]
    AsymmetricDiffusion {
        field: String,
        point: Vec<f64>,
        asymmetry: f64,
    },

    #[error("unknown catalogue field `{0}`")]
    Catalogue(String),

    #[error("bad field parameters: {0}")]
    FieldParams(String),

    #[error("expression error at byte {pos}: {msg}")]
    Expression { pos: usize, msg: String },

    #[error("diffusion is not positive definite at {point:?} (smallest eigenvalue {eigenvalue:e})")]
    EllipticityViolation { point: Vec<f64>, eigenvalue: f64 },

    #[error("Jacobi eigensolver did not converge within {sweeps} sweeps")]
    EigenFailure { sweeps: usize },

    #[error("shift mu = {mu} is not below the smallest eigenvalue {min_eigenvalue}")]
    ShiftTooLarge { mu: f64, min_eigenvalue: f64 },

    #[error("no admissible (mu, s0, s1): best margin {best_margin}")]
    NoAdmissibleConstants { best_margin: f64 },

    #[error("modulus lambda {profile} does not match 1/(4(lambda0 - mu)) = {expected}")]
    ConstantMismatch { profile: f64, expected: f64 },

    #[error("quadrature did not reach tolerance on [{a}, {b}] (error estimate {estimate:e})")]
    Quadrature { a: f64, b: f64, estimate: f64 },

    #[error("tail exponent {exponent} too close to -1 to classify boundedness")]
    BoundaryUndecided { exponent: f64 },

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("simulation blew up on path {path} at t = {time}")]
    SimulationBlowUp { path: usize, time: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}
