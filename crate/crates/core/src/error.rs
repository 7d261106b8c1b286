use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("domain error: {what} at x = {x}")]
    Domain { what: &'static str, x: f64 },

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },

    #[error("missing config key `{0}`")]
    MissingKey(String),

    #[error("density is not strictly positive: rho({x}) = {value}")]
    NonPositiveDensity { x: f64, value: f64 },

    #[error("exponent p must satisfy 1 <= p < inf, got {0}")]
    InvalidExponent(f64),

    #[error("empty interval ({lo}, {hi})")]
    EmptyInterval { lo: f64, hi: f64 },

    #[error("trajectory from x = {x} leaves the domain before t = {t}")]
    ForwardInvariance { t: f64, x: f64 },

    #[error("integrator failure: {0}")]
    Integrator(String),

    #[error("|F| drops to {min_abs_f:e} on [{a}, {b}], below the floor {floor:e}")]
    FloorViolation { a: f64, b: f64, min_abs_f: f64, floor: f64 },

    #[error("interval [{a}, {b}] is not contained in a single component of the complement of {{F = 0}}")]
    NotInComponent { a: f64, b: f64 },

    #[error("the zero set of F appears to have positive measure")]
    ZeroSetNotNull,

    #[error("weight cocycle underflow at x = {x}, t = {t}: |h_t| = {modulus:e}")]
    WeightUnderflow { x: f64, t: f64, modulus: f64 },

    #[error("inner integrand singular at y = {0}")]
    InnerSingularity(f64),

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error("intertwining relation violated: relative error {0:e}")]
    Intertwining(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),
}

pub type Result<T> = std::result::Result<T, Error>;
