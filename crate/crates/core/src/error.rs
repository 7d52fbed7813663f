use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: missing column `{0}`")]
    MissingColumn(String),

    #[error("validation error at row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("conflicting treatment in cell ({period}, {unit})")]
    TreatmentConflict { period: String, unit: String },

    #[error("empty cell ({period}, {unit})")]
    EmptyCell { period: String, unit: String },

    #[error("empty risk set")]
    EmptyRiskSet,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rank error: {0}")]
    Rank(String),

    #[error("no events")]
    NoEvents,

    #[error("no covariates")]
    NoCovariates,

    #[error("newton iteration did not converge after {iterations} iterations (gradient norm {gradient_norm:e})")]
    NonConvergence {
        iterations: usize,
        gradient_norm: f64,
        last_iterate: Vec<f64>,
    },

    #[error("coefficient norm diverging ({norm:.3e}); likely separation")]
    Separation { norm: f64 },

    #[error("information matrix is singular; design is rank-deficient")]
    SingularInformation,

    #[error("bisection bracket failure: [{lo:e}, {hi:e}] does not bracket the target")]
    Bracket { lo: f64, hi: f64 },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error("bootstrap failed: {0}")]
    Bootstrap(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
