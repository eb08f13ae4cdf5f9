use thiserror::Error;

/// Everything that can go wrong between reading a config and writing a report.
#[derive(Debug, Error)]
pub enum ReconError {
    #[error("domain touches axis: center offset {offset} must exceed radius {radius} > 0")]
    DomainTouchesAxis { offset: f64, radius: f64 },

    #[error("unsupported dimension {0}: only n = 3 is built")]
    UnsupportedDimension(usize),

    #[error("degenerate tetrahedron {index} (volume {volume:e})")]
    DegenerateElement { index: usize, volume: f64 },

    #[error("mask margin {delta} too large: masks would cover the whole boundary")]
    MarginTooLarge { delta: f64 },

    #[error("mask margin must be positive, got {0}")]
    MarginNotPositive(f64),

    #[error("cutoff band {band} must lie in (0, delta/2) with delta = {delta}")]
    BandTooWide { band: f64, delta: f64 },

    #[error("operator is near singular (condition estimate {condition:e})")]
    NearSingular { condition: f64 },

    #[error("weight overflow at tau = {tau}: max |zeta|^|tau| = {growth:e} exceeds 1e12")]
    TauTooLarge { tau: f64, growth: f64 },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("mask violation: {0}")]
    MaskViolation(String),

    #[error("fixed-point iteration is not contracting (estimate {estimate:.3})")]
    NotContracting { estimate: f64 },

    #[error("boundary integral system ill-conditioned (condition {condition:e}); increase tau")]
    IllConditioned { condition: f64 },

    #[error("size mismatch: {0}")]
    Mismatch(String),

    #[error("conductivity must be positive on the boundary (min {0})")]
    NonPositiveConductivity(f64),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<ReconError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, ReconError>;

impl ReconError {
    pub(crate) fn at(stage: &'static str) -> impl FnOnce(ReconError) -> ReconError {
        move |source| ReconError::Stage {
            stage,
            source: Box::new(source),
        }
    }
}
