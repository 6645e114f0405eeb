use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unphysical asymmetry: anti-Stokes rate {gamma_r} must be below Stokes rate {gamma_b}")]
    UnphysicalAsymmetry { gamma_r: f64, gamma_b: f64 },

    #[error("degenerate design: {0}")]
    DegenerateDesign(String),

    #[error("fit did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("singular evaluation at omega = {0} rad/s")]
    SingularEvaluation(f64),

    #[error("no peaks found")]
    NoPeaks,

    #[error("lag {tau} ns exceeds the integration horizon {horizon} ns")]
    TauBeyondHorizon { tau: f64, horizon: f64 },

    #[error("number-distribution tail {tail:.3e} exceeds bound {bound:.1e} at cutoff {cutoff}")]
    CutoffTail { tail: f64, bound: f64, cutoff: usize },

    #[error("ambiguous click assignment: {0}")]
    AmbiguousClickAssignment(String),

    #[error("insufficient baseline statistics: {0}")]
    InsufficientBaseline(String),

    #[error("invalid pulse scheme: {0}")]
    InvalidScheme(String),

    #[error("not a click file")]
    NotAClickFile,

    #[error("unsupported click file version {0}")]
    UnsupportedVersion(u16),

    #[error("click file truncated: {0}")]
    Truncated(String),

    #[error("records not sorted by (trial, time) at index {0}")]
    Unsorted(usize),

    #[error("config: {0}")]
    Config(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
