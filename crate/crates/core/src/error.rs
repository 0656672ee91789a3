use thiserror::Error;

/// Errors raised by the simulator and its analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("radial function is not positive at theta = {theta:.6} (R = {radius:.3e})")]
    NonStarShaped { theta: f64, radius: f64 },

    #[error("boundary resolution too low: {0}")]
    ResolutionTooLow(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("eigensolver failed: {0}")]
    EigensolveFailure(String),

    #[error("requested {requested} noise modes but the grid only supports {available}")]
    ModeCountExceedsGrid { requested: usize, available: usize },

    #[error("droplet radius calibration failed: {0}")]
    CalibrationFailure(String),

    #[error("parameter out of range: {0}")]
    ParamOutOfRange(String),

    #[error("xi-derivative stencil failed: {0}")]
    StencilFailure(String),

    #[error("projection onto the droplet manifold diverged: {0}")]
    ProjectionDiverged(String),

    #[error("state is outside the tubular neighbourhood (distance {distance:.4e} > {radius:.4e})")]
    OutsideNeighborhood { distance: f64, radius: f64 },

    #[error("A = {0:.6e} is not positive; the reduced equation is singular")]
    SingularA(f64),

    #[error("linear solve failed: {0}")]
    LinearSolveFailure(String),

    #[error("time step too large: dt * max|f'(w)| = {0:.4} exceeds 0.5")]
    StepTooLarge(f64),

    #[error("non-finite value in field after {0}")]
    NonFinite(&'static str),

    #[error("regression needs at least 3 points, got {0}")]
    InsufficientPoints(usize),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("validation failed [{constraint}]: {message}")]
    Validation {
        constraint: &'static str,
        message: String,
    },

    #[error("malformed field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag, used in CLI error reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonStarShaped { .. } => "NonStarShaped",
            Error::ResolutionTooLow(_) => "ResolutionTooLow",
            Error::GridMismatch => "GridMismatch",
            Error::EigensolveFailure(_) => "EigensolveFailure",
            Error::ModeCountExceedsGrid { .. } => "ModeCountExceedsGrid",
            Error::CalibrationFailure(_) => "CalibrationFailure",
            Error::ParamOutOfRange(_) => "ParamOutOfRange",
            Error::StencilFailure(_) => "StencilFailure",
            Error::ProjectionDiverged(_) => "ProjectionDiverged",
            Error::OutsideNeighborhood { .. } => "OutsideNeighborhood",
            Error::SingularA(_) => "SingularA",
            Error::LinearSolveFailure(_) => "LinearSolveFailure",
            Error::StepTooLarge(_) => "StepTooLarge",
            Error::NonFinite(_) => "NonFinite",
            Error::InsufficientPoints(_) => "InsufficientPoints",
            Error::Parse { .. } => "ParseError",
            Error::Validation { .. } => "ValidationError",
            Error::Format(_) => "FormatError",
            Error::Io(_) => "IoError",
            Error::Json(_) => "JsonError",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
