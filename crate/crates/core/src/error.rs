use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("depth must be positive, got {0}")]
    DegenerateDepth(f64),
    #[error("point ({x}, {y}) lies outside the valid image region")]
    OutOfBounds { x: f64, y: f64 },
    #[error("invalid value: {0}")]
    InvalidInput(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: pixel ({x}, {y}) outside a {width}x{height} sensor")]
    Bounds {
        line: usize,
        x: i64,
        y: i64,
        width: u32,
        height: u32,
    },
    #[error("line {line}: timestamp {t} precedes stream time {latest} by more than the jitter budget")]
    OutOfOrder { line: usize, t: f64, latest: f64 },

    #[error("only {found} supporting pixels, need {required}")]
    InsufficientSupport { found: usize, required: usize },
    #[error("fired pixels are collinear")]
    DegenerateConfiguration,
    #[error("time-surface gradient {norm:e} s/px is below the minimum")]
    BelowMinGradient { norm: f64 },

    #[error("2x2 flow system is singular")]
    SingularSystem,
    #[error("linear velocity is zero; epipolar constraint vanishes")]
    PureRotation,
    #[error("rotation fully explains the normal flow; depth is unobservable")]
    RotationExplainsFlow,
    #[error("translational flow has no component along the normal flow")]
    PureTranslationZeroNumerator,
    #[error("stacked system has numerical rank {rank}, need {required}")]
    RankDeficient { rank: usize, required: usize },
    #[error("{found} observations, need at least {required}")]
    TooFewObservations { found: usize, required: usize },
    #[error("best consensus has {inliers} inliers, need {required}")]
    NoConsensus { inliers: usize, required: usize },

    #[error("homography has no plane-induced part; only rotation is observable")]
    PureRotationDegenerate { omega: [f64; 3] },
    #[error("plane normal and translation are parallel; candidates coincide")]
    RankOneDegenerate,

    #[error("time {t} outside spline domain [{start}, {end})")]
    OutOfDomain { t: f64, start: f64, end: f64 },
    #[error("{observations} observations for {unknowns} unknowns")]
    UnderDetermined { observations: usize, unknowns: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

/// Broad failure classes, used for process exit codes and C error codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Input,
    Degenerate,
    Numerical,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            DegenerateDepth(_) | OutOfBounds { .. } | InvalidInput(_) | Parse { .. }
            | Bounds { .. } | OutOfOrder { .. } | Io { .. } | Format { .. }
            | OutOfDomain { .. } => ErrorClass::Input,
            InsufficientSupport { .. }
            | DegenerateConfiguration
            | BelowMinGradient { .. }
            | SingularSystem
            | PureRotation
            | RotationExplainsFlow
            | PureTranslationZeroNumerator
            | RankDeficient { .. }
            | TooFewObservations { .. }
            | NoConsensus { .. }
            | PureRotationDegenerate { .. }
            | RankOneDegenerate
            | UnderDetermined { .. } => ErrorClass::Degenerate,
            Numerical(_) => ErrorClass::Numerical,
        }
    }

    /// Stable snake_case tag for machine-readable reports.
    pub fn reason(&self) -> &'static str {
        use Error::*;
        match self {
            DegenerateDepth(_) => "degenerate_depth",
            OutOfBounds { .. } => "out_of_bounds",
            InvalidInput(_) => "invalid_input",
            Parse { .. } => "parse_error",
            Bounds { .. } => "bounds_error",
            OutOfOrder { .. } => "out_of_order",
            InsufficientSupport { .. } => "insufficient_support",
            DegenerateConfiguration => "degenerate_configuration",
            BelowMinGradient { .. } => "below_min_gradient",
            SingularSystem => "singular_system",
            PureRotation => "pure_rotation",
            RotationExplainsFlow => "rotation_explains_flow",
            PureTranslationZeroNumerator => "pure_translation_zero_numerator",
            RankDeficient { .. } => "rank_deficient",
            TooFewObservations { .. } => "too_few_observations",
            NoConsensus { .. } => "no_consensus",
            PureRotationDegenerate { .. } => "pure_rotation_degenerate",
            RankOneDegenerate => "rank_one_degenerate",
            OutOfDomain { .. } => "out_of_domain",
            UnderDetermined { .. } => "under_determined",
            Numerical(_) => "numerical_failure",
            Io { .. } => "io_error",
            Format { .. } => "format_error",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
