use std::fmt;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Pipeline stage, used to tag errors that abort a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Config,
    Grid,
    Echo,
    RangeDoppler,
    Cfar,
    Angle,
    Fusion,
    Metrics,
    Output,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Grid => "grid",
            Stage::Echo => "echo",
            Stage::RangeDoppler => "range-doppler",
            Stage::Cfar => "cfar",
            Stage::Angle => "angle",
            Stage::Fusion => "fusion",
            Stage::Metrics => "metrics",
            Stage::Output => "output",
        };
        f.write_str(s)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid numerology: mu = {0} (expected 0..=6)")]
    InvalidNumerology(i64),

    #[error("invalid grid dimensions: {0}")]
    InvalidDims(String),

    #[error("invalid array configuration: {0}")]
    InvalidArray(String),

    #[error("invalid angle: {0}")]
    InvalidAngle(String),

    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("zero transmit symbol at subcarrier {k}, symbol {l}")]
    ZeroSymbol { k: usize, l: usize },

    #[error("padding ({padded}) smaller than data length ({data}) along {axis}")]
    PaddingTooSmall {
        axis: &'static str,
        padded: usize,
        data: usize,
    },

    #[error("CFAR configuration: {0}")]
    Cfar(String),

    #[error("bin ({m}, {n}) outside map of size {n_r}x{n_d}")]
    BinOutOfBounds {
        m: usize,
        n: usize,
        n_r: usize,
        n_d: usize,
    },

    #[error("degenerate dictionary: column {column} has norm {norm:e} (precoder null)")]
    DegenerateDictionary { column: usize, norm: f64 },

    #[error("ill-conditioned support at iteration {iteration}")]
    IllConditionedSupport { iteration: usize },

    #[error("solver configuration: {0}")]
    Solver(String),

    #[error("invalid pose for BS {bs_id}: {reason}")]
    InvalidPose { bs_id: usize, reason: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error("[{stage}] {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Attach a stage tag to a fallible result.
pub trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            already @ Error::Stage { .. } => already,
            other => Error::Stage {
                stage,
                source: Box::new(other),
            },
        })
    }
}
