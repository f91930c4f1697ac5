use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("point is behind the camera (z_cam = {z})")]
    BehindCamera { z: f64 },

    #[error("depth must be positive, got {0}")]
    NonPositiveDepth(f64),

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("rank-deficient normal equations: pivot {pivot:.3e} at unknown {index} is below {threshold:.3e} (relative to max diagonal {max_diag:.3e})")]
    RankDeficient { index: usize, pivot: f64, threshold: f64, max_diag: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("landmark {0} has no entry in the correspondence table")]
    MissingCorrespondence(i64),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path} (run the `{stage}` stage first)")]
    MissingArtifact { stage: &'static str, path: PathBuf },

    #[error("{path}: parse error at {location}: {message}")]
    Parse { path: String, location: String, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(path: impl Into<String>, location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), location: location.into(), message: message.into() }
    }

    /// Coarse category used for CLI exit codes and reports.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } | Error::Image { .. } => "io",
            Error::Parse { .. } | Error::Json { .. } => "parse",
            Error::Config(_) | Error::MissingArtifact { .. } => "config",
            Error::RankDeficient { .. } | Error::Singular(_) => "solver",
            _ => "input",
        }
    }
}
