use std::path::PathBuf;

use thiserror::Error;

use crate::perturbation::StrategyKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: unsupported bit depth {found} (expected {expected}-bit)", path.display())]
    UnsupportedBitDepth {
        path: PathBuf,
        found: u8,
        expected: u8,
    },

    #[error("{}: unsupported channel layout {found} (expected {expected})", path.display())]
    UnsupportedChannels {
        path: PathBuf,
        found: String,
        expected: &'static str,
    },

    #[error("{}: corrupt PNG stream: {message}", path.display())]
    CorruptPng { path: PathBuf, message: String },

    #[error("{}: malformed NPY: {message}", path.display())]
    MalformedNpy { path: PathBuf, message: String },

    #[error("zero-sized raster ({width}x{height})")]
    ZeroDimension { width: u32, height: u32 },

    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("heatmap value out of range at pixel {index}: {value}")]
    HeatmapOutOfRange { index: usize, value: f32 },

    #[error("heatmap value is NaN at pixel {index}")]
    HeatmapNan { index: usize },

    #[error("dimension mismatch: {what} is {found:?}, expected {expected:?}")]
    DimensionMismatch {
        what: String,
        expected: (u32, u32),
        found: (u32, u32),
    },

    #[error("threshold {0} outside [0, 1]")]
    InvalidThreshold(f64),

    #[error("strategy {0} requires a reference mask")]
    MissingReference(StrategyKind),

    #[error("strategy {0} does not take a reference mask")]
    UnexpectedReference(StrategyKind),

    #[error(
        "reference population mismatch: baseline has {baseline} reference-positive pixels, \
         perturbed run has {perturbed}"
    )]
    PopulationMismatch { baseline: u64, perturbed: u64 },

    #[error("cannot aggregate an empty sequence of confusion counts")]
    EmptyAggregate,

    #[error("failed to launch runner `{command}`: {source}")]
    RunnerSpawn {
        command: String,
        #[source]
        source: std::io::Error,
    },

    #[error("runner exited with status {status}{}", stderr_suffix(.stderr_tail))]
    RunnerExit { status: String, stderr_tail: String },

    #[error("runner exceeded timeout of {secs} s")]
    RunnerTimeout { secs: u64 },

    #[error("runner produced no mask for id `{id}`")]
    MissingMask { id: String },

    #[error("no probability map registered for id `{id}`")]
    MissingProbability { id: String },

    #[error("invalid batch manifest: {0}")]
    BatchManifest(String),

    #[error("{0}")]
    Runner(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u64, expected: u64 },

    #[error("cell {method}/{threshold}/{strategy}{}: {source}", image_suffix(.image))]
    Cell {
        method: String,
        threshold: f64,
        strategy: StrategyKind,
        image: Option<String>,
        #[source]
        source: Box<Error>,
    },

    #[error("baseline{}: {source}", image_suffix(.image))]
    Baseline {
        image: Option<String>,
        #[source]
        source: Box<Error>,
    },
}

fn stderr_suffix(tail: &str) -> String {
    if tail.is_empty() {
        String::new()
    } else {
        format!("; stderr: {tail}")
    }
}

fn image_suffix(image: &Option<String>) -> String {
    match image {
        Some(id) => format!(" (image `{id}`)"),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by invalid configuration or dataset layout
    /// rather than by a failure while evaluating.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Json { .. }
                | Error::Schema { .. }
                | Error::InvalidThreshold(_)
                | Error::MissingReference(_)
                | Error::UnexpectedReference(_)
        )
    }
}
