//! Crate-wide error type.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by series handling, model fitting, evaluation, and the
/// benchmark harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("series `{id}` must contain at least one value")]
    EmptySeries { id: String },

    #[error("series `{id}` has a non-finite value at index {index}")]
    NonFiniteValue { id: String, index: usize },

    #[error("sampling rate must be positive and finite, got {rate}")]
    InvalidSamplingRate { rate: f64 },

    #[error("split fractions {fractions:?} must be positive and sum to 1")]
    InvalidSplitFractions { fractions: (f64, f64, f64) },

    #[error("series of length {len} is too short to split into nonempty partitions")]
    SeriesTooShort { len: usize },

    #[error("quantile levels must be strictly increasing and inside (0, 1)")]
    InvalidQuantileLevels,

    #[error("history length and horizon must both be at least 1")]
    EmptyTask,

    #[error("window start {split_start} is smaller than the history length {history_length}")]
    HistoryBeforeSeriesStart {
        split_start: usize,
        history_length: usize,
    },

    #[error("no window with horizon {horizon} fits in the span [{start}, {end})")]
    NoWindowFits {
        start: usize,
        end: usize,
        horizon: usize,
    },

    #[error("history must contain at least {needed} values, got {got}")]
    HistoryTooShort { needed: usize, got: usize },

    #[error("scale values must be non-negative and finite")]
    InvalidScale,

    #[error("student-t degrees of freedom must exceed 2, got {dof}")]
    InvalidDof { dof: f64 },

    #[error("empirical forecasts need at least 2 trajectories, got {got}")]
    TooFewTrajectories { got: usize },

    #[error("trajectory matrix is ragged or contains non-finite values")]
    InvalidTrajectories,

    #[error("quantile matrix shape does not match the level grid")]
    QuantileShapeMismatch,

    #[error("AICC is undefined for {num_obs} observations and {num_params} parameters")]
    AiccUndefined { num_obs: usize, num_params: usize },

    #[error("evaluation batch is empty")]
    EmptyBatch,

    #[error("metric `{metric}` is undefined: {reason}")]
    UndefinedMetric {
        metric: &'static str,
        reason: String,
    },

    #[error("quantile level {level} is required but absent from the forecast grid")]
    MissingQuantileLevel { level: f64 },

    #[error("interval bounds are inverted: lower {lower} > upper {upper}")]
    InvertedInterval { lower: f64, upper: f64 },

    #[error("paired test needs at least 2 observations of equal count, got {a} and {b}")]
    InvalidPairedSamples { a: usize, b: usize },

    #[error("relative metric denominator must be positive, got {value}")]
    NonPositiveBaseline { value: f64 },

    #[error("validation window set is empty")]
    EmptyValidationSet,

    #[error("generator spec is invalid: {reason}")]
    InvalidGeneratorSpec { reason: String },

    #[error("AR coefficients {coefficients:?} do not define a stationary process")]
    NonStationary { coefficients: Vec<f64> },

    #[error("no closed-form forecast exists for generator kind `{kind}`")]
    UnsupportedOracle { kind: String },

    #[error("model grid is empty")]
    EmptyGrid,

    #[error("hidden-state count and lag count must both be at least 1")]
    InvalidHmmShape,

    #[error("moving-average kernel must be odd and no longer than the input, got {kernel} for length {len}")]
    InvalidKernel { kernel: usize, len: usize },

    #[error("model input length {got} does not match the expected history length {expected}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("training diverged after {epochs_completed} epochs despite a learning-rate cut")]
    TrainingDiverged { epochs_completed: usize },

    #[error("numerical failure: {context}")]
    NumericalFailure { context: String },

    #[error("hyperparameter search space is empty")]
    EmptySearchSpace,

    #[error("hyperparameter `{name}` is not understood by model family `{family}`")]
    UnknownHyperparameter { name: String, family: String },

    #[error("every searched configuration failed to train")]
    AllConfigsFailed,

    #[error("checkpoint is malformed: {reason}")]
    MalformedCheckpoint { reason: String },

    #[error("configuration error: {reason}")]
    Config { reason: String },

    #[error("data error in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error("all configured models failed on session `{session}`")]
    AllModelsFailed { session: String },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code used by the command-line interface.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::InvalidSplitFractions { .. }
            | Error::UnknownHyperparameter { .. }
            | Error::EmptySearchSpace
            | Error::InvalidGeneratorSpec { .. } => 2,
            Error::Data { .. } | Error::Io { .. } => 3,
            _ => 1,
        }
    }
}
