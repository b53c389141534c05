//! Probabilistic univariate time-series forecasting with a reproducible
//! benchmark harness.
//!
//! The crate provides classical baselines (Naive, Average), linear models
//! with order selection (AR, ARMA), an autoregressive hidden Markov model,
//! Theta-method variants, and two direct neural forecasters, all emitting
//! probabilistic forecasts over a fixed horizon. A metrics module scores
//! them on a shared quantile grid, a synthetic-data module generates
//! processes with known closed-form answers, and a harness runs the whole
//! benchmark from a declarative configuration into JSON and CSV reports.
//!
//! Start with the `examples/` directory: each file exercises one capability
//! end to end.

pub mod arhmm;
pub mod arma;
pub mod baseline;
pub mod error;
pub mod forecast;
pub mod harness;
pub mod metrics;
pub mod neural;
mod optim;
pub mod rng;
pub mod series;
pub mod synth;
pub mod theta;

pub use error::{Error, Result};
pub use forecast::{
    DistributionFamily, EmpiricalForecast, Forecast, ParametricForecast, QuantileForecast,
};
pub use series::{
    chronological_split, default_quantile_levels, make_eval_windows, make_training_windows,
    ForecastTask, SplitIndices, TimeSeries, WindowSample, DEFAULT_SAMPLING_RATE,
    DEFAULT_SPLIT_FRACTIONS,
};
