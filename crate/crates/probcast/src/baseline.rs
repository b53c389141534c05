//! Naive (repeat last value) and Average baselines with analytic Gaussian
//! prediction intervals.
//!
//! The Naive model treats the series as a random walk: the point forecast
//! repeats the last observation and the variance grows linearly with the
//! step, so interval half-widths follow the sqrt(h) law. The Average model
//! forecasts the fitted mean with a constant-width interval that accounts
//! for the 1/T estimation variance of the mean.

use crate::error::{Error, Result};
use crate::forecast::ParametricForecast;

/// Random-walk baseline; carries the first-difference residual variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NaiveModel {
    sigma2: f64,
}

impl NaiveModel {
    /// Fits on a history of length T ≥ 2:
    /// sigma2 = 1/(T−1) · Σ (y_i − y_{i−1})².
    pub fn fit(history: &[f64]) -> Result<Self> {
        if history.len() < 2 {
            return Err(Error::HistoryTooShort {
                needed: 2,
                got: history.len(),
            });
        }
        let ss: f64 = history.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
        Ok(NaiveModel {
            sigma2: ss / (history.len() - 1) as f64,
        })
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Gaussian forecast anchored at `last_value`:
    /// location constant, scale[h] = sqrt(h·sigma2) for h = 1..=horizon.
    pub fn forecast(&self, last_value: f64, horizon: usize) -> Result<ParametricForecast> {
        if horizon == 0 {
            return Err(Error::EmptyTask);
        }
        let location = vec![last_value; horizon];
        let scale = (1..=horizon)
            .map(|h| (h as f64 * self.sigma2).sqrt())
            .collect();
        ParametricForecast::gaussian(location, scale)
    }

    /// Fit-and-forecast on one window: anchors at the final history value.
    pub fn fit_forecast(history: &[f64], horizon: usize) -> Result<ParametricForecast> {
        let model = Self::fit(history)?;
        model.forecast(history[history.len() - 1], horizon)
    }
}

/// Mean baseline; carries the fitted mean, residual variance, and the
/// count used for the 1/T variance inflation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AverageModel {
    c_hat: f64,
    sigma2: f64,
    n_fit: usize,
}

impl AverageModel {
    /// Fits on a history of length T ≥ 2: c_hat is the arithmetic mean and
    /// sigma2 the unbiased sample variance (divisor T−1).
    pub fn fit(history: &[f64]) -> Result<Self> {
        if history.len() < 2 {
            return Err(Error::HistoryTooShort {
                needed: 2,
                got: history.len(),
            });
        }
        let n = history.len() as f64;
        let c_hat = history.iter().sum::<f64>() / n;
        let ss: f64 = history.iter().map(|y| (y - c_hat).powi(2)).sum();
        Ok(AverageModel {
            c_hat,
            sigma2: ss / (n - 1.0),
            n_fit: history.len(),
        })
    }

    pub fn c_hat(&self) -> f64 {
        self.c_hat
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n_fit(&self) -> usize {
        self.n_fit
    }

    /// Gaussian forecast at the fitted mean with constant scale
    /// sqrt(sigma2·(1 + 1/n_fit)): the prediction variance is the noise
    /// variance plus the variance of the estimated mean.
    pub fn forecast(&self, horizon: usize) -> Result<ParametricForecast> {
        if horizon == 0 {
            return Err(Error::EmptyTask);
        }
        let scale = (self.sigma2 * (1.0 + 1.0 / self.n_fit as f64)).sqrt();
        ParametricForecast::gaussian(vec![self.c_hat; horizon], vec![scale; horizon])
    }

    /// Fit-and-forecast on one window.
    pub fn fit_forecast(history: &[f64], horizon: usize) -> Result<ParametricForecast> {
        Self::fit(history)?.forecast(horizon)
    }
}
