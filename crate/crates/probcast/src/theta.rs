//! Theta-method forecasting.
//!
//! A theta line rescales the series' curvature around its least-squares
//! linear trend: X_θ(t) = θ·y_t + (1−θ)·(a + bt). The series decomposes
//! exactly as y = (1−1/θ)·(a + bt) + (1/θ)·X_θ, so the forecast combines a
//! trend extrapolation (weight 1 − 1/θ) with a simple-exponential-smoothing
//! extrapolation of the theta line (weight 1/θ). The standard variant fixes
//! θ = 2 (equal weights); the optimized variant searches θ ∈ [1, 3]. Both
//! tune the smoothing constant by minimizing the in-sample one-step squared
//! error of the combined predictor.

use crate::error::{Error, Result};
use crate::forecast::{Forecast, ParametricForecast};
use crate::metrics::{mwql, EvalBatch};
use crate::optim::golden_section;
use crate::series::{ForecastTask, WindowSample};

/// A theta-line decomposition of a series.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaDecomposition {
    pub trend_intercept: f64,
    pub trend_slope: f64,
    pub theta_line: Vec<f64>,
    pub theta: f64,
}

/// Builds the theta line X_θ(t) = θ·y_t + (1−θ)·(a + bt), with (a, b) the
/// least-squares regression of the series on its time index 0..n.
pub fn theta_line(series: &[f64], theta: f64) -> Result<ThetaDecomposition> {
    let n = series.len();
    if n < 2 {
        return Err(Error::HistoryTooShort { needed: 2, got: n });
    }
    let (a, b) = linear_trend(series);
    let line = series
        .iter()
        .enumerate()
        .map(|(t, &y)| theta * y + (1.0 - theta) * (a + b * t as f64))
        .collect();
    Ok(ThetaDecomposition {
        trend_intercept: a,
        trend_slope: b,
        theta_line: line,
        theta,
    })
}

fn linear_trend(series: &[f64]) -> (f64, f64) {
    let n = series.len() as f64;
    let t_mean = (n - 1.0) / 2.0;
    let y_mean = series.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (t, &y) in series.iter().enumerate() {
        let dt = t as f64 - t_mean;
        num += dt * (y - y_mean);
        den += dt * dt;
    }
    let slope = if den > 0.0 { num / den } else { 0.0 };
    (y_mean - slope * t_mean, slope)
}

/// Running state of simple exponential smoothing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SesState {
    pub alpha: f64,
    pub level: f64,
}

impl SesState {
    /// Starts the recursion at the first observation.
    pub fn new(alpha: f64, first_value: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::Config {
                reason: format!("smoothing constant must lie in (0, 1], got {alpha}"),
            });
        }
        Ok(SesState {
            alpha,
            level: first_value,
        })
    }

    pub fn update(&mut self, x: f64) {
        self.level = self.alpha * x + (1.0 - self.alpha) * self.level;
    }
}

/// Flat forecast at the final smoothed level of `line`:
/// l_t = α·x_t + (1−α)·l_{t−1} with l_0 = x_0.
pub fn ses_forecast(line: &[f64], alpha: f64, horizon: usize) -> Result<Vec<f64>> {
    if line.is_empty() {
        return Err(Error::HistoryTooShort { needed: 1, got: 0 });
    }
    let mut state = SesState::new(alpha, line[0])?;
    for &x in &line[1..] {
        state.update(x);
    }
    Ok(vec![state.level; horizon])
}

/// Which combination rule the forecaster uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThetaVariant {
    /// θ fixed at 2: equal weights on trend and smoothed theta line.
    Standard,
    /// θ searched over [1, 3] with decomposition weights (1−1/θ, 1/θ).
    Optimized,
}

/// A fitted theta forecaster: decomposition parameters, tuned smoothing
/// constant, final level, and the one-step error scale.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaForecaster {
    pub variant: ThetaVariant,
    pub theta: f64,
    pub alpha: f64,
    pub trend_intercept: f64,
    pub trend_slope: f64,
    /// Final smoothed level of the theta line.
    pub level: f64,
    /// Root mean squared in-sample one-step error of the combined rule.
    pub sigma1: f64,
    fit_length: usize,
}

const ALPHA_LO: f64 = 1e-4;
const ALPHA_TOL: f64 = 1e-4;
const THETA_TOL: f64 = 1e-3;

impl ThetaForecaster {
    /// Fits on a series of length ≥ 3. The smoothing constant minimizes the
    /// in-sample one-step squared error of the combined predictor; the
    /// optimized variant nests that search inside a search over θ.
    pub fn fit(series: &[f64], variant: ThetaVariant) -> Result<Self> {
        if series.len() < 3 {
            return Err(Error::HistoryTooShort {
                needed: 3,
                got: series.len(),
            });
        }
        let theta = match variant {
            ThetaVariant::Standard => 2.0,
            ThetaVariant::Optimized => {
                let (theta, _) = golden_section(
                    |theta| {
                        let (_, sse) = best_alpha(series, theta);
                        sse
                    },
                    1.0,
                    3.0,
                    THETA_TOL,
                );
                theta
            }
        };
        let mut fitted = Self::fit_at_theta(series, theta)?;
        fitted.variant = variant;
        Ok(fitted)
    }

    /// Fit with θ held fixed; used by both variants once θ is decided.
    pub(crate) fn fit_at_theta(series: &[f64], theta: f64) -> Result<Self> {
        let (alpha, sse) = best_alpha(series, theta);
        let decomp = theta_line(series, theta)?;
        let mut state = SesState::new(alpha, decomp.theta_line[0])?;
        for &x in &decomp.theta_line[1..] {
            state.update(x);
        }
        let count = (series.len() - 1) as f64;
        Ok(ThetaForecaster {
            variant: ThetaVariant::Optimized,
            theta,
            alpha,
            trend_intercept: decomp.trend_intercept,
            trend_slope: decomp.trend_slope,
            level: state.level,
            sigma1: (sse / count).sqrt(),
            fit_length: series.len(),
        })
    }

    /// Gaussian forecast: location combines the trend extrapolation and the
    /// flat smoothed level with weights (1 − 1/θ, 1/θ); scale grows as
    /// σ̂₁·sqrt(1 + α²(h−1)).
    pub fn forecast(&self, horizon: usize) -> Result<ParametricForecast> {
        if horizon == 0 {
            return Err(Error::EmptyTask);
        }
        let w_trend = 1.0 - 1.0 / self.theta;
        let w_ses = 1.0 / self.theta;
        let t_last = (self.fit_length - 1) as f64;
        let location = (1..=horizon)
            .map(|h| {
                let trend = self.trend_intercept + self.trend_slope * (t_last + h as f64);
                w_trend * trend + w_ses * self.level
            })
            .collect();
        let scale = (1..=horizon)
            .map(|h| self.sigma1 * (1.0 + self.alpha * self.alpha * (h as f64 - 1.0)).sqrt())
            .collect();
        ParametricForecast::gaussian(location, scale)
    }
}

/// One-step squared error of the combined predictor at fixed (θ, α): at
/// each t ≥ 1 the trend is evaluated at t and the smoothed level has seen
/// the theta line through t−1.
fn one_step_sse(series: &[f64], theta: f64, alpha: f64) -> f64 {
    let decomp = theta_line(series, theta).expect("caller validated length");
    let w_trend = 1.0 - 1.0 / theta;
    let w_ses = 1.0 / theta;
    let a = decomp.trend_intercept;
    let b = decomp.trend_slope;
    let mut state = SesState {
        alpha,
        level: decomp.theta_line[0],
    };
    let mut sse = 0.0;
    for (t, &y) in series.iter().enumerate().skip(1) {
        let pred = w_trend * (a + b * t as f64) + w_ses * state.level;
        sse += (y - pred).powi(2);
        state.update(decomp.theta_line[t]);
    }
    sse
}

fn best_alpha(series: &[f64], theta: f64) -> (f64, f64) {
    golden_section(
        |alpha| one_step_sse(series, theta, alpha),
        ALPHA_LO,
        1.0,
        ALPHA_TOL,
    )
}

/// Convenience: fit and forecast in one call.
pub fn theta_forecast(
    series: &[f64],
    horizon: usize,
    variant: ThetaVariant,
) -> Result<ParametricForecast> {
    ThetaForecaster::fit(series, variant)?.forecast(horizon)
}

/// Picks the variant with the lower validation MWQL, refitting on each
/// window's history. Ties go to the standard variant.
pub fn select_theta_variant(
    val_windows: &[WindowSample],
    task: &ForecastTask,
) -> Result<ThetaVariant> {
    if val_windows.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let mut scores = Vec::with_capacity(2);
    for variant in [ThetaVariant::Standard, ThetaVariant::Optimized] {
        let mut batch = EvalBatch::new(task.quantile_levels().to_vec())?;
        for window in val_windows {
            let f = theta_forecast(&window.history, task.horizon(), variant)?;
            batch.push(window.target.clone(), &Forecast::from(f), None)?;
        }
        scores.push(mwql(&batch)?);
    }
    Ok(if scores[1] < scores[0] {
        ThetaVariant::Optimized
    } else {
        ThetaVariant::Standard
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use crate::series::{make_eval_windows, TimeSeries};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn theta_line_identity_and_constant_cases() {
        let y = vec![1.0, 3.0, 2.0, 5.0];
        let d = theta_line(&y, 1.0).unwrap();
        for (a, b) in d.theta_line.iter().zip(&y) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let c = vec![4.0; 6];
        for theta in [0.0, 1.0, 2.0, 3.0] {
            let d = theta_line(&c, theta).unwrap();
            for v in &d.theta_line {
                assert_abs_diff_eq!(*v, 4.0, epsilon = 1e-12);
            }
        }
        assert!(theta_line(&[1.0], 2.0).is_err());
    }

    #[test]
    fn theta_two_doubles_second_differences() {
        let y = vec![0.0, 1.0, -1.0, 4.0, 2.0, 7.0];
        let d = theta_line(&y, 2.0).unwrap();
        let second = |v: &[f64], t: usize| v[t + 1] - 2.0 * v[t] + v[t - 1];
        for t in 1..y.len() - 1 {
            assert_abs_diff_eq!(
                second(&d.theta_line, t),
                2.0 * second(&y, t),
                epsilon = 1e-10
            );
        }
        // The zero-theta line is the trend: zero second difference.
        let d0 = theta_line(&y, 0.0).unwrap();
        for t in 1..y.len() - 1 {
            assert_abs_diff_eq!(second(&d0.theta_line, t), 0.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn ses_forecast_cases() {
        assert_eq!(
            ses_forecast(&[3.0, 1.0, 7.0], 1.0, 3).unwrap(),
            vec![7.0, 7.0, 7.0]
        );
        assert_eq!(ses_forecast(&[2.0; 5], 0.3, 2).unwrap(), vec![2.0, 2.0]);
        // l_0 = 0, l_1 = 0.5·1 + 0.5·0 = 0.5.
        assert_eq!(ses_forecast(&[0.0, 1.0], 0.5, 2).unwrap(), vec![0.5, 0.5]);
        assert!(ses_forecast(&[], 0.5, 1).is_err());
        assert!(ses_forecast(&[1.0], 0.0, 1).is_err());
        assert!(ses_forecast(&[1.0], 1.5, 1).is_err());
    }

    #[test]
    fn constant_series_forecasts_the_constant_with_zero_scale() {
        for variant in [ThetaVariant::Standard, ThetaVariant::Optimized] {
            let f = theta_forecast(&[5.0; 20], 6, variant).unwrap();
            for h in 0..6 {
                assert_abs_diff_eq!(f.location()[h], 5.0, epsilon = 1e-9);
                assert_abs_diff_eq!(f.scale()[h], 0.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn linear_series_standard_variant_has_half_drift() {
        let (a, b) = (1.5, 0.4);
        let y: Vec<f64> = (0..60).map(|t| a + b * t as f64).collect();
        let f = theta_forecast(&y, 8, ThetaVariant::Standard).unwrap();
        // Successive forecast increments are exactly b/2 regardless of α.
        for w in f.location().windows(2) {
            assert_abs_diff_eq!(w[1] - w[0], b / 2.0, epsilon = 1e-9);
        }
        // The one-step level is near the trend continuation minus the
        // half-step lag of the smoothed component.
        let expected_first = a + b * 60.0 - b / 2.0;
        assert!((f.location()[0] - expected_first).abs() < 0.05 * b);
    }

    #[test]
    fn theta_one_reduces_to_pure_ses() {
        let mut rng = rng_from_seed(3);
        let y: Vec<f64> = (0..40).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let fitted = ThetaForecaster::fit_at_theta(&y, 1.0).unwrap();
        let f = fitted.forecast(5).unwrap();
        let ses = ses_forecast(&y, fitted.alpha, 5).unwrap();
        for h in 0..5 {
            assert_abs_diff_eq!(f.location()[h], ses[h], epsilon = 1e-9);
        }
    }

    #[test]
    fn scale_growth_follows_alpha_profile() {
        let mut rng = rng_from_seed(9);
        let mut y = vec![0.0];
        for _ in 1..200 {
            let step: f64 = rng.sample(StandardNormal);
            y.push(y.last().unwrap() + step);
        }
        let fitted = ThetaForecaster::fit(&y, ThetaVariant::Standard).unwrap();
        let f = fitted.forecast(10).unwrap();
        for (h, s) in f.scale().iter().enumerate() {
            let expected =
                fitted.sigma1 * (1.0 + fitted.alpha * fitted.alpha * h as f64).sqrt();
            assert_abs_diff_eq!(*s, expected, epsilon = 1e-12);
        }
        assert!(f.scale()[9] >= f.scale()[0]);
    }

    #[test]
    fn optimized_theta_stays_in_domain() {
        let mut rng = rng_from_seed(17);
        let y: Vec<f64> = (0..150)
            .map(|t| 0.05 * t as f64 + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fitted = ThetaForecaster::fit(&y, ThetaVariant::Optimized).unwrap();
        assert!(fitted.theta >= 1.0 && fitted.theta <= 3.0);
        assert!(fitted.alpha > 0.0 && fitted.alpha <= 1.0);
    }

    #[test]
    fn variant_selection_prefers_optimized_on_strong_trend() {
        let mut rng = rng_from_seed(23);
        let values: Vec<f64> = (0..400)
            .map(|t| 0.5 * t as f64 + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let series = TimeSeries::new("trend", values).unwrap();
        let task = ForecastTask::new(60, 10).unwrap();
        let windows = make_eval_windows(&series, 240, 320, &task).unwrap();
        let variant = select_theta_variant(&windows, &task).unwrap();
        assert_eq!(variant, ThetaVariant::Optimized);
    }

    #[test]
    fn variant_selection_is_deterministic_and_handles_single_window() {
        let mut rng = rng_from_seed(29);
        let values: Vec<f64> = (0..200).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let series = TimeSeries::new("noise", values).unwrap();
        let task = ForecastTask::new(30, 12).unwrap();
        let windows = make_eval_windows(&series, 150, 162, &task).unwrap();
        assert_eq!(windows.len(), 1);
        let a = select_theta_variant(&windows, &task).unwrap();
        let b = select_theta_variant(&windows, &task).unwrap();
        assert_eq!(a, b);
        assert!(select_theta_variant(&[], &task).is_err());
    }

    #[test]
    fn tie_goes_to_standard() {
        // A constant series scores identically (zero) for both variants.
        let values = vec![2.0; 120];
        let series = TimeSeries::new("flat", values).unwrap();
        let task = ForecastTask::new(20, 5).unwrap();
        let windows = make_eval_windows(&series, 80, 100, &task).unwrap();
        // Both variants forecast exactly 2.0, so MWQL ties at zero.
        assert_eq!(
            select_theta_variant(&windows, &task).unwrap(),
            ThetaVariant::Standard
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn reconstruction_identity_halves(values in proptest::collection::vec(-50.0..50.0f64, 2..40)) {
            let d0 = theta_line(&values, 0.0).unwrap();
            let d2 = theta_line(&values, 2.0).unwrap();
            for t in 0..values.len() {
                let rebuilt = 0.5 * d0.theta_line[t] + 0.5 * d2.theta_line[t];
                prop_assert!((rebuilt - values[t]).abs() < 1e-12);
            }
        }

        #[test]
        fn decomposition_weights_rebuild_series(
            values in proptest::collection::vec(-20.0..20.0f64, 3..30),
            theta in 1.0..3.0f64,
        ) {
            let d = theta_line(&values, theta).unwrap();
            let (a, b) = (d.trend_intercept, d.trend_slope);
            for t in 0..values.len() {
                let trend = a + b * t as f64;
                let rebuilt = (1.0 - 1.0 / theta) * trend + (1.0 / theta) * d.theta_line[t];
                prop_assert!((rebuilt - values[t]).abs() < 1e-10);
            }
        }
    }
}
