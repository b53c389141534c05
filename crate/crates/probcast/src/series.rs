//! Time series containers, chronological splitting, and evaluation windows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default sampling rate, in samples per second, used when none is given.
pub const DEFAULT_SAMPLING_RATE: f64 = 35.0;

/// Default train/validation/test fractions.
pub const DEFAULT_SPLIT_FRACTIONS: (f64, f64, f64) = (0.6, 0.2, 0.2);

/// A single univariate series with an identifier and a sampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    id: String,
    values: Vec<f64>,
    sampling_rate: f64,
}

impl TimeSeries {
    /// Creates a series at the default sampling rate.
    ///
    /// # Errors
    /// Rejects empty inputs and non-finite values.
    pub fn new(id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        Self::with_sampling_rate(id, values, DEFAULT_SAMPLING_RATE)
    }

    /// Creates a series with an explicit sampling rate in samples per second.
    pub fn with_sampling_rate(
        id: impl Into<String>,
        values: Vec<f64>,
        sampling_rate: f64,
    ) -> Result<Self> {
        let id = id.into();
        if values.is_empty() {
            return Err(Error::EmptySeries { id });
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue { id, index });
        }
        if !(sampling_rate.is_finite() && sampling_rate > 0.0) {
            return Err(Error::InvalidSamplingRate {
                rate: sampling_rate,
            });
        }
        Ok(TimeSeries {
            id,
            values,
            sampling_rate,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.sampling_rate
    }

    /// Index-to-seconds conversion for threshold reporting.
    pub fn index_to_seconds(&self, index: usize) -> f64 {
        index as f64 / self.sampling_rate
    }
}

/// Half-open boundaries of a chronological train/validation/test split.
///
/// Train is `[0, train_end)`, validation `[train_end, val_end)`, test
/// `[val_end, test_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train_end: usize,
    pub val_end: usize,
    pub test_end: usize,
}

impl SplitIndices {
    pub fn train_range(&self) -> std::ops::Range<usize> {
        0..self.train_end
    }

    pub fn val_range(&self) -> std::ops::Range<usize> {
        self.train_end..self.val_end
    }

    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.val_end..self.test_end
    }
}

/// Splits a series chronologically by cumulative fractions.
///
/// Boundaries are floored cumulative fractions of the length, with a small
/// nudge so that products that are exact in real arithmetic (0.6 * 51495)
/// do not lose a step to binary rounding. Every partition must be nonempty.
pub fn chronological_split(series: &TimeSeries, fractions: (f64, f64, f64)) -> Result<SplitIndices> {
    let (f1, f2, f3) = fractions;
    let sum = f1 + f2 + f3;
    let valid = f1 > 0.0 && f2 > 0.0 && f3 > 0.0 && (sum - 1.0).abs() <= 1e-9;
    if !valid {
        return Err(Error::InvalidSplitFractions { fractions });
    }
    if series.len() < 5 {
        return Err(Error::SeriesTooShort { len: series.len() });
    }
    let t = series.len() as f64;
    let bound = |frac: f64| ((frac * t) + 1e-9).floor() as usize;
    let train_end = bound(f1);
    let val_end = bound(f1 + f2);
    let test_end = series.len();
    if train_end == 0 || val_end <= train_end || test_end <= val_end {
        return Err(Error::SeriesTooShort { len: series.len() });
    }
    Ok(SplitIndices {
        train_end,
        val_end,
        test_end,
    })
}

/// Evaluation grid of quantile levels used across the crate: the deciles
/// 0.1, 0.2, ..., 0.9.
pub fn default_quantile_levels() -> Vec<f64> {
    (1..=9).map(|i| i as f64 / 10.0).collect()
}

/// A forecasting task: how much history a model may condition on, how far
/// it must predict, and which quantile levels are scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastTask {
    history_length: usize,
    horizon: usize,
    quantile_levels: Vec<f64>,
}

impl ForecastTask {
    /// Task with the default decile grid.
    pub fn new(history_length: usize, horizon: usize) -> Result<Self> {
        Self::with_levels(history_length, horizon, default_quantile_levels())
    }

    /// Task with explicit quantile levels, which must be strictly
    /// increasing and lie strictly inside (0, 1).
    pub fn with_levels(
        history_length: usize,
        horizon: usize,
        quantile_levels: Vec<f64>,
    ) -> Result<Self> {
        if history_length == 0 || horizon == 0 {
            return Err(Error::EmptyTask);
        }
        validate_levels(&quantile_levels)?;
        Ok(ForecastTask {
            history_length,
            horizon,
            quantile_levels,
        })
    }

    pub fn history_length(&self) -> usize {
        self.history_length
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn quantile_levels(&self) -> &[f64] {
        &self.quantile_levels
    }
}

pub(crate) fn validate_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(Error::InvalidQuantileLevels);
    }
    let inside = levels.iter().all(|&q| q.is_finite() && q > 0.0 && q < 1.0);
    let increasing = levels.windows(2).all(|w| w[0] < w[1]);
    if !inside || !increasing {
        return Err(Error::InvalidQuantileLevels);
    }
    Ok(())
}

/// One evaluation window: the conditioning history and the target block.
///
/// `target_start` indexes the first target value in the parent series, so
/// models that condition on everything before the target can recover the
/// full prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSample {
    pub history: Vec<f64>,
    pub target: Vec<f64>,
    pub target_start: usize,
}

/// Builds non-overlapping evaluation windows over `[span_start, span_end)`.
///
/// Targets tile the span left to right with stride equal to the horizon;
/// a final partial block that cannot hold a full horizon is dropped.
/// Histories are the `history_length` values immediately before each
/// target and may reach into earlier partitions of the series.
pub fn make_eval_windows(
    series: &TimeSeries,
    span_start: usize,
    span_end: usize,
    task: &ForecastTask,
) -> Result<Vec<WindowSample>> {
    let h = task.history_length();
    let l = task.horizon();
    if span_start < h {
        return Err(Error::HistoryBeforeSeriesStart {
            split_start: span_start,
            history_length: h,
        });
    }
    let span_end = span_end.min(series.len());
    if span_start + l > span_end {
        return Err(Error::NoWindowFits {
            start: span_start,
            end: span_end,
            horizon: l,
        });
    }
    let values = series.values();
    let mut windows = Vec::new();
    let mut target_start = span_start;
    while target_start + l <= span_end {
        windows.push(WindowSample {
            history: values[target_start - h..target_start].to_vec(),
            target: values[target_start..target_start + l].to_vec(),
            target_start,
        });
        target_start += l;
    }
    Ok(windows)
}

/// Builds stride-1 training windows whose targets end at or before `end`.
///
/// Used to assemble supervised batches for direct multi-step models. The
/// earliest window starts at index 0 of the series.
pub fn make_training_windows(values: &[f64], end: usize, task: &ForecastTask) -> Vec<WindowSample> {
    let h = task.history_length();
    let l = task.horizon();
    let end = end.min(values.len());
    if end < h + l {
        return Vec::new();
    }
    (h..=end - l)
        .map(|target_start| WindowSample {
            history: values[target_start - h..target_start].to_vec(),
            target: values[target_start..target_start + l].to_vec(),
            target_start,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series_of_len(n: usize) -> TimeSeries {
        TimeSeries::new("s", (0..n).map(|i| i as f64).collect()).unwrap()
    }

    #[test]
    fn split_of_ten_by_default_fractions() {
        let s = series_of_len(10);
        let split = chronological_split(&s, DEFAULT_SPLIT_FRACTIONS).unwrap();
        assert_eq!(
            split,
            SplitIndices {
                train_end: 6,
                val_end: 8,
                test_end: 10
            }
        );
    }

    #[test]
    fn split_of_full_recording_length() {
        // 0.6 * 51495 = 30897 exactly in real arithmetic; the floor must not
        // lose a step to binary rounding.
        let s = series_of_len(51495);
        let split = chronological_split(&s, DEFAULT_SPLIT_FRACTIONS).unwrap();
        assert_eq!(split.train_end, 30897);
        assert_eq!(split.val_end, 41196);
        assert_eq!(split.test_end, 51495);
    }

    #[test]
    fn split_rejects_bad_fractions() {
        let s = series_of_len(100);
        assert!(matches!(
            chronological_split(&s, (0.5, 0.2, 0.2)),
            Err(Error::InvalidSplitFractions { .. })
        ));
        assert!(matches!(
            chronological_split(&s, (1.0, 0.0, 0.0)),
            Err(Error::InvalidSplitFractions { .. })
        ));
    }

    #[test]
    fn split_rejects_series_with_an_empty_partition() {
        let s = series_of_len(4);
        assert!(matches!(
            chronological_split(&s, DEFAULT_SPLIT_FRACTIONS),
            Err(Error::SeriesTooShort { len: 4 })
        ));
        // Length 5 is the shortest that gives three nonempty partitions.
        let s = series_of_len(5);
        let split = chronological_split(&s, DEFAULT_SPLIT_FRACTIONS).unwrap();
        assert_eq!(split.train_end, 3);
        assert_eq!(split.val_end, 4);
    }

    #[test]
    fn series_rejects_non_finite_and_empty() {
        assert!(matches!(
            TimeSeries::new("x", vec![]),
            Err(Error::EmptySeries { .. })
        ));
        let err = TimeSeries::new("x", vec![0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue { index: 1, .. }));
        assert!(TimeSeries::with_sampling_rate("x", vec![1.0], 0.0).is_err());
    }

    #[test]
    fn eval_windows_tile_without_overlap_and_drop_partial_tail() {
        let s = series_of_len(100);
        let task = ForecastTask::new(10, 18).unwrap();
        let windows = make_eval_windows(&s, 60, 100, &task).unwrap();
        assert_eq!(windows.len(), 2);
        assert_eq!(windows[0].target_start, 60);
        assert_eq!(windows[0].history, s.values()[50..60].to_vec());
        assert_eq!(windows[0].target, s.values()[60..78].to_vec());
        assert_eq!(windows[1].target_start, 78);
        assert_eq!(windows[1].history, s.values()[68..78].to_vec());
        assert_eq!(windows[1].target, s.values()[78..96].to_vec());
    }

    #[test]
    fn eval_windows_span_eighty_to_hundred() {
        let s = series_of_len(100);
        let task = ForecastTask::new(10, 5).unwrap();
        let windows = make_eval_windows(&s, 80, 100, &task).unwrap();
        assert_eq!(windows.len(), 4);
        let starts: Vec<usize> = windows.iter().map(|w| w.target_start).collect();
        assert_eq!(starts, vec![80, 85, 90, 95]);
        for (w, hist_start) in windows.iter().zip([70usize, 75, 80, 85]) {
            assert_eq!(w.history, s.values()[hist_start..hist_start + 10].to_vec());
        }
        // With horizon 7 only two targets fit before the span runs out.
        let task = ForecastTask::new(10, 7).unwrap();
        assert_eq!(make_eval_windows(&s, 80, 100, &task).unwrap().len(), 2);
    }

    #[test]
    fn eval_windows_history_may_cross_partition_boundary() {
        let s = series_of_len(50);
        let task = ForecastTask::new(20, 5).unwrap();
        let windows = make_eval_windows(&s, 30, 50, &task).unwrap();
        // First history reaches back to index 10, before the span start.
        assert_eq!(windows[0].history[0], 10.0);
        assert_eq!(windows.len(), 4);
    }

    #[test]
    fn eval_windows_error_cases() {
        let s = series_of_len(100);
        let task = ForecastTask::new(10, 18).unwrap();
        assert!(matches!(
            make_eval_windows(&s, 5, 100, &task),
            Err(Error::HistoryBeforeSeriesStart { .. })
        ));
        assert!(matches!(
            make_eval_windows(&s, 90, 100, &task),
            Err(Error::NoWindowFits { .. })
        ));
    }

    #[test]
    fn training_windows_have_stride_one() {
        let values: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let task = ForecastTask::new(4, 3).unwrap();
        let windows = make_training_windows(&values, 12, &task);
        // target_start ranges over 4..=9.
        assert_eq!(windows.len(), 6);
        assert_eq!(windows[0].history, vec![0.0, 1.0, 2.0, 3.0]);
        assert_eq!(windows[0].target, vec![4.0, 5.0, 6.0]);
        assert_eq!(windows[5].target, vec![9.0, 10.0, 11.0]);
        assert_eq!(make_training_windows(&values, 7, &task).len(), 1);
        assert!(make_training_windows(&values, 6, &task).is_empty());
    }

    #[test]
    fn task_validates_levels() {
        assert!(ForecastTask::with_levels(1, 1, vec![0.5, 0.5]).is_err());
        assert!(ForecastTask::with_levels(1, 1, vec![0.0, 0.5]).is_err());
        assert!(ForecastTask::with_levels(1, 1, vec![]).is_err());
        assert!(ForecastTask::new(0, 1).is_err());
        let t = ForecastTask::new(10, 18).unwrap();
        assert_eq!(t.quantile_levels().len(), 9);
        assert!((t.quantile_levels()[0] - 0.1).abs() < 1e-15);
    }

    #[test]
    fn index_to_seconds_uses_sampling_rate() {
        let s = TimeSeries::with_sampling_rate("s", vec![0.0; 100], 35.0).unwrap();
        assert!((s.index_to_seconds(45) - 45.0 / 35.0).abs() < 1e-12);
    }
}
