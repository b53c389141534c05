//! Evaluation metrics over batches of probabilistic forecasts.
//!
//! All metrics consume an [`EvalBatch`]: aligned targets and forecasts on a
//! shared quantile-level grid. Normalized metrics pool numerator and
//! denominator sums before dividing, so batch reductions are
//! order-independent. Zero denominators surface as undefined-metric errors
//! rather than infinities.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::forecast::{Forecast, QuantileForecast};
use crate::series::validate_levels;

/// One scored sample: a target block, its forecast on the batch's level
/// grid, and optional standard-deviation information for the uncertainty
/// ratio.
#[derive(Debug, Clone)]
struct BatchSample {
    target: Vec<f64>,
    quantiles: QuantileForecast,
    /// Predictive std per step from the forecast's native representation.
    predicted_std: Option<Vec<f64>>,
    /// Std of the originating series' training span.
    training_std: Option<f64>,
}

/// Aligned targets and forecasts sharing one quantile-level grid.
#[derive(Debug, Clone, Default)]
pub struct EvalBatch {
    levels: Vec<f64>,
    samples: Vec<BatchSample>,
}

impl EvalBatch {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        validate_levels(&levels)?;
        Ok(EvalBatch {
            levels,
            samples: Vec::new(),
        })
    }

    /// Adds a sample, converting the forecast to the batch's level grid.
    /// The predictive std is taken from the forecast's native shape when it
    /// defines one. `training_std` feeds the pooled uncertainty ratio.
    pub fn push(
        &mut self,
        target: Vec<f64>,
        forecast: &Forecast,
        training_std: Option<f64>,
    ) -> Result<()> {
        if target.len() != forecast.horizon() {
            return Err(Error::ShapeMismatch {
                expected: forecast.horizon(),
                got: target.len(),
            });
        }
        if !self.samples.is_empty() && target.len() != self.horizon() {
            return Err(Error::ShapeMismatch {
                expected: self.horizon(),
                got: target.len(),
            });
        }
        let quantiles = forecast.to_quantiles(&self.levels)?;
        let predicted_std = forecast.std_per_step().ok();
        self.samples.push(BatchSample {
            target,
            quantiles,
            predicted_std,
            training_std,
        });
        Ok(())
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.samples.first().map_or(0, |s| s.target.len())
    }

    fn require_nonempty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyBatch)
        } else {
            Ok(())
        }
    }

    fn level_index(&self, level: f64) -> Result<usize> {
        self.levels
            .iter()
            .position(|&q| (q - level).abs() <= 1e-9)
            .ok_or(Error::MissingQuantileLevel { level })
    }

    /// Fraction of (sample, step) cells whose quantile row is out of order.
    pub fn crossing_rate(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let mut crossed = 0usize;
        let mut total = 0usize;
        for s in &self.samples {
            for &c in s.quantiles.crossing_flags() {
                crossed += usize::from(c);
                total += 1;
            }
        }
        crossed as f64 / total as f64
    }
}

/// Two-branch quantile score: 2(1−q)(f−y) when the target undershoots the
/// predicted quantile, 2q(y−f) otherwise. Non-negative, zero iff y = f.
pub fn quantile_score(y: f64, f: f64, q: f64) -> f64 {
    if y < f {
        2.0 * (1.0 - q) * (f - y)
    } else {
        2.0 * q * (y - f)
    }
}

/// Aggregation mode for the normalized metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MetricMode {
    Aggregate,
    PerStep,
}

fn pooled_ratio(num: f64, den: f64, metric: &'static str) -> Result<f64> {
    if den == 0.0 {
        Err(Error::UndefinedMetric {
            metric,
            reason: "normalization denominator is zero".into(),
        })
    } else {
        Ok(num / den)
    }
}

/// Mean weighted quantile loss pooled over all samples and steps:
/// the per-cell mean quantile score over levels, summed, divided by the
/// summed absolute target.
pub fn mwql(batch: &EvalBatch) -> Result<f64> {
    batch.require_nonempty()?;
    let q_count = batch.levels.len() as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in &batch.samples {
        for (t, &y) in s.target.iter().enumerate() {
            let row = s.quantiles.row(t);
            let cell: f64 = row
                .iter()
                .zip(&batch.levels)
                .map(|(&f, &q)| quantile_score(y, f, q))
                .sum();
            num += cell / q_count;
            den += y.abs();
        }
    }
    pooled_ratio(num, den, "mwql")
}

/// Per-step weighted quantile loss: pooled over samples separately at each
/// forecast step. Steps whose denominator vanishes come back as None.
pub fn mwql_per_step(batch: &EvalBatch) -> Result<Vec<Option<f64>>> {
    batch.require_nonempty()?;
    let l = batch.horizon();
    let q_count = batch.levels.len() as f64;
    let mut out = Vec::with_capacity(l);
    for t in 0..l {
        let mut num = 0.0;
        let mut den = 0.0;
        for s in &batch.samples {
            let y = s.target[t];
            let cell: f64 = s
                .quantiles
                .row(t)
                .iter()
                .zip(&batch.levels)
                .map(|(&f, &q)| quantile_score(y, f, q))
                .sum();
            num += cell / q_count;
            den += y.abs();
        }
        out.push(if den == 0.0 { None } else { Some(num / den) });
    }
    Ok(out)
}

/// Winkler interval score at miscoverage `alpha`: interval width plus
/// 2/alpha times the distance by which the target escapes the interval.
pub fn winkler(y: f64, lower: f64, upper: f64, alpha: f64) -> Result<f64> {
    if lower > upper {
        return Err(Error::InvertedInterval { lower, upper });
    }
    let mut score = upper - lower;
    if y < lower {
        score += (2.0 / alpha) * (lower - y);
    } else if y > upper {
        score += (2.0 / alpha) * (y - upper);
    }
    Ok(score)
}

/// Mean scaled interval score: per-sample Winkler sums over steps divided
/// by that sample's absolute-target sum, then averaged over samples.
/// Samples with a zero denominator are excluded; the count is returned.
pub fn msis(batch: &EvalBatch, alpha: f64) -> Result<(f64, usize)> {
    batch.require_nonempty()?;
    let lo_idx = batch.level_index(alpha / 2.0)?;
    let hi_idx = batch.level_index(1.0 - alpha / 2.0)?;
    let mut ratios = Vec::with_capacity(batch.len());
    let mut excluded = 0usize;
    for s in &batch.samples {
        let mut num = 0.0;
        let mut den = 0.0;
        for (t, &y) in s.target.iter().enumerate() {
            let row = s.quantiles.row(t);
            let (lower, upper) = (row[lo_idx], row[hi_idx]);
            // Crossed rows can invert the interval; score the envelope.
            let (lower, upper) = if lower <= upper {
                (lower, upper)
            } else {
                (upper, lower)
            };
            num += winkler(y, lower, upper, alpha)?;
            den += y.abs();
        }
        if den == 0.0 {
            excluded += 1;
        } else {
            ratios.push(num / den);
        }
    }
    if ratios.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "msis",
            reason: "every sample had a zero denominator".into(),
        });
    }
    Ok((ratios.iter().sum::<f64>() / ratios.len() as f64, excluded))
}

/// Normalized absolute error with the median as the point forecast:
/// pooled |y − f^0.5| divided by pooled |y|.
pub fn mae(batch: &EvalBatch) -> Result<f64> {
    batch.require_nonempty()?;
    let med = batch.level_index(0.5)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in &batch.samples {
        for (t, &y) in s.target.iter().enumerate() {
            num += (y - s.quantiles.row(t)[med]).abs();
            den += y.abs();
        }
    }
    pooled_ratio(num, den, "mae")
}

/// Normalized squared error with the median as the point forecast:
/// pooled (y − f^0.5)² divided by pooled y².
pub fn mse(batch: &EvalBatch) -> Result<f64> {
    batch.require_nonempty()?;
    let med = batch.level_index(0.5)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for s in &batch.samples {
        for (t, &y) in s.target.iter().enumerate() {
            num += (y - s.quantiles.row(t)[med]).powi(2);
            den += y * y;
        }
    }
    pooled_ratio(num, den, "mse")
}

/// Per-step variants of the normalized absolute and squared errors.
pub fn mae_mse_per_step(batch: &EvalBatch) -> Result<(Vec<Option<f64>>, Vec<Option<f64>>)> {
    batch.require_nonempty()?;
    let med = batch.level_index(0.5)?;
    let l = batch.horizon();
    let mut maes = Vec::with_capacity(l);
    let mut mses = Vec::with_capacity(l);
    for t in 0..l {
        let (mut an, mut ad, mut sn, mut sd) = (0.0, 0.0, 0.0, 0.0);
        for s in &batch.samples {
            let y = s.target[t];
            let f = s.quantiles.row(t)[med];
            an += (y - f).abs();
            ad += y.abs();
            sn += (y - f).powi(2);
            sd += y * y;
        }
        maes.push(if ad == 0.0 { None } else { Some(an / ad) });
        mses.push(if sd == 0.0 { None } else { Some(sn / sd) });
    }
    Ok((maes, mses))
}

/// Median across samples of the per-sample Pearson correlation between the
/// target block and the median forecast over steps. Samples where either
/// sequence is constant have undefined correlation and are excluded; the
/// count of exclusions is returned.
pub fn median_pearson(batch: &EvalBatch) -> Result<(f64, usize)> {
    batch.require_nonempty()?;
    if batch.horizon() < 2 {
        return Err(Error::UndefinedMetric {
            metric: "median_corr",
            reason: "correlation needs at least 2 forecast steps".into(),
        });
    }
    let med = batch.level_index(0.5)?;
    let mut rs = Vec::with_capacity(batch.len());
    let mut excluded = 0usize;
    for s in &batch.samples {
        let forecast: Vec<f64> = (0..s.target.len())
            .map(|t| s.quantiles.row(t)[med])
            .collect();
        match pearson(&s.target, &forecast) {
            Some(r) => rs.push(r),
            None => excluded += 1,
        }
    }
    if rs.is_empty() {
        return Err(Error::UndefinedMetric {
            metric: "median_corr",
            reason: "every sample had a constant target or forecast".into(),
        });
    }
    Ok((median(&mut rs), excluded))
}

fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (&a, &b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Median of a slice; even counts average the two middle order statistics.
pub(crate) fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Per-step mean over samples of predicted std divided by `training_std`.
/// Predicted stds come from each forecast's native representation
/// (parametric scale, trajectory spread, or the inter-decile estimate).
pub fn uncertainty_ratio(batch: &EvalBatch, training_std: f64) -> Result<Vec<f64>> {
    batch.require_nonempty()?;
    if !(training_std.is_finite() && training_std > 0.0) {
        return Err(Error::UndefinedMetric {
            metric: "uncertainty_ratio",
            reason: format!("training std must be positive, got {training_std}"),
        });
    }
    per_step_std_ratio(batch, |_| Some(training_std))
}

/// Pooled variant: each sample is normalized by its own series' training
/// std, recorded at push time. Samples lacking one are an error.
pub fn uncertainty_ratio_pooled(batch: &EvalBatch) -> Result<Vec<f64>> {
    batch.require_nonempty()?;
    per_step_std_ratio(batch, |s| s.training_std)
}

fn per_step_std_ratio(
    batch: &EvalBatch,
    train_std: impl Fn(&BatchSample) -> Option<f64>,
) -> Result<Vec<f64>> {
    let l = batch.horizon();
    let mut sums = vec![0.0; l];
    for s in &batch.samples {
        let denom = train_std(s).ok_or_else(|| Error::UndefinedMetric {
            metric: "uncertainty_ratio",
            reason: "a sample is missing its training std".into(),
        })?;
        if !(denom.is_finite() && denom > 0.0) {
            return Err(Error::UndefinedMetric {
                metric: "uncertainty_ratio",
                reason: format!("training std must be positive, got {denom}"),
            });
        }
        let stds = s
            .predicted_std
            .clone()
            .ok_or(Error::MissingQuantileLevel { level: 0.1 })?;
        for (t, &sd) in stds.iter().enumerate() {
            sums[t] += sd / denom;
        }
    }
    let n = batch.len() as f64;
    Ok(sums.into_iter().map(|v| v / n).collect())
}

/// Ratio of a model's metric to the Naive baseline's; must be positive.
pub fn relative_to_naive(model_metric: f64, naive_metric: f64) -> Result<f64> {
    if !(naive_metric.is_finite() && naive_metric > 0.0) {
        return Err(Error::NonPositiveBaseline {
            value: naive_metric,
        });
    }
    Ok(model_metric / naive_metric)
}

/// Outcome of the one-sided paired t-test for "a is smaller than b".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    pub t: f64,
    pub p: f64,
    /// True when the paired differences had zero sample variance; p is then
    /// 0, 1, or 0.5 by the sign of the mean difference.
    pub degenerate: bool,
}

/// One-sided paired t-test of mean(a − b) < 0: t = mean(d)/(sd(d)/√n) with
/// the lower-tail Student-t p-value at n−1 degrees of freedom.
pub fn paired_t_one_sided(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidPairedSamples {
            a: a.len(),
            b: b.len(),
        });
    }
    let n = a.len() as f64;
    let d: Vec<f64> = a.iter().zip(b).map(|(&x, &y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|&x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        let p = if mean < 0.0 {
            0.0
        } else if mean > 0.0 {
            1.0
        } else {
            0.5
        };
        return Ok(TTestResult {
            t: if mean == 0.0 {
                0.0
            } else {
                f64::INFINITY.copysign(mean)
            },
            p,
            degenerate: true,
        });
    }
    let t = mean / (sd / n.sqrt());
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2");
    Ok(TTestResult {
        t,
        p: dist.cdf(t),
        degenerate: false,
    })
}

/// Full metric set for one evaluation cell. Undefined metrics are None with
/// their exclusion counts preserved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub num_samples: usize,
    pub horizon: usize,
    pub mwql: Option<f64>,
    pub mwql_per_step: Vec<Option<f64>>,
    pub msis: Option<f64>,
    pub msis_excluded: usize,
    pub mae: Option<f64>,
    pub mse: Option<f64>,
    pub median_corr: Option<f64>,
    pub corr_excluded: usize,
    pub uncertainty_ratio_per_step: Option<Vec<f64>>,
    pub crossing_rate: f64,
}

/// The interval metrics use the 80% central interval.
pub const INTERVAL_ALPHA: f64 = 0.2;

/// Computes every metric the report carries, degrading gracefully to None
/// where a metric's preconditions fail on this batch.
pub fn compute_report(batch: &EvalBatch) -> Result<MetricReport> {
    batch.require_nonempty()?;
    let (msis_value, msis_excluded) = match msis(batch, INTERVAL_ALPHA) {
        Ok((v, e)) => (Some(v), e),
        Err(_) => (None, 0),
    };
    let (corr, corr_excluded) = match median_pearson(batch) {
        Ok((v, e)) => (Some(v), e),
        Err(_) => (None, 0),
    };
    Ok(MetricReport {
        num_samples: batch.len(),
        horizon: batch.horizon(),
        mwql: mwql(batch).ok(),
        mwql_per_step: mwql_per_step(batch)?,
        msis: msis_value,
        msis_excluded,
        mae: mae(batch).ok(),
        mse: mse(batch).ok(),
        median_corr: corr,
        corr_excluded,
        uncertainty_ratio_per_step: uncertainty_ratio_pooled(batch).ok(),
        crossing_rate: batch.crossing_rate(),
    })
}

impl MetricReport {
    /// Key-value text rendering, one metric per line; vectors are
    /// comma-separated and undefined values print as "undefined".
    pub fn render_text(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map_or_else(|| "undefined".into(), |x| format!("{x:.6}"))
        }
        fn vec_opt(v: &[Option<f64>]) -> String {
            v.iter()
                .map(|x| opt(*x))
                .collect::<Vec<_>>()
                .join(",")
        }
        let mut out = String::new();
        out.push_str(&format!("num_samples={}\n", self.num_samples));
        out.push_str(&format!("horizon={}\n", self.horizon));
        out.push_str(&format!("mwql={}\n", opt(self.mwql)));
        out.push_str(&format!("mwql_per_step={}\n", vec_opt(&self.mwql_per_step)));
        out.push_str(&format!("msis={}\n", opt(self.msis)));
        out.push_str(&format!("msis_excluded={}\n", self.msis_excluded));
        out.push_str(&format!("mae={}\n", opt(self.mae)));
        out.push_str(&format!("mse={}\n", opt(self.mse)));
        out.push_str(&format!("median_corr={}\n", opt(self.median_corr)));
        out.push_str(&format!("corr_excluded={}\n", self.corr_excluded));
        let ur = self
            .uncertainty_ratio_per_step
            .as_ref()
            .map_or_else(
                || "undefined".into(),
                |v| {
                    v.iter()
                        .map(|x| format!("{x:.6}"))
                        .collect::<Vec<_>>()
                        .join(",")
                },
            );
        out.push_str(&format!("uncertainty_ratio_per_step={ur}\n"));
        out.push_str(&format!("crossing_rate={:.6}\n", self.crossing_rate));
        out
    }
}
