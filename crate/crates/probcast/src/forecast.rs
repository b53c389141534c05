//! Probabilistic forecast representations and quantile conversion.
//!
//! Models emit one of three shapes: a parametric per-step distribution, a
//! bundle of sampled trajectories, or a direct quantile grid. Everything
//! downstream (metrics, reports) consumes the common quantile-grid form via
//! [`Forecast::to_quantiles`].

use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::series::validate_levels;

/// Distribution family of a [`ParametricForecast`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistributionFamily {
    Gaussian,
    StudentT,
}

/// Per-step location/scale forecast, optionally heavy-tailed.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricForecast {
    family: DistributionFamily,
    location: Vec<f64>,
    scale: Vec<f64>,
    dof: Option<Vec<f64>>,
}

impl ParametricForecast {
    /// Gaussian forecast. Scales must be finite and non-negative; a zero
    /// scale denotes a degenerate point mass at the location.
    pub fn gaussian(location: Vec<f64>, scale: Vec<f64>) -> Result<Self> {
        Self::validate_loc_scale(&location, &scale)?;
        Ok(ParametricForecast {
            family: DistributionFamily::Gaussian,
            location,
            scale,
            dof: None,
        })
    }

    /// Student-t forecast. Degrees of freedom must exceed 2 at every step
    /// so the predictive variance exists.
    pub fn student_t(location: Vec<f64>, scale: Vec<f64>, dof: Vec<f64>) -> Result<Self> {
        Self::validate_loc_scale(&location, &scale)?;
        if dof.len() != location.len() {
            return Err(Error::QuantileShapeMismatch);
        }
        if let Some(&bad) = dof.iter().find(|&&v| !(v.is_finite() && v > 2.0)) {
            return Err(Error::InvalidDof { dof: bad });
        }
        Ok(ParametricForecast {
            family: DistributionFamily::StudentT,
            location,
            scale,
            dof: Some(dof),
        })
    }

    fn validate_loc_scale(location: &[f64], scale: &[f64]) -> Result<()> {
        if location.is_empty() || location.len() != scale.len() {
            return Err(Error::QuantileShapeMismatch);
        }
        if location.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidScale);
        }
        if scale.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidScale);
        }
        Ok(())
    }

    pub fn family(&self) -> DistributionFamily {
        self.family
    }

    pub fn horizon(&self) -> usize {
        self.location.len()
    }

    pub fn location(&self) -> &[f64] {
        &self.location
    }

    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn dof(&self) -> Option<&[f64]> {
        self.dof.as_deref()
    }

    /// Predictive standard deviation per step. For the Student-t family this
    /// is scale·sqrt(dof/(dof−2)).
    pub fn std_per_step(&self) -> Vec<f64> {
        match (&self.family, &self.dof) {
            (DistributionFamily::Gaussian, _) => self.scale.clone(),
            (DistributionFamily::StudentT, Some(dof)) => self
                .scale
                .iter()
                .zip(dof)
                .map(|(&s, &v)| s * (v / (v - 2.0)).sqrt())
                .collect(),
            (DistributionFamily::StudentT, None) => unreachable!("dof enforced at construction"),
        }
    }
}

/// Forecast represented by sampled trajectories (rows) over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalForecast {
    trajectories: Vec<Vec<f64>>,
}

impl EmpiricalForecast {
    /// Requires at least 2 trajectories of identical length with finite
    /// entries.
    pub fn new(trajectories: Vec<Vec<f64>>) -> Result<Self> {
        if trajectories.len() < 2 {
            return Err(Error::TooFewTrajectories {
                got: trajectories.len(),
            });
        }
        let horizon = trajectories[0].len();
        let ok = horizon > 0
            && trajectories
                .iter()
                .all(|t| t.len() == horizon && t.iter().all(|v| v.is_finite()));
        if !ok {
            return Err(Error::InvalidTrajectories);
        }
        Ok(EmpiricalForecast { trajectories })
    }

    pub fn num_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn horizon(&self) -> usize {
        self.trajectories[0].len()
    }

    pub fn trajectories(&self) -> &[Vec<f64>] {
        &self.trajectories
    }

    /// Cross-trajectory sample standard deviation per step (divisor N−1).
    pub fn std_per_step(&self) -> Vec<f64> {
        let n = self.trajectories.len() as f64;
        (0..self.horizon())
            .map(|t| {
                let mean: f64 = self.trajectories.iter().map(|tr| tr[t]).sum::<f64>() / n;
                let ss: f64 = self
                    .trajectories
                    .iter()
                    .map(|tr| (tr[t] - mean).powi(2))
                    .sum();
                (ss / (n - 1.0)).sqrt()
            })
            .collect()
    }
}

/// Forecast as an explicit step-by-level quantile matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileForecast {
    levels: Vec<f64>,
    /// Row per step, column per level.
    values: Vec<Vec<f64>>,
    /// True at step t iff the row is not non-decreasing across levels.
    crossing: Vec<bool>,
}

impl QuantileForecast {
    pub fn new(levels: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        validate_levels(&levels)?;
        if values.is_empty() || values.iter().any(|row| row.len() != levels.len()) {
            return Err(Error::QuantileShapeMismatch);
        }
        if values
            .iter()
            .any(|row| row.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::InvalidTrajectories);
        }
        let crossing = values
            .iter()
            .map(|row| row.windows(2).any(|w| w[0] > w[1]))
            .collect();
        Ok(QuantileForecast {
            levels,
            values,
            crossing,
        })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn horizon(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn row(&self, step: usize) -> &[f64] {
        &self.values[step]
    }

    pub fn crossing_flags(&self) -> &[bool] {
        &self.crossing
    }

    /// Fraction of steps whose quantile row is out of order.
    pub fn crossing_rate(&self) -> f64 {
        let crossed = self.crossing.iter().filter(|&&c| c).count();
        crossed as f64 / self.crossing.len() as f64
    }

    /// Index of `level` in the grid, matched within 1e-9.
    pub fn level_index(&self, level: f64) -> Option<usize> {
        self.levels.iter().position(|&q| (q - level).abs() <= 1e-9)
    }

    /// Value at a step for a level present in the grid.
    pub fn value_at(&self, step: usize, level: f64) -> Result<f64> {
        let idx = self
            .level_index(level)
            .ok_or(Error::MissingQuantileLevel { level })?;
        Ok(self.values[step][idx])
    }
}

/// Any of the three forecast shapes.
#[derive(Debug, Clone, PartialEq)]
pub enum Forecast {
    Parametric(ParametricForecast),
    Empirical(EmpiricalForecast),
    Quantile(QuantileForecast),
}

impl From<ParametricForecast> for Forecast {
    fn from(f: ParametricForecast) -> Self {
        Forecast::Parametric(f)
    }
}

impl From<EmpiricalForecast> for Forecast {
    fn from(f: EmpiricalForecast) -> Self {
        Forecast::Empirical(f)
    }
}

impl From<QuantileForecast> for Forecast {
    fn from(f: QuantileForecast) -> Self {
        Forecast::Quantile(f)
    }
}

impl Forecast {
    pub fn horizon(&self) -> usize {
        match self {
            Forecast::Parametric(f) => f.horizon(),
            Forecast::Empirical(f) => f.horizon(),
            Forecast::Quantile(f) => f.horizon(),
        }
    }

    /// Converts any representation to a quantile grid at `levels`.
    ///
    /// Parametric forecasts evaluate the family's inverse CDF; empirical
    /// forecasts take per-step linearly interpolated order statistics;
    /// quantile forecasts are returned as-is for identical level grids and
    /// otherwise re-interpolated linearly in the level coordinate with
    /// clamping beyond the grid ends.
    pub fn to_quantiles(&self, levels: &[f64]) -> Result<QuantileForecast> {
        validate_levels(levels)?;
        match self {
            Forecast::Parametric(f) => parametric_quantiles(f, levels),
            Forecast::Empirical(f) => {
                let rows = (0..f.horizon())
                    .map(|t| {
                        let mut step_values: Vec<f64> =
                            f.trajectories().iter().map(|tr| tr[t]).collect();
                        step_values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
                        levels
                            .iter()
                            .map(|&q| sorted_quantile(&step_values, q))
                            .collect()
                    })
                    .collect();
                QuantileForecast::new(levels.to_vec(), rows)
            }
            Forecast::Quantile(f) => {
                let identical = f.levels().len() == levels.len()
                    && f.levels()
                        .iter()
                        .zip(levels)
                        .all(|(&a, &b)| (a - b).abs() <= 1e-12);
                if identical {
                    return Ok(f.clone());
                }
                let rows = (0..f.horizon())
                    .map(|t| {
                        levels
                            .iter()
                            .map(|&q| interp_level(f.levels(), f.row(t), q))
                            .collect()
                    })
                    .collect();
                QuantileForecast::new(levels.to_vec(), rows)
            }
        }
    }

    /// Predictive standard deviation per step, using the most direct
    /// information the representation carries: the parametric scale, the
    /// cross-trajectory standard deviation, or, for plain quantile grids,
    /// the normal-matching inter-decile estimate
    /// (f^0.9 − f^0.1) / (2·z_{0.9}). The last form requires levels 0.1 and
    /// 0.9 to be present.
    pub fn std_per_step(&self) -> Result<Vec<f64>> {
        match self {
            Forecast::Parametric(f) => Ok(f.std_per_step()),
            Forecast::Empirical(f) => Ok(f.std_per_step()),
            Forecast::Quantile(f) => {
                let lo = f
                    .level_index(0.1)
                    .ok_or(Error::MissingQuantileLevel { level: 0.1 })?;
                let hi = f
                    .level_index(0.9)
                    .ok_or(Error::MissingQuantileLevel { level: 0.9 })?;
                let z90 = Normal::standard().inverse_cdf(0.9);
                Ok(f.values()
                    .iter()
                    .map(|row| (row[hi] - row[lo]) / (2.0 * z90))
                    .collect())
            }
        }
    }
}

fn parametric_quantiles(f: &ParametricForecast, levels: &[f64]) -> Result<QuantileForecast> {
    let rows: Vec<Vec<f64>> = match f.family() {
        DistributionFamily::Gaussian => {
            let std_normal = Normal::standard();
            let z: Vec<f64> = levels.iter().map(|&q| std_normal.inverse_cdf(q)).collect();
            f.location()
                .iter()
                .zip(f.scale())
                .map(|(&loc, &s)| z.iter().map(|&zq| loc + zq * s).collect())
                .collect()
        }
        DistributionFamily::StudentT => {
            let dof = f.dof().expect("dof enforced at construction");
            f.location()
                .iter()
                .zip(f.scale())
                .zip(dof)
                .map(|((&loc, &s), &v)| {
                    let t = StudentsT::new(0.0, 1.0, v).expect("dof > 2");
                    levels.iter().map(|&q| loc + t.inverse_cdf(q) * s).collect()
                })
                .collect()
        }
    };
    QuantileForecast::new(levels.to_vec(), rows)
}

/// Linear-interpolated order statistic of an ascending slice: with n points
/// the level q sits at rank h = (n−1)q and interpolates the neighbors.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let h = (n as f64 - 1.0) * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    let w = h - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Linear interpolation of a quantile row onto a new level, clamped at the
/// grid ends.
fn interp_level(levels: &[f64], row: &[f64], q: f64) -> f64 {
    if q <= levels[0] {
        return row[0];
    }
    if q >= levels[levels.len() - 1] {
        return row[row.len() - 1];
    }
    let idx = levels.partition_point(|&l| l < q);
    let (l0, l1) = (levels[idx - 1], levels[idx]);
    if (l1 - l0).abs() < f64::EPSILON {
        return row[idx];
    }
    let w = (q - l0) / (l1 - l0);
    row[idx - 1] * (1.0 - w) + row[idx] * w
}
