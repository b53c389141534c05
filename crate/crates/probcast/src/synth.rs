//! Seeded synthetic-series generators with closed-form forecast oracles.
//!
//! Each spec describes one generating process; `generate` is bit-reproducible
//! given the spec (the seed picks a fixed ChaCha stream, standard normals come
//! from the ziggurat sampler pinned by the locked dependency set). Stationary
//! kinds start at their unconditional mean and discard a burn-in of ten times
//! the maximum lag. `oracle_forecast` returns the exact conditional forecast
//! under the true parameters for the kinds that admit one.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::arma::{spectral_radius_of_ar, ArmaModel};
use crate::error::{Error, Result};
use crate::forecast::ParametricForecast;
use crate::rng::rng_from_seed;
use crate::series::TimeSeries;

/// One autoregressive emission regime of a switching generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArRegime {
    pub coefficients: Vec<f64>,
    pub noise_std: f64,
    #[serde(default)]
    pub intercept: f64,
}

/// The generating process, tagged by `kind` in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Ar {
        coefficients: Vec<f64>,
        noise_std: f64,
        #[serde(default)]
        intercept: f64,
    },
    Arma {
        ar: Vec<f64>,
        ma: Vec<f64>,
        noise_std: f64,
        #[serde(default)]
        intercept: f64,
    },
    Arhmm {
        regimes: Vec<ArRegime>,
        /// Row-stochastic matrix; entry [i][j] is P(next = j | current = i).
        transition: Vec<Vec<f64>>,
    },
    RandomWalk {
        noise_std: f64,
        #[serde(default)]
        drift: f64,
    },
    LinearTrend {
        intercept: f64,
        slope: f64,
        noise_std: f64,
    },
    WhiteNoise {
        #[serde(default)]
        mean: f64,
        noise_std: f64,
    },
}

impl GeneratorKind {
    pub fn name(&self) -> &'static str {
        match self {
            GeneratorKind::Ar { .. } => "ar",
            GeneratorKind::Arma { .. } => "arma",
            GeneratorKind::Arhmm { .. } => "arhmm",
            GeneratorKind::RandomWalk { .. } => "random_walk",
            GeneratorKind::LinearTrend { .. } => "linear_trend",
            GeneratorKind::WhiteNoise { .. } => "white_noise",
        }
    }

    fn max_lag(&self) -> usize {
        match self {
            GeneratorKind::Ar { coefficients, .. } => coefficients.len(),
            GeneratorKind::Arma { ar, ma, .. } => ar.len().max(ma.len()),
            GeneratorKind::Arhmm { regimes, .. } => regimes
                .iter()
                .map(|r| r.coefficients.len())
                .max()
                .unwrap_or(0),
            _ => 0,
        }
    }
}

/// A complete recipe for one synthetic series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub length: usize,
    pub seed: u64,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, length: usize, seed: u64) -> Result<Self> {
        let spec = GeneratorSpec { kind, length, seed };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.length == 0 {
            return Err(Error::InvalidGeneratorSpec {
                reason: "length must be at least 1".into(),
            });
        }
        let finite_std = |std: f64| -> Result<()> {
            if !(std.is_finite() && std >= 0.0) {
                return Err(Error::InvalidGeneratorSpec {
                    reason: format!("noise std must be finite and nonnegative, got {std}"),
                });
            }
            Ok(())
        };
        let stationary = |coeffs: &[f64]| -> Result<()> {
            if coeffs.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidGeneratorSpec {
                    reason: "coefficients must be finite".into(),
                });
            }
            if spectral_radius_of_ar(coeffs) >= 1.0 {
                return Err(Error::NonStationary {
                    coefficients: coeffs.to_vec(),
                });
            }
            Ok(())
        };
        match &self.kind {
            GeneratorKind::Ar {
                coefficients,
                noise_std,
                intercept,
            } => {
                finite_std(*noise_std)?;
                require_finite(*intercept, "intercept")?;
                stationary(coefficients)
            }
            GeneratorKind::Arma {
                ar,
                ma,
                noise_std,
                intercept,
            } => {
                finite_std(*noise_std)?;
                require_finite(*intercept, "intercept")?;
                if ma.iter().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidGeneratorSpec {
                        reason: "coefficients must be finite".into(),
                    });
                }
                stationary(ar)
            }
            GeneratorKind::Arhmm { regimes, transition } => {
                if regimes.is_empty() {
                    return Err(Error::InvalidGeneratorSpec {
                        reason: "switching generator needs at least one regime".into(),
                    });
                }
                for regime in regimes {
                    finite_std(regime.noise_std)?;
                    require_finite(regime.intercept, "intercept")?;
                    stationary(&regime.coefficients)?;
                }
                let s = regimes.len();
                if transition.len() != s {
                    return Err(Error::InvalidGeneratorSpec {
                        reason: format!(
                            "transition matrix has {} rows for {} regimes",
                            transition.len(),
                            s
                        ),
                    });
                }
                for row in transition {
                    if row.len() != s {
                        return Err(Error::InvalidGeneratorSpec {
                            reason: "transition matrix must be square".into(),
                        });
                    }
                    if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                        return Err(Error::InvalidGeneratorSpec {
                            reason: "transition probabilities must be nonnegative".into(),
                        });
                    }
                    let sum: f64 = row.iter().sum();
                    if (sum - 1.0).abs() > 1e-9 {
                        return Err(Error::InvalidGeneratorSpec {
                            reason: format!("transition row sums to {sum}, expected 1"),
                        });
                    }
                }
                Ok(())
            }
            GeneratorKind::RandomWalk { noise_std, drift } => {
                finite_std(*noise_std)?;
                require_finite(*drift, "drift")
            }
            GeneratorKind::LinearTrend {
                intercept,
                slope,
                noise_std,
            } => {
                finite_std(*noise_std)?;
                require_finite(*intercept, "intercept")?;
                require_finite(*slope, "slope")
            }
            GeneratorKind::WhiteNoise { mean, noise_std } => {
                finite_std(*noise_std)?;
                require_finite(*mean, "mean")
            }
        }
    }
}

fn require_finite(value: f64, what: &str) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidGeneratorSpec {
            reason: format!("{what} must be finite, got {value}"),
        })
    }
}

fn draw_noise(rng: &mut ChaCha12Rng, std: f64) -> f64 {
    std * rng.sample::<f64, _>(StandardNormal)
}

/// Unconditional mean of a stationary AR process, the burn-in start value.
fn ar_mean(intercept: f64, coefficients: &[f64]) -> f64 {
    let coeff_sum: f64 = coefficients.iter().sum();
    intercept / (1.0 - coeff_sum)
}

/// Generates a series deterministically from the spec.
pub fn generate(spec: &GeneratorSpec) -> Result<TimeSeries> {
    let (series, _) = generate_with_states(spec)?;
    Ok(series)
}

/// Like `generate`, but also returns the hidden-state index at each emitted
/// step. Non-switching kinds report state 0 throughout.
pub fn generate_with_states(spec: &GeneratorSpec) -> Result<(TimeSeries, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng_from_seed(spec.seed);
    let n = spec.length;
    let burn = 10 * spec.kind.max_lag();
    let total = n + burn;
    let mut states = vec![0usize; total];
    let values: Vec<f64> = match &spec.kind {
        GeneratorKind::WhiteNoise { mean, noise_std } => {
            (0..total).map(|_| mean + draw_noise(&mut rng, *noise_std)).collect()
        }
        GeneratorKind::RandomWalk { noise_std, drift } => {
            let mut level = 0.0;
            (0..total)
                .map(|_| {
                    level += drift + draw_noise(&mut rng, *noise_std);
                    level
                })
                .collect()
        }
        GeneratorKind::LinearTrend {
            intercept,
            slope,
            noise_std,
        } => (0..total)
            .map(|t| intercept + slope * t as f64 + draw_noise(&mut rng, *noise_std))
            .collect(),
        GeneratorKind::Ar {
            coefficients,
            noise_std,
            intercept,
        } => {
            let mean = ar_mean(*intercept, coefficients);
            let mut values = vec![mean; total];
            for t in 0..total {
                let mut x = *intercept + draw_noise(&mut rng, *noise_std);
                for (i, phi) in coefficients.iter().enumerate() {
                    let prev = if t > i { values[t - 1 - i] } else { mean };
                    x += phi * prev;
                }
                values[t] = x;
            }
            values
        }
        GeneratorKind::Arma {
            ar,
            ma,
            noise_std,
            intercept,
        } => {
            let mean = ar_mean(*intercept, ar);
            let mut values = vec![mean; total];
            let mut noise = vec![0.0; total];
            for t in 0..total {
                noise[t] = draw_noise(&mut rng, *noise_std);
                let mut x = *intercept + noise[t];
                for (i, phi) in ar.iter().enumerate() {
                    let prev = if t > i { values[t - 1 - i] } else { mean };
                    x += phi * prev;
                }
                for (j, theta) in ma.iter().enumerate() {
                    if t > j {
                        x += theta * noise[t - 1 - j];
                    }
                }
                values[t] = x;
            }
            values
        }
        GeneratorKind::Arhmm { regimes, transition } => {
            let s = regimes.len();
            let mut state = (rng.random::<u64>() % s as u64) as usize;
            let grand_mean = regimes
                .iter()
                .map(|r| ar_mean(r.intercept, &r.coefficients))
                .sum::<f64>()
                / s as f64;
            let mut values = vec![grand_mean; total];
            for t in 0..total {
                states[t] = state;
                let regime = &regimes[state];
                let mut x = regime.intercept + draw_noise(&mut rng, regime.noise_std);
                for (i, phi) in regime.coefficients.iter().enumerate() {
                    let prev = if t > i { values[t - 1 - i] } else { grand_mean };
                    x += phi * prev;
                }
                values[t] = x;
                let u: f64 = rng.random::<f64>();
                let mut acc = 0.0;
                let mut next = s - 1;
                for (j, p) in transition[state].iter().enumerate() {
                    acc += p;
                    if u < acc {
                        next = j;
                        break;
                    }
                }
                state = next;
            }
            values
        }
    };
    let id = format!("{}-{}", spec.kind.name(), spec.seed);
    let series = TimeSeries::new(id, values[burn..].to_vec())?;
    Ok((series, states[burn..].to_vec()))
}

/// Exact conditional forecast under the true generating parameters.
///
/// Supported kinds: ar, arma, random_walk, white_noise. The switching and
/// trend kinds have no closed form here and return an error.
pub fn oracle_forecast(
    spec: &GeneratorSpec,
    history: &[f64],
    horizon: usize,
) -> Result<ParametricForecast> {
    spec.validate()?;
    if horizon == 0 {
        return Err(Error::EmptyTask);
    }
    match &spec.kind {
        GeneratorKind::WhiteNoise { mean, noise_std } => {
            ParametricForecast::gaussian(vec![*mean; horizon], vec![*noise_std; horizon])
        }
        GeneratorKind::RandomWalk { noise_std, drift } => {
            let last = *history.last().ok_or(Error::HistoryTooShort { needed: 1, got: 0 })?;
            let location = (1..=horizon).map(|h| last + drift * h as f64).collect();
            let scale = (1..=horizon)
                .map(|h| noise_std * (h as f64).sqrt())
                .collect();
            ParametricForecast::gaussian(location, scale)
        }
        GeneratorKind::Ar {
            coefficients,
            noise_std,
            intercept,
        } => ArmaModel::from_parts(
            *intercept,
            coefficients.clone(),
            Vec::new(),
            noise_std * noise_std,
        )?
        .forecast(history, horizon),
        GeneratorKind::Arma {
            ar,
            ma,
            noise_std,
            intercept,
        } => ArmaModel::from_parts(*intercept, ar.clone(), ma.clone(), noise_std * noise_std)?
            .forecast(history, horizon),
        other => Err(Error::UnsupportedOracle {
            kind: other.name().into(),
        }),
    }
}
