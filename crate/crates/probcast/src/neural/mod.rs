//! Trainable direct multi-step forecasters.
//!
//! Two architectures share one training stack: a decomposition-linear model
//! (trend and remainder each mapped by a dense matrix to per-step features)
//! and a residual MLP. A distribution head turns per-step features into
//! either a Student-t location/scale/dof triple or a grid of quantile
//! values. Training is seeded minibatch gradient descent with momentum,
//! gradient-norm clipping, and early stopping on validation loss; gradients
//! are computed by handwritten backpropagation.
//!
//! Inputs are standardized per window by the history mean and standard
//! deviation (floored at 1e-6); forecasts are mapped back to the data scale.

pub mod dlinear;
pub mod mlp;

pub use dlinear::{gradient_check, train_dlinear, DLinearConfig, DLinearModel};
pub use mlp::{train_mlp, MlpConfig, MlpDirectModel};

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};
use crate::forecast::{Forecast, ParametricForecast, QuantileForecast};
use crate::rng::rng_from_seed;
use crate::series::{validate_levels, WindowSample};

pub(crate) const STD_FLOOR: f64 = 1e-6;
const GRAD_CLIP: f64 = 10.0;
const MOMENTUM: f64 = 0.9;

/// Centered moving average with edge-replication padding, and the residual
/// left after subtracting it. The two parts sum back to the input exactly.
pub fn moving_average_decompose(
    history: &[f64],
    kernel_size: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = history.len();
    if kernel_size % 2 == 0 || kernel_size > n || kernel_size == 0 {
        return Err(Error::InvalidKernel {
            kernel: kernel_size,
            len: n,
        });
    }
    let half = kernel_size / 2;
    let mut trend = Vec::with_capacity(n);
    for i in 0..n {
        let mut acc = 0.0;
        for o in 0..kernel_size {
            let idx = (i + o).saturating_sub(half).min(n - 1);
            acc += history[idx];
        }
        trend.push(acc / kernel_size as f64);
    }
    let remainder = history
        .iter()
        .zip(&trend)
        .map(|(y, t)| y - t)
        .collect();
    Ok((trend, remainder))
}

/// History mean and standard deviation (population convention, floored).
pub(crate) fn window_stats(history: &[f64]) -> (f64, f64) {
    let n = history.len() as f64;
    let mean = history.iter().sum::<f64>() / n;
    let var = history.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt().max(STD_FLOOR))
}

pub(crate) fn standardize(values: &[f64], mean: f64, std: f64) -> Vec<f64> {
    values.iter().map(|v| (v - mean) / std).collect()
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Which predictive distribution the head emits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeadKind {
    /// Per-step location and softplus scale, plus one learned dof scalar
    /// kept above 2 by a softplus offset.
    StudentT,
    /// One affine map per quantile level; rows may cross, which the
    /// forecast type records rather than corrects.
    Quantile { levels: Vec<f64> },
}

impl HeadKind {
    pub(crate) fn validate(&self) -> Result<()> {
        match self {
            HeadKind::StudentT => Ok(()),
            HeadKind::Quantile { levels } => validate_levels(levels),
        }
    }

    pub(crate) fn param_count(&self, d: usize) -> usize {
        match self {
            HeadKind::StudentT => 2 * d + 3,
            HeadKind::Quantile { levels } => levels.len() * (d + 1),
        }
    }

    pub(crate) fn init(&self, d: usize, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        let a = (1.0 / d as f64).sqrt();
        for v in out.iter_mut() {
            *v = rng.random_range(-a..a);
        }
        match self {
            HeadKind::StudentT => {
                // b_mu = 0; b_sigma starts the scale near 1; dof_raw = 0.
                out[d] = 0.0;
                out[2 * d + 1] = (std::f64::consts::E - 1.0).ln();
                out[2 * d + 2] = 0.0;
            }
            HeadKind::Quantile { levels } => {
                for (k, _) in levels.iter().enumerate() {
                    out[k * (d + 1) + d] = 0.0;
                }
            }
        }
    }

    /// Loss summed over steps (and levels), with gradients accumulated into
    /// `dfeat` (length L·D) and `grad` (the head's parameter slice), both
    /// scaled by `weight`. Targets are in standardized units.
    pub(crate) fn loss_grad(
        &self,
        params: &[f64],
        features: &[f64],
        horizon: usize,
        d: usize,
        target_std: &[f64],
        weight: f64,
        dfeat: &mut [f64],
        grad: &mut [f64],
    ) -> f64 {
        match self {
            HeadKind::StudentT => {
                let (w_mu, rest) = params.split_at(d);
                let b_mu = rest[0];
                let w_sigma = &rest[1..1 + d];
                let b_sigma = rest[1 + d];
                let dof_raw = rest[2 + d];
                let nu = 2.0 + softplus(dof_raw);
                let base = -ln_gamma((nu + 1.0) / 2.0)
                    + ln_gamma(nu / 2.0)
                    + 0.5 * (nu * std::f64::consts::PI).ln();
                let dbase_dnu = -0.5 * digamma((nu + 1.0) / 2.0)
                    + 0.5 * digamma(nu / 2.0)
                    + 0.5 / nu;
                let mut loss = 0.0;
                let mut dnu_total = 0.0;
                for l in 0..horizon {
                    let f = &features[l * d..(l + 1) * d];
                    let mu = dot(w_mu, f) + b_mu;
                    let s_raw = dot(w_sigma, f) + b_sigma;
                    let sigma = softplus(s_raw);
                    let z = (target_std[l] - mu) / sigma;
                    let u = 1.0 + z * z / nu;
                    loss += base + sigma.ln() + (nu + 1.0) / 2.0 * u.ln();

                    let dmu = -(nu + 1.0) * z / (nu * sigma * u);
                    let dsigma = 1.0 / sigma - (nu + 1.0) * z * z / (nu * sigma * u);
                    let dnu = dbase_dnu + 0.5 * u.ln()
                        - (nu + 1.0) * z * z / (2.0 * nu * nu * u);
                    dnu_total += dnu;
                    let ds_raw = dsigma * sigmoid(s_raw);
                    for i in 0..d {
                        dfeat[l * d + i] += weight * (dmu * w_mu[i] + ds_raw * w_sigma[i]);
                        grad[i] += weight * dmu * f[i];
                        grad[d + 1 + i] += weight * ds_raw * f[i];
                    }
                    grad[d] += weight * dmu;
                    grad[2 * d + 1] += weight * ds_raw;
                }
                grad[2 * d + 2] += weight * dnu_total * sigmoid(dof_raw);
                loss
            }
            HeadKind::Quantile { levels } => {
                let mut loss = 0.0;
                for l in 0..horizon {
                    let f = &features[l * d..(l + 1) * d];
                    let y = target_std[l];
                    for (k, q) in levels.iter().enumerate() {
                        let w = &params[k * (d + 1)..k * (d + 1) + d];
                        let b = params[k * (d + 1) + d];
                        let pred = dot(w, f) + b;
                        let (rho, drho) = if y < pred {
                            (2.0 * (1.0 - q) * (pred - y), 2.0 * (1.0 - q))
                        } else if y > pred {
                            (2.0 * q * (y - pred), -2.0 * q)
                        } else {
                            (0.0, 0.0)
                        };
                        loss += rho;
                        for i in 0..d {
                            dfeat[l * d + i] += weight * drho * w[i];
                            grad[k * (d + 1) + i] += weight * drho * f[i];
                        }
                        grad[k * (d + 1) + d] += weight * drho;
                    }
                }
                loss
            }
        }
    }

    /// Number of loss terms per window, the averaging denominator.
    pub(crate) fn terms(&self, horizon: usize) -> usize {
        match self {
            HeadKind::StudentT => horizon,
            HeadKind::Quantile { levels } => horizon * levels.len(),
        }
    }

    /// Builds the de-standardized forecast from features.
    pub(crate) fn forecast(
        &self,
        params: &[f64],
        features: &[f64],
        horizon: usize,
        d: usize,
        mean: f64,
        std: f64,
    ) -> Result<Forecast> {
        match self {
            HeadKind::StudentT => {
                let (w_mu, rest) = params.split_at(d);
                let b_mu = rest[0];
                let w_sigma = &rest[1..1 + d];
                let b_sigma = rest[1 + d];
                let nu = 2.0 + softplus(rest[2 + d]);
                let mut location = Vec::with_capacity(horizon);
                let mut scale = Vec::with_capacity(horizon);
                for l in 0..horizon {
                    let f = &features[l * d..(l + 1) * d];
                    location.push(mean + std * (dot(w_mu, f) + b_mu));
                    scale.push(std * softplus(dot(w_sigma, f) + b_sigma));
                }
                let p = ParametricForecast::student_t(location, scale, vec![nu; horizon])?;
                Ok(Forecast::from(p))
            }
            HeadKind::Quantile { levels } => {
                let mut rows = Vec::with_capacity(horizon);
                for l in 0..horizon {
                    let f = &features[l * d..(l + 1) * d];
                    let row = (0..levels.len())
                        .map(|k| {
                            let w = &params[k * (d + 1)..k * (d + 1) + d];
                            let b = params[k * (d + 1) + d];
                            mean + std * (dot(w, f) + b)
                        })
                        .collect();
                    rows.push(row);
                }
                let q = QuantileForecast::new(levels.clone(), rows)?;
                Ok(Forecast::from(q))
            }
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Grab-bag of per-window intermediates a trunk needs for its backward pass.
pub(crate) struct TrunkCache {
    pub slots: Vec<Vec<f64>>,
}

/// A feature extractor: standardized history in, L×D feature vector out.
pub(crate) trait Trunk {
    fn history_len(&self) -> usize;
    fn horizon(&self) -> usize;
    fn feature_dim(&self) -> usize;
    fn trunk_param_count(&self) -> usize;
    fn init_trunk(&self, rng: &mut ChaCha12Rng, out: &mut [f64]);
    /// Forward pass. `dropout` is Some only during training batches.
    fn features(
        &self,
        params: &[f64],
        hist_std: &[f64],
        dropout: Option<&mut ChaCha12Rng>,
        cache: Option<&mut TrunkCache>,
    ) -> Vec<f64>;
    /// Accumulates parameter gradients (scaled by the caller inside `dfeat`)
    /// into `grad`, the trunk's slice of the full gradient vector.
    fn backward(&self, params: &[f64], cache: &TrunkCache, dfeat: &[f64], grad: &mut [f64]);
    /// (name, rows, cols) per tensor, in parameter-vector order.
    fn layout(&self) -> Vec<(String, usize, usize)>;
}

/// Epoch counters and losses, one line of the training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

/// Renders a trace as line-delimited JSON, one record per line.
pub fn trace_to_jsonl(trace: &[TraceRecord]) -> String {
    trace
        .iter()
        .map(|r| serde_json::to_string(r).expect("trace record serializes"))
        .map(|line| line + "\n")
        .collect()
}

/// Knobs of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Config {
                reason: format!("learning rate must be positive, got {}", self.learning_rate),
            });
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.early_stop_patience == 0 {
            return Err(Error::Config {
                reason: "batch size, epochs, and patience must all be at least 1".into(),
            });
        }
        Ok(())
    }
}

/// What a training run reports besides the fitted parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub trace: Vec<TraceRecord>,
    /// Epoch (1-based) whose parameters were returned.
    pub best_epoch: usize,
    /// True when a non-finite loss forced the one permitted halving.
    pub lr_halved: bool,
}

pub(crate) struct Net<T: Trunk> {
    pub trunk: T,
    pub head: HeadKind,
    pub dropout: f64,
}

impl<T: Trunk> Net<T> {
    pub(crate) fn num_params(&self) -> usize {
        self.trunk.trunk_param_count() + self.head.param_count(self.trunk.feature_dim())
    }

    pub(crate) fn init_params(&self, rng: &mut ChaCha12Rng) -> Vec<f64> {
        let mut params = vec![0.0; self.num_params()];
        let split = self.trunk.trunk_param_count();
        self.trunk.init_trunk(rng, &mut params[..split]);
        self.head
            .init(self.trunk.feature_dim(), rng, &mut params[split..]);
        params
    }

    /// Mean loss and gradient over a batch; dropout active when requested.
    pub(crate) fn batch_loss_grad(
        &self,
        params: &[f64],
        windows: &[&WindowSample],
        mut dropout_rng: Option<&mut ChaCha12Rng>,
    ) -> (f64, Vec<f64>) {
        let split = self.trunk.trunk_param_count();
        let l = self.trunk.horizon();
        let d = self.trunk.feature_dim();
        let mut grad = vec![0.0; params.len()];
        let mut total = 0.0;
        let denom = (windows.len() * self.head.terms(l)) as f64;
        let weight = 1.0 / denom;
        for window in windows {
            let (mean, std) = window_stats(&window.history);
            let hist = standardize(&window.history, mean, std);
            let target = standardize(&window.target, mean, std);
            let mut cache = TrunkCache { slots: Vec::new() };
            let features = self.trunk.features(
                &params[..split],
                &hist,
                dropout_rng.as_deref_mut().filter(|_| self.dropout > 0.0),
                Some(&mut cache),
            );
            let mut dfeat = vec![0.0; l * d];
            let loss = self.head.loss_grad(
                &params[split..],
                &features,
                l,
                d,
                &target,
                weight,
                &mut dfeat,
                &mut grad[split..],
            );
            total += loss;
            self.trunk
                .backward(&params[..split], &cache, &dfeat, &mut grad[..split]);
        }
        (total / denom, grad)
    }

    /// Mean loss in evaluation mode (no dropout, no gradients).
    pub(crate) fn mean_loss(&self, params: &[f64], windows: &[WindowSample]) -> f64 {
        let split = self.trunk.trunk_param_count();
        let l = self.trunk.horizon();
        let d = self.trunk.feature_dim();
        let mut total = 0.0;
        let mut grad_scratch = vec![0.0; self.head.param_count(d)];
        let mut dfeat_scratch = vec![0.0; l * d];
        for window in windows {
            let (mean, std) = window_stats(&window.history);
            let hist = standardize(&window.history, mean, std);
            let target = standardize(&window.target, mean, std);
            let features = self.trunk.features(&params[..split], &hist, None, None);
            total += self.head.loss_grad(
                &params[split..],
                &features,
                l,
                d,
                &target,
                0.0,
                &mut dfeat_scratch,
                &mut grad_scratch,
            );
        }
        total / (windows.len() * self.head.terms(l)) as f64
    }

    pub(crate) fn forecast(&self, params: &[f64], history: &[f64]) -> Result<Forecast> {
        if history.len() != self.trunk.history_len() {
            return Err(Error::ShapeMismatch {
                expected: self.trunk.history_len(),
                got: history.len(),
            });
        }
        let split = self.trunk.trunk_param_count();
        let (mean, std) = window_stats(history);
        let hist = standardize(history, mean, std);
        let features = self.trunk.features(&params[..split], &hist, None, None);
        self.head.forecast(
            &params[split..],
            &features,
            self.trunk.horizon(),
            self.trunk.feature_dim(),
            mean,
            std,
        )
    }
}

fn check_window_shapes<T: Trunk>(net: &Net<T>, windows: &[WindowSample]) -> Result<()> {
    for w in windows {
        if w.history.len() != net.trunk.history_len() {
            return Err(Error::ShapeMismatch {
                expected: net.trunk.history_len(),
                got: w.history.len(),
            });
        }
        if w.target.len() != net.trunk.horizon() {
            return Err(Error::ShapeMismatch {
                expected: net.trunk.horizon(),
                got: w.target.len(),
            });
        }
    }
    Ok(())
}

/// Shared training loop: seeded shuffling, momentum descent with gradient
/// clipping, per-epoch trace, early stopping, and the single learning-rate
/// halving allowed on a non-finite loss.
pub(crate) fn train_net<T: Trunk>(
    net: &Net<T>,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    config: &TrainConfig,
) -> Result<(Vec<f64>, TrainReport)> {
    config.validate()?;
    if train_windows.is_empty() {
        return Err(Error::EmptyBatch);
    }
    if val_windows.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    check_window_shapes(net, train_windows)?;
    check_window_shapes(net, val_windows)?;

    let mut rng = rng_from_seed(config.seed);
    let mut params = net.init_params(&mut rng);
    let initial = params.clone();
    let mut velocity = vec![0.0; params.len()];
    let mut lr = config.learning_rate;
    let mut lr_halved = false;

    let mut trace = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut best_epoch = 0usize;
    let mut stale = 0usize;
    let mut order: Vec<usize> = (0..train_windows.len()).collect();

    'epochs: for epoch in 1..=config.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&WindowSample> = chunk.iter().map(|i| &train_windows[*i]).collect();
            let (loss, grad) = net.batch_loss_grad(&params, &batch, Some(&mut rng));
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                if lr_halved {
                    return Err(Error::TrainingDiverged {
                        epochs_completed: epoch - 1,
                    });
                }
                lr /= 2.0;
                lr_halved = true;
                params = if best_epoch > 0 {
                    best_params.clone()
                } else {
                    initial.clone()
                };
                velocity.iter_mut().for_each(|v| *v = 0.0);
                continue 'epochs;
            }
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            let scale = if norm > GRAD_CLIP { GRAD_CLIP / norm } else { 1.0 };
            for ((p, v), g) in params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = MOMENTUM * *v - lr * scale * g;
                *p += *v;
            }
        }
        let train_loss = net.mean_loss(&params, train_windows);
        let val_loss = net.mean_loss(&params, val_windows);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            if lr_halved {
                return Err(Error::TrainingDiverged {
                    epochs_completed: epoch,
                });
            }
            lr /= 2.0;
            lr_halved = true;
            params = if best_epoch > 0 {
                best_params.clone()
            } else {
                initial.clone()
            };
            velocity.iter_mut().for_each(|v| *v = 0.0);
            continue;
        }
        trace.push(TraceRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.early_stop_patience {
                break;
            }
        }
    }
    if best_epoch == 0 {
        return Err(Error::TrainingDiverged {
            epochs_completed: 0,
        });
    }
    Ok((
        best_params,
        TrainReport {
            trace,
            best_epoch,
            lr_halved,
        },
    ))
}

/// A named grid of candidate hyperparameter values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub values: BTreeMap<String, Vec<f64>>,
}

impl SearchSpace {
    pub fn new(values: BTreeMap<String, Vec<f64>>) -> Result<Self> {
        if values.is_empty() || values.values().any(|v| v.is_empty()) {
            return Err(Error::EmptySearchSpace);
        }
        Ok(SearchSpace { values })
    }

    pub fn num_cells(&self) -> usize {
        self.values.values().map(|v| v.len()).product()
    }

    /// Mixed-radix decode of a flat cell index, keys in sorted order.
    fn decode(&self, mut index: usize) -> CandidateConfig {
        let mut out = BTreeMap::new();
        for (name, options) in &self.values {
            out.insert(name.clone(), options[index % options.len()]);
            index /= options.len();
        }
        CandidateConfig { values: out }
    }
}

/// One sampled point of the search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateConfig {
    pub values: BTreeMap<String, f64>,
}

impl CandidateConfig {
    pub fn get(&self, name: &str) -> Result<f64> {
        self.values
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownHyperparameter {
                name: name.into(),
                family: "candidate config".into(),
            })
    }

    pub fn get_usize(&self, name: &str) -> Result<usize> {
        Ok(self.get(name)?.round() as usize)
    }
}

/// One row of the search leaderboard: the candidate, its validation score
/// (None when training failed), and the seed its run used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub config: CandidateConfig,
    pub val_score: Option<f64>,
    pub seed: u64,
}

/// Outcome of a random hyperparameter search. `best` is None when every
/// candidate failed; the leaderboard is returned either way.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Option<CandidateConfig>,
    pub leaderboard: Vec<LeaderboardRow>,
}

impl SearchOutcome {
    pub fn best_or_err(&self) -> Result<&CandidateConfig> {
        self.best.as_ref().ok_or(Error::AllConfigsFailed)
    }
}

/// Samples `n_configs` cells (without replacement when the grid has at
/// least that many, with replacement otherwise), scores each with the
/// supplied trainer, and picks the argmin. The trainer returns a validation
/// score; an Err marks that candidate failed. Deterministic given the seed:
/// candidate k always trains with the k-th derived seed.
pub fn random_search<F>(
    space: &SearchSpace,
    n_configs: usize,
    seed: u64,
    mut trainer: F,
) -> Result<SearchOutcome>
where
    F: FnMut(&CandidateConfig, u64) -> Result<f64>,
{
    if space.values.is_empty() || space.values.values().any(|v| v.is_empty()) {
        return Err(Error::EmptySearchSpace);
    }
    let cells = space.num_cells();
    let mut rng = rng_from_seed(seed);
    let indices: Vec<usize> = if cells >= n_configs {
        let mut all: Vec<usize> = (0..cells).collect();
        all.shuffle(&mut rng);
        all.truncate(n_configs);
        all
    } else {
        (0..n_configs)
            .map(|_| (rng.random::<u64>() % cells as u64) as usize)
            .collect()
    };
    let mut leaderboard = Vec::with_capacity(indices.len());
    for (k, idx) in indices.iter().enumerate() {
        let config = space.decode(*idx);
        let run_seed = crate::rng::derive_seed(seed, k as u64);
        let val_score = trainer(&config, run_seed).ok().filter(|v| v.is_finite());
        leaderboard.push(LeaderboardRow {
            config,
            val_score,
            seed: run_seed,
        });
    }
    let best = leaderboard
        .iter()
        .filter(|row| row.val_score.is_some())
        .min_by(|a, b| a.val_score.unwrap().total_cmp(&b.val_score.unwrap()))
        .map(|row| row.config.clone());
    Ok(SearchOutcome { best, leaderboard })
}

/// A fitted direct forecaster of either architecture, the unit the
/// checkpoint format stores.
#[derive(Debug, Clone, PartialEq)]
pub enum DirectForecaster {
    DLinear(DLinearModel),
    Mlp(MlpDirectModel),
}

impl DirectForecaster {
    pub fn forecast(&self, history: &[f64]) -> Result<Forecast> {
        match self {
            DirectForecaster::DLinear(m) => m.forecast(history),
            DirectForecaster::Mlp(m) => m.forecast(history),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "arch", rename_all = "snake_case")]
enum CheckpointHeader {
    Dlinear { config: DLinearConfig },
    Mlp { config: MlpConfig },
}

const CHECKPOINT_MAGIC: &str = "probcast-checkpoint 1";

/// Writes the checkpoint text format: a magic line, a one-line JSON
/// architecture header, then each tensor as `tensor <name> <rows> <cols>`
/// followed by `rows` lines of `cols` decimal values (row-major), and a
/// final `end` line. Values print in shortest round-trip form.
pub fn save_checkpoint<W: Write>(model: &DirectForecaster, mut out: W) -> Result<()> {
    let io_err = |e: std::io::Error| Error::io("writing checkpoint", e);
    let (header, layout, params) = match model {
        DirectForecaster::DLinear(m) => (
            CheckpointHeader::Dlinear {
                config: m.config().clone(),
            },
            m.layout(),
            m.params(),
        ),
        DirectForecaster::Mlp(m) => (
            CheckpointHeader::Mlp {
                config: m.config().clone(),
            },
            m.layout(),
            m.params(),
        ),
    };
    writeln!(out, "{CHECKPOINT_MAGIC}").map_err(io_err)?;
    let header_json = serde_json::to_string(&header).expect("config serializes");
    writeln!(out, "{header_json}").map_err(io_err)?;
    let mut offset = 0;
    for (name, rows, cols) in layout {
        writeln!(out, "tensor {name} {rows} {cols}").map_err(io_err)?;
        for r in 0..rows {
            let row = &params[offset + r * cols..offset + (r + 1) * cols];
            let line = row
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(" ");
            writeln!(out, "{line}").map_err(io_err)?;
        }
        offset += rows * cols;
    }
    writeln!(out, "end").map_err(io_err)?;
    Ok(())
}

/// Reads a checkpoint produced by `save_checkpoint`.
pub fn load_checkpoint<R: BufRead>(input: R) -> Result<DirectForecaster> {
    let bad = |reason: &str| Error::MalformedCheckpoint {
        reason: reason.into(),
    };
    let mut lines = input.lines();
    let mut next = || -> Result<String> {
        lines
            .next()
            .ok_or_else(|| bad("unexpected end of file"))?
            .map_err(|e| Error::io("reading checkpoint", e))
    };
    if next()? != CHECKPOINT_MAGIC {
        return Err(bad("missing magic line"));
    }
    let header: CheckpointHeader = serde_json::from_str(&next()?)
        .map_err(|e| bad(&format!("bad architecture header: {e}")))?;
    let layout = match &header {
        CheckpointHeader::Dlinear { config } => DLinearModel::layout_for(config)?,
        CheckpointHeader::Mlp { config } => MlpDirectModel::layout_for(config)?,
    };
    let total: usize = layout.iter().map(|(_, r, c)| r * c).sum();
    let mut params = Vec::with_capacity(total);
    for (name, rows, cols) in &layout {
        let decl = next()?;
        let expected = format!("tensor {name} {rows} {cols}");
        if decl != expected {
            return Err(bad(&format!("expected `{expected}`, found `{decl}`")));
        }
        for _ in 0..*rows {
            let line = next()?;
            let mut count = 0;
            for piece in line.split_whitespace() {
                let v: f64 = piece
                    .parse()
                    .map_err(|_| bad(&format!("bad value `{piece}` in tensor {name}")))?;
                params.push(v);
                count += 1;
            }
            if count != *cols {
                return Err(bad(&format!(
                    "tensor {name}: expected {cols} values per row, found {count}"
                )));
            }
        }
    }
    if next()? != "end" {
        return Err(bad("missing end marker"));
    }
    match header {
        CheckpointHeader::Dlinear { config } => Ok(DirectForecaster::DLinear(
            DLinearModel::with_params(config, params)?,
        )),
        CheckpointHeader::Mlp { config } => {
            Ok(DirectForecaster::Mlp(MlpDirectModel::with_params(config, params)?))
        }
    }
}
