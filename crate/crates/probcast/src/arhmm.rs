//! Switching autoregression: a hidden Markov chain selects which linear AR
//! regime emits each observation.
//!
//! Fitting is expectation-maximization with scaled forward-backward passes
//! over AR emission densities, conditioning on the first `num_lags` values.
//! Model selection scans a (states, lags) grid scored by the conditional
//! validation log-likelihood and applies the smallest-within-0.1% rule.
//! Forecasts are sampled trajectories seeded from the filtered posterior at
//! the end of the history.

use rand_chacha::ChaCha12Rng;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::arma::ArModel;
use crate::error::{Error, Result};
use crate::forecast::EmpiricalForecast;
use crate::rng::{derive_seed, rng_from_seed};

pub const EM_MAX_ITERS: usize = 200;
pub const EM_TOL: f64 = 1e-6;
const EM_RESTARTS: u64 = 5;
const VARIANCE_FLOOR: f64 = 1e-12;
const COLLAPSE_MASS: f64 = 1e-6;

/// A fitted switching-AR model.
#[derive(Debug, Clone, PartialEq)]
pub struct ArhmmModel {
    num_states: usize,
    num_lags: usize,
    intercepts: Vec<f64>,
    /// Per-state AR coefficients, `coefficients[s][i]` multiplying y_{t−1−i}.
    coefficients: Vec<Vec<f64>>,
    noise_variances: Vec<f64>,
    /// Row-stochastic: `transition[i][j]` = P(next = j | current = i).
    transition: Vec<Vec<f64>>,
    initial_distribution: Vec<f64>,
    /// Train log-likelihood per EM iteration, restarted after a collapse
    /// reinitialization so the recorded trace is always non-decreasing.
    loglik_trace: Vec<f64>,
    converged: bool,
    collapsed_reinit: bool,
}

impl ArhmmModel {
    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_lags(&self) -> usize {
        self.num_lags
    }

    pub fn intercepts(&self) -> &[f64] {
        &self.intercepts
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }

    pub fn noise_variances(&self) -> &[f64] {
        &self.noise_variances
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn initial_distribution(&self) -> &[f64] {
        &self.initial_distribution
    }

    pub fn loglik_trace(&self) -> &[f64] {
        &self.loglik_trace
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    /// True when a state's responsibility mass collapsed during fitting and
    /// the state was reinitialized.
    pub fn collapsed_reinit(&self) -> bool {
        self.collapsed_reinit
    }

    /// Observed-data log-likelihood of a sequence, conditioning on its first
    /// `num_lags` values.
    pub fn loglik(&self, series: &[f64]) -> Result<f64> {
        Ok(self.forward(series)?.0)
    }

    /// log p(continuation | prefix): the likelihood of the concatenation
    /// minus the likelihood of the prefix alone.
    pub fn conditional_loglik(&self, prefix: &[f64], continuation: &[f64]) -> Result<f64> {
        let mut combined = Vec::with_capacity(prefix.len() + continuation.len());
        combined.extend_from_slice(prefix);
        combined.extend_from_slice(continuation);
        Ok(self.loglik(&combined)? - self.loglik(prefix)?)
    }

    /// Filtered state posterior after the final observation of `history`.
    pub fn filtered_posterior(&self, history: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(history)?.1)
    }

    /// Scaled forward pass; returns (log-likelihood, filtered posterior at
    /// the last step). A history of exactly `num_lags` values carries no
    /// emission terms and returns the initial distribution.
    fn forward(&self, series: &[f64]) -> Result<(f64, Vec<f64>)> {
        if series.len() < self.num_lags {
            return Err(Error::HistoryTooShort {
                needed: self.num_lags,
                got: series.len(),
            });
        }
        let s = self.num_states;
        let m = series.len() - self.num_lags;
        if m == 0 {
            return Ok((0.0, self.initial_distribution.clone()));
        }
        let logb = self.emission_logdens(series);
        let mut alpha = vec![0.0; s];
        let mut loglik = 0.0;
        for t in 0..m {
            let row = &logb[t * s..(t + 1) * s];
            let shift = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut next = vec![0.0; s];
            if t == 0 {
                for j in 0..s {
                    next[j] = self.initial_distribution[j] * (row[j] - shift).exp();
                }
            } else {
                for j in 0..s {
                    let mut acc = 0.0;
                    for i in 0..s {
                        acc += alpha[i] * self.transition[i][j];
                    }
                    next[j] = acc * (row[j] - shift).exp();
                }
            }
            let norm: f64 = next.iter().sum();
            if !(norm > 0.0 && norm.is_finite()) {
                return Err(Error::NumericalFailure {
                    context: format!("forward pass underflowed at step {t}"),
                });
            }
            for v in &mut next {
                *v /= norm;
            }
            loglik += norm.ln() + shift;
            alpha = next;
        }
        Ok((loglik, alpha))
    }

    /// Per-step per-state emission log-densities, flattened m×S row-major.
    fn emission_logdens(&self, series: &[f64]) -> Vec<f64> {
        let lg = self.num_lags;
        let s = self.num_states;
        let m = series.len() - lg;
        let mut logb = vec![0.0; m * s];
        for t in 0..m {
            let y = series[lg + t];
            for j in 0..s {
                let mut mu = self.intercepts[j];
                for (i, phi) in self.coefficients[j].iter().enumerate() {
                    mu += phi * series[lg + t - 1 - i];
                }
                let var = self.noise_variances[j].max(VARIANCE_FLOOR);
                let z = y - mu;
                logb[t * s + j] =
                    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + z * z / var);
            }
        }
        logb
    }

    /// Most probable state path over the modeled steps (index t corresponds
    /// to observation `num_lags + t`).
    pub fn viterbi(&self, series: &[f64]) -> Result<Vec<usize>> {
        if series.len() <= self.num_lags {
            return Err(Error::HistoryTooShort {
                needed: self.num_lags + 1,
                got: series.len(),
            });
        }
        let s = self.num_states;
        let m = series.len() - self.num_lags;
        let logb = self.emission_logdens(series);
        let log_a: Vec<Vec<f64>> = self
            .transition
            .iter()
            .map(|row| row.iter().map(|p| p.ln()).collect())
            .collect();
        let mut delta: Vec<f64> = (0..s)
            .map(|j| self.initial_distribution[j].ln() + logb[j])
            .collect();
        let mut back = vec![0usize; m * s];
        for t in 1..m {
            let mut next = vec![f64::NEG_INFINITY; s];
            for j in 0..s {
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                for i in 0..s {
                    let cand = delta[i] + log_a[i][j];
                    if cand > best {
                        best = cand;
                        arg = i;
                    }
                }
                next[j] = best + logb[t * s + j];
                back[t * s + j] = arg;
            }
            delta = next;
        }
        let mut state = (0..s)
            .max_by(|a, b| delta[*a].total_cmp(&delta[*b]))
            .unwrap_or(0);
        let mut path = vec![0usize; m];
        path[m - 1] = state;
        for t in (1..m).rev() {
            state = back[t * s + state];
            path[t - 1] = state;
        }
        Ok(path)
    }

    /// Samples `n_trajectories` continuations of `history`: the starting
    /// state is drawn from the filtered posterior, then each step draws a
    /// transition followed by an AR emission. Deterministic given the seed;
    /// trajectory k uses the k-th derived substream.
    pub fn sample_forecast(
        &self,
        history: &[f64],
        horizon: usize,
        n_trajectories: usize,
        seed: u64,
    ) -> Result<EmpiricalForecast> {
        if history.len() < self.num_lags {
            return Err(Error::HistoryTooShort {
                needed: self.num_lags,
                got: history.len(),
            });
        }
        if horizon == 0 {
            return Err(Error::EmptyTask);
        }
        let posterior = self.filtered_posterior(history)?;
        let trajectories: Vec<Vec<f64>> = (0..n_trajectories)
            .into_par_iter()
            .map(|k| {
                let mut rng = rng_from_seed(derive_seed(seed, k as u64));
                self.sample_one(history, horizon, &posterior, &mut rng)
            })
            .collect();
        EmpiricalForecast::new(trajectories)
    }

    fn sample_one(
        &self,
        history: &[f64],
        horizon: usize,
        posterior: &[f64],
        rng: &mut ChaCha12Rng,
    ) -> Vec<f64> {
        let lg = self.num_lags;
        let mut window: Vec<f64> = history[history.len() - lg..].to_vec();
        let mut state = draw_categorical(posterior, rng);
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            state = draw_categorical(&self.transition[state], rng);
            let mut y = self.intercepts[state];
            for (i, phi) in self.coefficients[state].iter().enumerate() {
                y += phi * window[window.len() - 1 - i];
            }
            let sd = self.noise_variances[state].sqrt();
            if sd > 0.0 {
                y += sd * rng.sample::<f64, _>(StandardNormal);
            }
            window.push(y);
            out.push(y);
        }
        out
    }
}

fn draw_categorical(probs: &[f64], rng: &mut ChaCha12Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Fits by EM with 5 k-means-seeded restarts, keeping the restart with the
/// best final train log-likelihood.
pub fn em_fit(
    history: &[f64],
    num_states: usize,
    num_lags: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ArhmmModel> {
    if num_states == 0 || num_lags == 0 {
        return Err(Error::InvalidHmmShape);
    }
    if history.len() <= num_lags + num_states {
        return Err(Error::HistoryTooShort {
            needed: num_lags + num_states + 1,
            got: history.len(),
        });
    }
    let mut best: Option<ArhmmModel> = None;
    for restart in 0..EM_RESTARTS {
        let run_seed = derive_seed(seed, restart);
        let model = em_fit_once(history, num_states, num_lags, run_seed, max_iters, tol)?;
        let score = model.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY);
        let better = best
            .as_ref()
            .map(|b| score > b.loglik_trace.last().copied().unwrap_or(f64::NEG_INFINITY))
            .unwrap_or(true);
        if better {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart ran"))
}

fn em_fit_once(
    history: &[f64],
    num_states: usize,
    num_lags: usize,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ArhmmModel> {
    let s = num_states;
    let lg = num_lags;
    let m = history.len() - lg;
    let mut rng = rng_from_seed(seed);

    let mut gamma = kmeans_responsibilities(history, s, lg, &mut rng);
    let mut model = ArhmmModel {
        num_states: s,
        num_lags: lg,
        intercepts: vec![0.0; s],
        coefficients: vec![vec![0.0; lg]; s],
        noise_variances: vec![1.0; s],
        transition: vec![vec![1.0 / s as f64; s]; s],
        initial_distribution: vec![1.0 / s as f64; s],
        loglik_trace: Vec::new(),
        converged: false,
        collapsed_reinit: false,
    };
    // One M-step from the clustering turns hard assignments into parameters.
    m_step_emissions(&mut model, history, &gamma)?;
    m_step_chain_from_hard(&mut model, &gamma);

    let mut reinit_used = false;
    for _ in 0..max_iters {
        let (loglik, new_gamma, xi_sums, gamma_sums) = e_step(&model, history)?;

        // A starved state gets one fresh start before we give up on it.
        if !reinit_used {
            if let Some(dead) = gamma_sums.iter().position(|g| *g < COLLAPSE_MASS) {
                reinitialize_state(&mut model, dead, history, &mut rng)?;
                model.collapsed_reinit = true;
                model.loglik_trace.clear();
                reinit_used = true;
                continue;
            }
        }

        let improved = model
            .loglik_trace
            .last()
            .map(|prev| (loglik - prev) / prev.abs().max(1.0) < tol)
            .unwrap_or(false);
        model.loglik_trace.push(loglik);
        if improved {
            model.converged = true;
            break;
        }

        gamma = new_gamma;
        m_step_emissions(&mut model, history, &gamma)?;
        m_step_chain(&mut model, &xi_sums, &gamma_sums, &gamma, m);
    }
    Ok(model)
}

/// E-step: responsibilities, pairwise transition counts, and per-state mass
/// over all but the final step (the transition denominators).
#[allow(clippy::type_complexity)]
fn e_step(
    model: &ArhmmModel,
    history: &[f64],
) -> Result<(f64, Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let s = model.num_states;
    let lg = model.num_lags;
    let m = history.len() - lg;
    let logb = model.emission_logdens(history);

    let mut alpha = vec![0.0; m * s];
    let mut scales = vec![0.0; m];
    let mut shifts = vec![0.0; m];
    let mut loglik = 0.0;
    for t in 0..m {
        let row = &logb[t * s..(t + 1) * s];
        let shift = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        shifts[t] = shift;
        for j in 0..s {
            let b = (row[j] - shift).exp();
            alpha[t * s + j] = if t == 0 {
                model.initial_distribution[j] * b
            } else {
                let mut acc = 0.0;
                for i in 0..s {
                    acc += alpha[(t - 1) * s + i] * model.transition[i][j];
                }
                acc * b
            };
        }
        let norm: f64 = alpha[t * s..(t + 1) * s].iter().sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::NumericalFailure {
                context: format!("forward pass underflowed at step {t}"),
            });
        }
        for j in 0..s {
            alpha[t * s + j] /= norm;
        }
        scales[t] = norm;
        loglik += norm.ln() + shift;
    }

    let mut beta = vec![0.0; m * s];
    for j in 0..s {
        beta[(m - 1) * s + j] = 1.0;
    }
    for t in (0..m - 1).rev() {
        let next_row = &logb[(t + 1) * s..(t + 2) * s];
        for i in 0..s {
            let mut acc = 0.0;
            for j in 0..s {
                let b = (next_row[j] - shifts[t + 1]).exp();
                acc += model.transition[i][j] * b * beta[(t + 1) * s + j];
            }
            beta[t * s + i] = acc / scales[t + 1];
        }
    }

    let mut gamma = vec![0.0; m * s];
    for t in 0..m {
        let mut norm = 0.0;
        for j in 0..s {
            gamma[t * s + j] = alpha[t * s + j] * beta[t * s + j];
            norm += gamma[t * s + j];
        }
        if norm > 0.0 {
            for j in 0..s {
                gamma[t * s + j] /= norm;
            }
        }
    }

    let mut xi_sums = vec![vec![0.0; s]; s];
    let mut gamma_sums = vec![0.0; s];
    for t in 0..m - 1 {
        let next_row = &logb[(t + 1) * s..(t + 2) * s];
        for i in 0..s {
            gamma_sums[i] += gamma[t * s + i];
            for j in 0..s {
                let b = (next_row[j] - shifts[t + 1]).exp();
                xi_sums[i][j] += alpha[t * s + i] * model.transition[i][j] * b
                    * beta[(t + 1) * s + j]
                    / scales[t + 1];
            }
        }
    }
    Ok((loglik, gamma, xi_sums, gamma_sums))
}

/// Weighted least squares per state; responsibilities are the weights.
fn m_step_emissions(model: &mut ArhmmModel, history: &[f64], gamma: &[f64]) -> Result<()> {
    let s = model.num_states;
    let lg = model.num_lags;
    let m = history.len() - lg;
    let d = lg + 1;
    for j in 0..s {
        let mut gram = nalgebra::DMatrix::<f64>::zeros(d, d);
        let mut moment = nalgebra::DVector::<f64>::zeros(d);
        let mut mass = 0.0;
        let mut row = vec![0.0; d];
        for t in 0..m {
            let w = gamma[t * s + j];
            if w == 0.0 {
                continue;
            }
            row[0] = 1.0;
            for i in 0..lg {
                row[1 + i] = history[lg + t - 1 - i];
            }
            let y = history[lg + t];
            for a in 0..d {
                for b in a..d {
                    gram[(a, b)] += w * row[a] * row[b];
                }
                moment[a] += w * row[a] * y;
            }
            mass += w;
        }
        if mass <= 0.0 {
            continue;
        }
        for a in 0..d {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }
        let solution = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&moment))
            .or_else(|| {
                // Near-singular weighted design: a small ridge keeps the
                // update defined without visibly moving the optimum.
                let ridge = 1e-8 * (1.0 + gram.trace() / d as f64);
                let mut damped = gram.clone();
                for a in 0..d {
                    damped[(a, a)] += ridge;
                }
                damped.cholesky().map(|ch| ch.solve(&moment))
            });
        let beta = match solution {
            Some(b) if b.iter().all(|v| v.is_finite()) => b,
            _ => continue,
        };
        let mut wsse = 0.0;
        for t in 0..m {
            let w = gamma[t * s + j];
            if w == 0.0 {
                continue;
            }
            let mut mu = beta[0];
            for i in 0..lg {
                mu += beta[1 + i] * history[lg + t - 1 - i];
            }
            wsse += w * (history[lg + t] - mu).powi(2);
        }
        model.intercepts[j] = beta[0];
        model.coefficients[j] = beta.iter().skip(1).cloned().collect();
        model.noise_variances[j] = (wsse / mass).max(VARIANCE_FLOOR);
    }
    Ok(())
}

fn m_step_chain(
    model: &mut ArhmmModel,
    xi_sums: &[Vec<f64>],
    gamma_sums: &[f64],
    gamma: &[f64],
    m: usize,
) {
    let s = model.num_states;
    for i in 0..s {
        if gamma_sums[i] > 0.0 {
            for j in 0..s {
                model.transition[i][j] = xi_sums[i][j] / gamma_sums[i];
            }
        } else {
            model.transition[i] = vec![1.0 / s as f64; s];
        }
        normalize_simplex(&mut model.transition[i]);
    }
    let _ = m;
    let first: Vec<f64> = (0..s).map(|j| gamma[j]).collect();
    model.initial_distribution = first;
    normalize_simplex(&mut model.initial_distribution);
}

/// Chain statistics from hard clustering assignments, used once at startup.
fn m_step_chain_from_hard(model: &mut ArhmmModel, gamma: &[f64]) {
    let s = model.num_states;
    let m = gamma.len() / s;
    let hard: Vec<usize> = (0..m)
        .map(|t| {
            (0..s)
                .max_by(|a, b| gamma[t * s + a].total_cmp(&gamma[t * s + b]))
                .unwrap_or(0)
        })
        .collect();
    let mut counts = vec![vec![1e-3; s]; s];
    for w in hard.windows(2) {
        counts[w[0]][w[1]] += 1.0;
    }
    for i in 0..s {
        let total: f64 = counts[i].iter().sum();
        for j in 0..s {
            model.transition[i][j] = counts[i][j] / total;
        }
    }
    let mut init = vec![1e-3; s];
    init[hard[0]] += 1.0;
    normalize_simplex(&mut init);
    model.initial_distribution = init;
}

fn normalize_simplex(p: &mut [f64]) {
    for v in p.iter_mut() {
        if !v.is_finite() || *v < 0.0 {
            *v = 0.0;
        }
    }
    let sum: f64 = p.iter().sum();
    if sum <= 0.0 {
        let u = 1.0 / p.len() as f64;
        for v in p.iter_mut() {
            *v = u;
        }
    } else {
        for v in p.iter_mut() {
            *v /= sum;
        }
    }
}

/// Gives a starved state a fresh start: the pooled AR fit plus seeded
/// jitter, pooled residual variance, and a uniform outgoing row.
fn reinitialize_state(
    model: &mut ArhmmModel,
    state: usize,
    history: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<()> {
    let pooled = ArModel::fit(history, model.num_lags)?;
    let spread = pooled.sigma2().sqrt().max(1e-6);
    model.intercepts[state] =
        pooled.intercept() + 0.1 * spread * rng.sample::<f64, _>(StandardNormal);
    model.coefficients[state] = pooled
        .coefficients()
        .iter()
        .map(|c| c + 0.05 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    model.noise_variances[state] = pooled.sigma2().max(VARIANCE_FLOOR);
    model.transition[state] = vec![1.0 / model.num_states as f64; model.num_states];
    Ok(())
}

/// Hard clustering of lag-window embeddings into `s` groups; returns soft
/// responsibilities (one-hot rows) over the m modeled steps.
fn kmeans_responsibilities(
    history: &[f64],
    s: usize,
    lg: usize,
    rng: &mut ChaCha12Rng,
) -> Vec<f64> {
    let m = history.len() - lg;
    let dim = lg + 1;
    let embed = |t: usize| -> &[f64] { &history[t..t + dim] };

    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(s);
    for _ in 0..s {
        let pick = (rng.random::<u64>() % m as u64) as usize;
        centers.push(embed(pick).to_vec());
    }
    let mut assign = vec![0usize; m];
    for _ in 0..50 {
        let mut changed = false;
        for t in 0..m {
            let x = embed(t);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (j, c) in centers.iter().enumerate() {
                let d: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            if assign[t] != best {
                assign[t] = best;
                changed = true;
            }
        }
        let mut sums = vec![vec![0.0; dim]; s];
        let mut counts = vec![0usize; s];
        for t in 0..m {
            counts[assign[t]] += 1;
            for (acc, v) in sums[assign[t]].iter_mut().zip(embed(t)) {
                *acc += v;
            }
        }
        for j in 0..s {
            if counts[j] > 0 {
                for v in &mut sums[j] {
                    *v /= counts[j] as f64;
                }
                centers[j] = sums[j].clone();
            } else {
                let pick = (rng.random::<u64>() % m as u64) as usize;
                centers[j] = embed(pick).to_vec();
            }
        }
        if !changed {
            break;
        }
    }
    let mut gamma = vec![0.0; m * s];
    for t in 0..m {
        gamma[t * s + assign[t]] = 1.0;
    }
    gamma
}

/// The (states, lags) search space. The default mirrors the benchmark
/// protocol: S from 2 to 10, lags 1, every even value to 40, then every
/// fourth value to 80.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionGrid {
    pub states: Vec<usize>,
    pub lags: Vec<usize>,
}

impl Default for SelectionGrid {
    fn default() -> Self {
        let mut lags = vec![1];
        lags.extend((2..=40).step_by(2));
        lags.extend((44..=80).step_by(4));
        SelectionGrid {
            states: (2..=10).collect(),
            lags,
        }
    }
}

/// Outcome of the grid scan: the chosen cell, every cell's validation
/// log-likelihood (NaN where fitting failed), and whether the
/// smallest-within-0.1% rule had to fall back to a plain argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct ArhmmSelection {
    pub num_states: usize,
    pub num_lags: usize,
    /// Indexed [state_idx][lag_idx], parallel to the grid vectors.
    pub val_loglik: Vec<Vec<f64>>,
    pub fallback_argmax: bool,
}

/// Scans the grid, scoring each cell by the validation log-likelihood
/// conditional on the training prefix, then applies the selection rule:
/// the smallest S whose best score is within 0.1% of the grid maximum
/// (score ≥ 1.001 × max, log-likelihoods being negative), then the smallest
/// lag within 0.1% of the best at that S. Any non-negative score makes the
/// percentage rule ill-defined; selection then falls back to the argmax and
/// says so.
pub fn select_arhmm(
    train: &[f64],
    val: &[f64],
    grid: &SelectionGrid,
    seed: u64,
) -> Result<ArhmmSelection> {
    select_arhmm_with(train, val, grid, seed, EM_MAX_ITERS, EM_TOL)
}

/// `select_arhmm` with an explicit EM iteration cap and tolerance, for
/// callers trading fit quality for a bounded runtime.
pub fn select_arhmm_with(
    train: &[f64],
    val: &[f64],
    grid: &SelectionGrid,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<ArhmmSelection> {
    if grid.states.is_empty() || grid.lags.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let cells: Vec<(usize, usize)> = grid
        .states
        .iter()
        .flat_map(|s| grid.lags.iter().map(move |l| (*s, *l)))
        .collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|(s, lg)| {
            let cell_seed = crate::rng::derive_seed_path(seed, &[*s as u64, *lg as u64]);
            match em_fit(train, *s, *lg, cell_seed, max_iters, tol) {
                Ok(model) => model.conditional_loglik(train, val).unwrap_or(f64::NAN),
                Err(_) => f64::NAN,
            }
        })
        .collect();
    if scores.iter().all(|v| v.is_nan()) {
        return Err(Error::AllConfigsFailed);
    }
    let val_loglik: Vec<Vec<f64>> = grid
        .states
        .iter()
        .enumerate()
        .map(|(si, _)| {
            grid.lags
                .iter()
                .enumerate()
                .map(|(li, _)| scores[si * grid.lags.len() + li])
                .collect()
        })
        .collect();
    let (num_states, num_lags, fallback_argmax) = select_from_val_loglik(grid, &val_loglik)?;
    Ok(ArhmmSelection {
        num_states,
        num_lags,
        val_loglik,
        fallback_argmax,
    })
}

/// The pure selection rule over a filled score matrix; see `select_arhmm`.
pub fn select_from_val_loglik(
    grid: &SelectionGrid,
    val_loglik: &[Vec<f64>],
) -> Result<(usize, usize, bool)> {
    let finite: Vec<f64> = val_loglik
        .iter()
        .flatten()
        .cloned()
        .filter(|v| v.is_finite())
        .collect();
    if finite.is_empty() {
        return Err(Error::AllConfigsFailed);
    }
    let max = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let fallback = finite.iter().any(|v| *v >= 0.0);

    if fallback {
        let mut best = (grid.states[0], grid.lags[0], f64::NEG_INFINITY);
        for (si, s) in grid.states.iter().enumerate() {
            for (li, l) in grid.lags.iter().enumerate() {
                let v = val_loglik[si][li];
                if v.is_finite() && v > best.2 {
                    best = (*s, *l, v);
                }
            }
        }
        return Ok((best.0, best.1, true));
    }

    // Negative scores: within 0.1% of max means score >= 1.001 * max.
    let threshold = 1.001 * max;
    let per_state_best: Vec<f64> = val_loglik
        .iter()
        .map(|row| {
            row.iter()
                .cloned()
                .filter(|v| v.is_finite())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let si = per_state_best
        .iter()
        .position(|v| *v >= threshold)
        .ok_or(Error::AllConfigsFailed)?;
    let state_max = per_state_best[si];
    let lag_threshold = 1.001 * state_max;
    let li = val_loglik[si]
        .iter()
        .position(|v| v.is_finite() && *v >= lag_threshold)
        .ok_or(Error::AllConfigsFailed)?;
    Ok((grid.states[si], grid.lags[li], false))
}

/// Relabels `candidate` states to best match `reference` using the Hungarian
/// assignment on co-occurrence counts. Returns the label map: entry j is the
/// reference label assigned to candidate label j.
pub fn align_states(reference: &[usize], candidate: &[usize], num_states: usize) -> Vec<usize> {
    let mut overlap = vec![vec![0i64; num_states]; num_states];
    for (r, c) in reference.iter().zip(candidate) {
        overlap[*c][*r] += 1;
    }
    let rows: Vec<Vec<i64>> = overlap;
    let matrix = pathfinding::matrix::Matrix::from_rows(rows).expect("square overlap matrix");
    let (_, assignment) = pathfinding::kuhn_munkres::kuhn_munkres(&matrix);
    assignment
}
