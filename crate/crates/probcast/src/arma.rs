//! AR(p) and ARMA(p,q) models: conditional least-squares and conditional
//! sum-of-squares fitting, information-criterion and validation-loss order
//! selection, and multi-step forecasting with analytic variances.
//!
//! Forecast variances come from the moving-average expansion of the fitted
//! model: scale[h]² = σ² Σ_{j<h} ψ_j², with the ψ weights built by the
//! standard recursion from the AR and MA coefficients.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forecast::{Forecast, ParametricForecast};
use crate::metrics::{mwql, EvalBatch};
use crate::optim::bfgs;
use crate::series::{ForecastTask, WindowSample};

/// Pure autoregressive model fitted by conditional least squares.
#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    intercept: f64,
    coefficients: Vec<f64>,
    sigma2: f64,
    loglik: f64,
    n_residuals: usize,
    degenerate: bool,
}

impl ArModel {
    /// Fits y_t = c + φ_1 y_{t−1} + … + φ_p y_{t−p} + ε_t by least squares
    /// over the rows t = p..n. The noise variance uses divisor (n − p).
    ///
    /// A singular design (for example a constant series with p ≥ 1) yields
    /// a degenerate fit: coefficients zero, intercept the mean, flagged.
    pub fn fit(history: &[f64], p: usize) -> Result<Self> {
        let n = history.len();
        if n <= p + 1 {
            return Err(Error::HistoryTooShort {
                needed: p + 2,
                got: n,
            });
        }
        let dim = p + 1;
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut moment = DVector::<f64>::zeros(dim);
        let mut row = vec![0.0; dim];
        for t in p..n {
            row[0] = 1.0;
            for i in 1..=p {
                row[i] = history[t - i];
            }
            for a in 0..dim {
                moment[a] += row[a] * history[t];
                for b in a..dim {
                    gram[(a, b)] += row[a] * row[b];
                }
            }
        }
        for a in 0..dim {
            for b in 0..a {
                gram[(a, b)] = gram[(b, a)];
            }
        }

        let solution = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&moment))
            .filter(|beta| beta.iter().all(|v| v.is_finite()));

        let (intercept, coefficients, degenerate) = match solution {
            Some(beta) => (beta[0], beta.as_slice()[1..].to_vec(), false),
            None => {
                let mean = history.iter().sum::<f64>() / n as f64;
                (mean, vec![0.0; p], true)
            }
        };

        let m = n - p;
        let mut ssr = 0.0;
        for t in p..n {
            let mut pred = intercept;
            for i in 1..=p {
                pred += coefficients[i - 1] * history[t - i];
            }
            ssr += (history[t] - pred).powi(2);
        }
        let sigma2 = ssr / m as f64;
        Ok(ArModel {
            intercept,
            coefficients,
            sigma2,
            loglik: gaussian_concentrated_loglik(sigma2, m),
            n_residuals: m,
            degenerate,
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn order(&self) -> usize {
        self.coefficients.len()
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Conditional Gaussian log-likelihood at the fitted noise variance.
    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<ParametricForecast> {
        linear_forecast(
            self.intercept,
            &self.coefficients,
            &[],
            self.sigma2,
            history,
            horizon,
        )
    }

    /// View as an ARMA model with no moving-average part.
    pub fn into_arma(self) -> ArmaModel {
        ArmaModel {
            intercept: self.intercept,
            ar_coefficients: self.coefficients,
            ma_coefficients: Vec::new(),
            sigma2: self.sigma2,
            loglik: self.loglik,
            n_residuals: self.n_residuals,
            converged: true,
            degenerate: self.degenerate,
        }
    }
}

/// Mixed autoregressive moving-average model fitted by conditional sum of
/// squares.
#[derive(Debug, Clone, PartialEq)]
pub struct ArmaModel {
    intercept: f64,
    ar_coefficients: Vec<f64>,
    ma_coefficients: Vec<f64>,
    sigma2: f64,
    loglik: f64,
    n_residuals: usize,
    converged: bool,
    degenerate: bool,
}

impl ArmaModel {
    /// Fits by minimizing the conditional sum of squared one-step residuals,
    /// initialized by a long-autoregression two-stage regression and refined
    /// with BFGS (iteration cap 500, gradient tolerance 1e-8). With q = 0
    /// this reduces exactly to [`ArModel::fit`].
    ///
    /// Non-convergence at the iteration cap returns the best point found
    /// with `converged()` false rather than an error.
    pub fn fit(history: &[f64], p: usize, q: usize) -> Result<Self> {
        let n = history.len();
        if n <= p + q + 1 {
            return Err(Error::HistoryTooShort {
                needed: p + q + 2,
                got: n,
            });
        }
        if q == 0 {
            return Ok(ArModel::fit(history, p)?.into_arma());
        }

        let init = hannan_rissanen_init(history, p, q);
        let result = bfgs(
            |beta| css_value_grad(history, p, q, beta),
            init,
            500,
            1e-8,
        );
        let intercept = result.x[0];
        let ar = result.x[1..1 + p].to_vec();
        let ma = result.x[1 + p..].to_vec();
        let m = n - p;
        let sigma2 = result.value / m as f64;
        Ok(ArmaModel {
            intercept,
            ar_coefficients: ar,
            ma_coefficients: ma,
            sigma2,
            loglik: gaussian_concentrated_loglik(sigma2, m),
            n_residuals: m,
            converged: result.converged,
            degenerate: false,
        })
    }

    /// Builds a model directly from parameters, e.g. for known processes.
    pub fn from_parts(
        intercept: f64,
        ar_coefficients: Vec<f64>,
        ma_coefficients: Vec<f64>,
        sigma2: f64,
    ) -> Result<Self> {
        let finite = intercept.is_finite()
            && ar_coefficients.iter().all(|v| v.is_finite())
            && ma_coefficients.iter().all(|v| v.is_finite())
            && sigma2.is_finite()
            && sigma2 >= 0.0;
        if !finite {
            return Err(Error::InvalidScale);
        }
        Ok(ArmaModel {
            intercept,
            ar_coefficients,
            ma_coefficients,
            sigma2,
            loglik: f64::NAN,
            n_residuals: 0,
            converged: true,
            degenerate: false,
        })
    }

    pub fn intercept(&self) -> f64 {
        self.intercept
    }

    pub fn ar_coefficients(&self) -> &[f64] {
        &self.ar_coefficients
    }

    pub fn ma_coefficients(&self) -> &[f64] {
        &self.ma_coefficients
    }

    pub fn order(&self) -> (usize, usize) {
        (self.ar_coefficients.len(), self.ma_coefficients.len())
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn loglik(&self) -> f64 {
        self.loglik
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    /// Parameter count for information criteria: intercept, AR terms, MA
    /// terms, and the noise variance.
    pub fn num_params(&self) -> usize {
        self.ar_coefficients.len() + self.ma_coefficients.len() + 2
    }

    /// Corrected information criterion of this fit. The underlying
    /// likelihood conditions on this model's own order, so values are
    /// comparable only between models of equal AR order; order searches use
    /// a shared residual span instead (see [`select_order_aicc_bounded`]).
    pub fn aicc(&self) -> Result<f64> {
        aicc(self.loglik, self.num_params(), self.n_residuals)
    }

    /// True when the AR polynomial has a root on or inside the unit circle
    /// beyond numerical tolerance, so forecasts diverge.
    pub fn is_explosive(&self) -> bool {
        companion_spectral_radius(&self.ar_coefficients) > 1.0 + 1e-10
    }

    /// Mean forecast by iterating the model equation with future residuals
    /// zero; Gaussian scale from the ψ-weight variance recursion. Explosive
    /// fits are forecast anyway with scales capped at 1e6 times the history
    /// standard deviation, and a warning is logged.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<ParametricForecast> {
        linear_forecast(
            self.intercept,
            &self.ar_coefficients,
            &self.ma_coefficients,
            self.sigma2,
            history,
            horizon,
        )
    }
}

/// Corrected Akaike information criterion:
/// −2ℓ + 2k + 2k(k+1)/(n−k−1). Requires n > k + 1.
pub fn aicc(loglik: f64, num_params: usize, num_obs: usize) -> Result<f64> {
    let k = num_params as f64;
    if num_obs <= num_params + 1 {
        return Err(Error::AiccUndefined {
            num_obs,
            num_params,
        });
    }
    let n = num_obs as f64;
    Ok(-2.0 * loglik + 2.0 * k + 2.0 * k * (k + 1.0) / (n - k - 1.0))
}

fn gaussian_concentrated_loglik(sigma2: f64, m: usize) -> f64 {
    // Concentrated conditional Gaussian log-likelihood at σ̂² = SSR/m. The
    // floor keeps a perfect fit from producing -ln(0).
    let s2 = sigma2.max(1e-300);
    -0.5 * m as f64 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0)
}

/// Conditional sum of squares and its gradient in the parameter vector
/// [c, φ_1..φ_p, θ_1..θ_q]. Residuals run over t = p..n with pre-sample
/// residuals fixed at zero.
fn css_value_grad(y: &[f64], p: usize, q: usize, beta: &[f64]) -> (f64, Vec<f64>) {
    let n = y.len();
    let dim = 1 + p + q;
    let c = beta[0];
    let phi = &beta[1..1 + p];
    let theta = &beta[1 + p..];

    // Ring buffers over the last q residuals and their parameter gradients;
    // the gradient ring is a flat (ring × dim) matrix to keep the hot loop
    // allocation-free.
    let ring = q.max(1);
    let mut eps_ring = vec![0.0; ring];
    let mut deps_ring = vec![0.0; ring * dim];
    let mut de = vec![0.0; dim];
    let mut grad = vec![0.0; dim];
    let mut value = 0.0;

    for t in p..n {
        let mut e = y[t] - c;
        de.fill(0.0);
        de[0] = -1.0;
        for i in 1..=p {
            e -= phi[i - 1] * y[t - i];
            de[i] = -y[t - i];
        }
        for j in 1..=q {
            // ε̃_{t−j} is zero before the recursion start.
            if t >= p + j {
                let slot = (t - j) % ring;
                let lag_eps = eps_ring[slot];
                e -= theta[j - 1] * lag_eps;
                de[p + j] -= lag_eps;
                let lag_deps = &deps_ring[slot * dim..(slot + 1) * dim];
                for k in 0..dim {
                    de[k] -= theta[j - 1] * lag_deps[k];
                }
            }
        }
        value += e * e;
        for k in 0..dim {
            grad[k] += 2.0 * e * de[k];
        }
        let slot = t % ring;
        eps_ring[slot] = e;
        deps_ring[slot * dim..(slot + 1) * dim].copy_from_slice(&de);
    }
    (value, grad)
}

/// Sum of squared one-step residuals of a fitted model over the common
/// span t ∈ [sum_start, n). The residual recursion still warms up from the
/// model's own order, so only the summation span is shared; this makes
/// conditional likelihoods comparable across candidate orders.
fn css_residual_ss_from(
    y: &[f64],
    intercept: f64,
    ar: &[f64],
    ma: &[f64],
    sum_start: usize,
) -> f64 {
    let n = y.len();
    let p = ar.len();
    let q = ma.len();
    let ring = q.max(1);
    let mut eps_ring = vec![0.0; ring];
    let mut ss = 0.0;
    for t in p..n {
        let mut e = y[t] - intercept;
        for i in 1..=p {
            e -= ar[i - 1] * y[t - i];
        }
        for j in 1..=q {
            if t >= p + j {
                e -= ma[j - 1] * eps_ring[(t - j) % ring];
            }
        }
        eps_ring[t % ring] = e;
        if t >= sum_start {
            ss += e * e;
        }
    }
    ss
}

/// Two-stage initialization for CSS: a long autoregression supplies proxy
/// residuals, then one regression of y on its own lags and the proxy
/// residual lags gives starting values. Falls back to zeros when the data
/// is too short for the staging.
fn hannan_rissanen_init(y: &[f64], p: usize, q: usize) -> Vec<f64> {
    let n = y.len();
    let dim = 1 + p + q;
    let fallback = || {
        let mut beta = vec![0.0; dim];
        beta[0] = y.iter().sum::<f64>() / n as f64;
        beta
    };

    let m_long = (p + q + 5).max(10).min(n / 4);
    if m_long < 1 || n <= m_long + 1 {
        return fallback();
    }
    let Ok(long_ar) = ArModel::fit(y, m_long) else {
        return fallback();
    };
    let mut proxy = vec![0.0; n];
    for t in m_long..n {
        let mut pred = long_ar.intercept();
        for i in 1..=m_long {
            pred += long_ar.coefficients()[i - 1] * y[t - i];
        }
        proxy[t] = y[t] - pred;
    }

    let t0 = (m_long + q).max(p);
    if n <= t0 + dim + 1 {
        return fallback();
    }
    let rows = n - t0;
    let mut design = DMatrix::<f64>::zeros(rows, dim);
    let mut response = DVector::<f64>::zeros(rows);
    for (r, t) in (t0..n).enumerate() {
        design[(r, 0)] = 1.0;
        for i in 1..=p {
            design[(r, i)] = y[t - i];
        }
        for j in 1..=q {
            design[(r, p + j)] = proxy[t - j];
        }
        response[r] = y[t];
    }
    let gram = design.transpose() * &design;
    let moment = design.transpose() * response;
    match gram.cholesky().map(|ch| ch.solve(&moment)) {
        Some(beta) if beta.iter().all(|v| v.is_finite()) => beta.as_slice().to_vec(),
        _ => fallback(),
    }
}

/// Largest eigenvalue magnitude of the AR companion matrix; zero for p = 0.
fn companion_spectral_radius(ar: &[f64]) -> f64 {
    let p = ar.len();
    if p == 0 {
        return 0.0;
    }
    let mut companion = DMatrix::<f64>::zeros(p, p);
    for (j, &phi) in ar.iter().enumerate() {
        companion[(0, j)] = phi;
    }
    for i in 1..p {
        companion[(i, i - 1)] = 1.0;
    }
    companion
        .complex_eigenvalues()
        .iter()
        .fold(0.0f64, |m, ev| m.max(ev.norm()))
}

pub(crate) fn spectral_radius_of_ar(ar: &[f64]) -> f64 {
    companion_spectral_radius(ar)
}

/// ψ-weights of the MA(∞) expansion: ψ_0 = 1 and
/// ψ_j = θ_j + Σ_{i≤min(j,p)} φ_i ψ_{j−i}.
fn psi_weights(ar: &[f64], ma: &[f64], count: usize) -> Vec<f64> {
    let mut psi = Vec::with_capacity(count);
    if count == 0 {
        return psi;
    }
    psi.push(1.0);
    for j in 1..count {
        let mut w = if j <= ma.len() { ma[j - 1] } else { 0.0 };
        for (i, &phi) in ar.iter().enumerate().take(j) {
            w += phi * psi[j - 1 - i];
        }
        psi.push(w);
    }
    psi
}

fn linear_forecast(
    intercept: f64,
    ar: &[f64],
    ma: &[f64],
    sigma2: f64,
    history: &[f64],
    horizon: usize,
) -> Result<ParametricForecast> {
    let p = ar.len();
    let q = ma.len();
    let n = history.len();
    if horizon == 0 {
        return Err(Error::EmptyTask);
    }
    let needed = p.max(q).max(1);
    if n < needed {
        return Err(Error::HistoryTooShort { needed, got: n });
    }

    // In-sample residuals give the MA terms their starting values.
    let mut eps = vec![0.0; n];
    for t in p..n {
        let mut e = history[t] - intercept;
        for i in 1..=p {
            e -= ar[i - 1] * history[t - i];
        }
        for j in 1..=q {
            if t >= p + j {
                e -= ma[j - 1] * eps[t - j];
            }
        }
        eps[t] = e;
    }

    // Mean recursion with future residuals zero.
    let mut location = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let mut pred = intercept;
        for i in 1..=p {
            let k = n + s - i;
            pred += ar[i - 1] * if k < n { history[k] } else { location[k - n] };
        }
        for j in 1..=q {
            if n + s >= j {
                let k = n + s - j;
                if k < n {
                    pred += ma[j - 1] * eps[k];
                }
            }
        }
        location.push(pred);
    }

    // Variance recursion; the cap keeps explosive fits finite.
    let explosive = companion_spectral_radius(ar) > 1.0 + 1e-10;
    let history_std = sample_std(history);
    let cap = if history_std > 0.0 {
        1e6 * history_std
    } else {
        1e6
    };
    let psi = psi_weights(ar, ma, horizon);
    let mut cumulative = 0.0;
    let mut scale = Vec::with_capacity(horizon);
    let mut capped = false;
    for &w in psi.iter().take(horizon) {
        cumulative += w * w;
        let s = (sigma2 * cumulative).sqrt();
        if s > cap {
            capped = true;
            scale.push(cap);
        } else {
            scale.push(s);
        }
    }
    if explosive || capped {
        log::warn!(
            "forecasting from a non-stationary AR polynomial (spectral radius {:.4}); scales capped at {:.3e}",
            companion_spectral_radius(ar),
            cap
        );
    }
    ParametricForecast::gaussian(location, scale)
}

fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    (ss / (n - 1.0)).sqrt()
}

/// Which criterion an order search optimized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionCriterion {
    Aicc,
    ValidationMwql,
}

/// Search transcript: every order attempted with its criterion value, and
/// the winner.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelectionReport {
    pub tried: Vec<(usize, usize, f64)>,
    pub chosen: (usize, usize),
    pub criterion: SelectionCriterion,
}

impl OrderSelectionReport {
    fn argmin(tried: &[(usize, usize, f64)]) -> Option<(usize, usize)> {
        tried
            .iter()
            .min_by(|a, b| {
                a.2.partial_cmp(&b.2)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
                    .then(a.1.cmp(&b.1))
            })
            .map(|&(p, q, _)| (p, q))
    }
}

/// Stepwise neighborhood search over (p, q) minimizing AICC, starting from
/// (1, 0) and expanding ±1 in each order around the incumbent until no
/// neighbor improves or `max_models` fits have been attempted.
pub fn select_order_aicc(series: &[f64], max_models: usize) -> Result<OrderSelectionReport> {
    select_order_aicc_bounded(series, max_models, 30, 30)
}

/// AICC stepwise search with explicit order ceilings; `max_q = 0` restricts
/// the search to pure AR models.
///
/// Candidates are compared by AICC of the conditional likelihood evaluated
/// over a residual span shared by all of them (the first `max_p`
/// observations are excluded for every candidate). Per-model conditional
/// likelihoods condition on that model's own order, so their sample counts
/// differ and comparing them directly would bias the search toward larger
/// orders.
pub fn select_order_aicc_bounded(
    series: &[f64],
    max_models: usize,
    max_p: usize,
    max_q: usize,
) -> Result<OrderSelectionReport> {
    select_order_aicc_from(series, (1, 0), max_models, max_p, max_q)
}

/// AICC stepwise search seeded at an arbitrary starting order, for callers
/// that warm-start from a previously selected pure-AR order. The start is
/// clamped to the (possibly clipped) order ceilings.
pub fn select_order_aicc_from(
    series: &[f64],
    start: (usize, usize),
    max_models: usize,
    max_p: usize,
    max_q: usize,
) -> Result<OrderSelectionReport> {
    let n = series.len();
    // Shared summation start; clipped so short series keep enough rows.
    let max_p = max_p.min(n / 4);
    let t0 = max_p;
    let m0 = n.saturating_sub(t0);

    let mut tried: Vec<(usize, usize, f64)> = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    let mut attempts = 0usize;

    let evaluate = |p: usize,
                    q: usize,
                    tried: &mut Vec<(usize, usize, f64)>,
                    seen: &mut std::collections::BTreeSet<(usize, usize)>,
                    attempts: &mut usize| {
        if !seen.insert((p, q)) || *attempts >= max_models {
            return;
        }
        *attempts += 1;
        if let Ok(model) = ArmaModel::fit(series, p, q) {
            let ss = css_residual_ss_from(
                series,
                model.intercept(),
                model.ar_coefficients(),
                model.ma_coefficients(),
                t0,
            );
            let loglik = gaussian_concentrated_loglik(ss / m0 as f64, m0);
            if let Ok(value) = aicc(loglik, model.num_params(), m0) {
                if value.is_finite() {
                    tried.push((p, q, value));
                }
            }
        }
    };

    let mut start = (start.0.min(max_p).max(1.min(max_p)), start.1.min(max_q));
    evaluate(start.0, start.1, &mut tried, &mut seen, &mut attempts);
    if tried.is_empty() {
        // A warm start can name an order that fails to fit; retreat to the
        // smallest model before giving up.
        start = (1usize.min(max_p), 0);
        evaluate(start.0, start.1, &mut tried, &mut seen, &mut attempts);
    }
    if tried.is_empty() {
        return Err(Error::HistoryTooShort {
            needed: 4,
            got: series.len(),
        });
    }
    let mut incumbent = start;

    loop {
        for dp in [-1i64, 0, 1] {
            for dq in [-1i64, 0, 1] {
                if dp == 0 && dq == 0 {
                    continue;
                }
                let p = incumbent.0 as i64 + dp;
                let q = incumbent.1 as i64 + dq;
                if p < 0 || q < 0 || p > max_p as i64 || q > max_q as i64 {
                    continue;
                }
                evaluate(p as usize, q as usize, &mut tried, &mut seen, &mut attempts);
            }
        }
        let best = OrderSelectionReport::argmin(&tried).expect("tried nonempty");
        if best == incumbent || attempts >= max_models {
            incumbent = best;
            break;
        }
        incumbent = best;
    }

    Ok(OrderSelectionReport {
        tried,
        chosen: incumbent,
        criterion: SelectionCriterion::Aicc,
    })
}

/// Forward search over pure AR orders p = 1, 2, … scored by validation
/// MWQL: each candidate is fitted on `train` only and forecasts every
/// validation window from its stored history. The search stops after
/// `patience` consecutive orders without improvement, when the training
/// data can no longer support the order, or when the order would exceed the
/// window history length.
pub fn select_order_valql(
    train: &[f64],
    val_windows: &[WindowSample],
    task: &ForecastTask,
    patience: usize,
) -> Result<OrderSelectionReport> {
    if val_windows.is_empty() {
        return Err(Error::EmptyValidationSet);
    }
    let mut tried = Vec::new();
    let mut best: Option<(usize, f64)> = None;
    let mut since_improvement = 0usize;

    for p in 1.. {
        if train.len() <= p + 1 || p > task.history_length() {
            break;
        }
        let Ok(model) = ArModel::fit(train, p) else {
            break;
        };
        let mut batch = EvalBatch::new(task.quantile_levels().to_vec())?;
        let mut failed = false;
        for window in val_windows {
            match model.forecast(&window.history, task.horizon()) {
                Ok(f) => batch.push(window.target.clone(), &Forecast::from(f), None)?,
                Err(_) => {
                    failed = true;
                    break;
                }
            }
        }
        if failed {
            break;
        }
        let Ok(score) = mwql(&batch) else {
            break;
        };
        tried.push((p, 0, score));
        match best {
            Some((_, best_score)) if score >= best_score => {
                since_improvement += 1;
                if since_improvement >= patience {
                    break;
                }
            }
            _ => {
                best = Some((p, score));
                since_improvement = 0;
            }
        }
    }

    let Some((chosen_p, _)) = best else {
        return Err(Error::HistoryTooShort {
            needed: 3,
            got: train.len(),
        });
    };
    Ok(OrderSelectionReport {
        tried,
        chosen: (chosen_p, 0),
        criterion: SelectionCriterion::ValidationMwql,
    })
}
