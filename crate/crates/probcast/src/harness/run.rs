//! Benchmark execution: every configured (session, model) pair runs as an
//! independent parallel job covering all horizons and seed replicates; the
//! results are reduced single-threaded in configuration order, so the
//! report is identical for identical configs and seeds.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use crate::arhmm::{em_fit, select_arhmm_with, SelectionGrid, EM_TOL};
use crate::arma::{
    select_order_aicc_bounded, select_order_aicc_from, select_order_valql, ArModel, ArmaModel,
};
use crate::baseline::{AverageModel, NaiveModel};
use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::harness::config::{BenchmarkConfig, ModelSpec};
use crate::harness::ingest::ingest_csv;
use crate::harness::report::{
    config_hash, software_version, utc_timestamp, AggregateRow, BenchmarkReport, CellResult,
    CrossingPoint, FailureRecord, RelativeRow, ReportMetadata, SeedResult, SelectionSummary,
    SessionSummary, SignificanceRow, SCHEMA_VERSION,
};
use crate::metrics::{compute_report, mwql, paired_t_one_sided, EvalBatch, MetricReport, INTERVAL_ALPHA};
use crate::neural::{
    random_search, train_dlinear, train_mlp, CandidateConfig, DLinearConfig, DirectForecaster,
    HeadKind, MlpConfig, SearchSpace, TraceRecord, TrainConfig, TrainReport,
};
use crate::rng::{derive_seed, derive_seed_path};
use crate::series::{
    chronological_split, make_eval_windows, make_training_windows, ForecastTask, SplitIndices,
    TimeSeries, WindowSample,
};
use crate::synth::generate;
use crate::theta::{select_theta_variant, theta_forecast, ThetaVariant};

/// Fraction of the average baseline's per-step loss that defines the
/// crossing step.
pub const LOSS_THRESHOLD: f64 = 0.95;

/// First step where the loss reaches `LOSS_THRESHOLD` times the average
/// baseline's loss, or None if it never does. Curves must align.
pub fn threshold_crossing(per_step_loss: &[f64], average_loss: &[f64]) -> Option<usize> {
    assert_eq!(
        per_step_loss.len(),
        average_loss.len(),
        "per-step curves must have equal length"
    );
    per_step_loss
        .iter()
        .zip(average_loss)
        .position(|(loss, avg)| *loss >= LOSS_THRESHOLD * avg)
}

/// The report plus artifacts that live in separate files: training traces
/// and fitted checkpoints, both from each stochastic cell's median seed.
#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub report: BenchmarkReport,
    pub n_seeds: usize,
    pub traces: Vec<(String, Vec<TraceRecord>)>,
    pub checkpoints: Vec<(String, DirectForecaster)>,
}

struct SessionData {
    series: TimeSeries,
    split: SplitIndices,
    training_std: Option<f64>,
}

#[derive(Default)]
struct JobOutput {
    cells: Vec<CellResult>,
    failures: Vec<FailureRecord>,
    traces: Vec<(String, Vec<TraceRecord>)>,
    checkpoints: Vec<(String, DirectForecaster)>,
}

/// Runs the whole benchmark grid. Deterministic given the config; partial
/// failures are recorded in the report, and only a session where every
/// model failed aborts the run.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<RunArtifacts> {
    config.validate()?;
    let sessions = load_sessions(config)?;

    let jobs: Vec<(usize, usize)> = (0..sessions.len())
        .flat_map(|s| (0..config.models.len()).map(move |m| (s, m)))
        .collect();
    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|&(s, m)| {
            let id = sessions[s].series.id();
            let name = config.models[m].name();
            log::info!("start session={id} model={name}");
            let out = run_job(config, &sessions[s], &config.models[m], s as u64, m as u64);
            log::info!(
                "done session={id} model={name} cells={} failures={}",
                out.cells.len(),
                out.failures.len()
            );
            out
        })
        .collect();

    let mut cells = Vec::new();
    let mut failures = Vec::new();
    let mut traces = Vec::new();
    let mut checkpoints = Vec::new();
    for out in outputs {
        cells.extend(out.cells);
        failures.extend(out.failures);
        traces.extend(out.traces);
        checkpoints.extend(out.checkpoints);
    }

    for data in &sessions {
        if !cells.iter().any(|c| c.session == data.series.id()) {
            return Err(Error::AllModelsFailed {
                session: data.series.id().to_string(),
            });
        }
    }

    let summaries: Vec<SessionSummary> = sessions
        .iter()
        .map(|d| SessionSummary {
            id: d.series.id().to_string(),
            length: d.series.len(),
            sampling_rate: d.series.sampling_rate(),
            split: d.split,
            training_std: d.training_std,
        })
        .collect();

    attach_crossings(&mut cells, &summaries);
    let aggregates = aggregate_rows(config, &cells);
    let relative_mwql = relative_rows(config, &summaries, &cells);
    let significance = significance_rows(config, &summaries, &cells);

    let report = BenchmarkReport {
        schema_version: SCHEMA_VERSION,
        generated_at: utc_timestamp(),
        config_hash: config_hash(config),
        global_seed: config.global_seed,
        software_version: software_version(),
        metadata: ReportMetadata {
            session_aggregation: "unweighted mean across sessions".into(),
            seed_aggregation: "std across seed replicates within a session, then mean across sessions".into(),
            median_seed_rule: "lower median by aggregate weighted quantile loss".into(),
            interval_alpha: INTERVAL_ALPHA,
            loss_threshold: LOSS_THRESHOLD,
            notes: vec![
                "deterministic models run one collapsed seed replicate regardless of n_seeds".into(),
                "per-step curves, traces, and checkpoints come from each cell's median seed".into(),
                "significance tests compare per-session seed means against ar_valql, one-sided".into(),
            ],
        },
        sessions: summaries,
        cells,
        failures,
        aggregates,
        relative_mwql,
        significance,
    };
    Ok(RunArtifacts {
        report,
        n_seeds: config.n_seeds,
        traces,
        checkpoints,
    })
}

fn load_sessions(config: &BenchmarkConfig) -> Result<Vec<SessionData>> {
    let mut all: Vec<TimeSeries> = Vec::new();
    for spec in &config.sessions {
        if let Some(path) = &spec.csv {
            all.extend(ingest_csv(
                path,
                spec.time_column.as_deref(),
                config.sampling_rate,
            )?);
        } else if let Some(generator) = &spec.generator {
            let raw = generate(generator)?;
            let id = spec.id.clone().unwrap_or_else(|| raw.id().to_string());
            all.push(TimeSeries::with_sampling_rate(
                id,
                raw.values().to_vec(),
                config.sampling_rate,
            )?);
        }
    }
    let mut seen = BTreeSet::new();
    for series in &all {
        if !seen.insert(series.id().to_string()) {
            return Err(Error::Config {
                reason: format!("duplicate session id `{}`", series.id()),
            });
        }
    }
    all.into_iter()
        .map(|series| {
            let split = chronological_split(
                &series,
                (config.split[0], config.split[1], config.split[2]),
            )?;
            let training_std =
                sample_std(&series.values()[..split.train_end]).filter(|s| *s > 0.0);
            Ok(SessionData {
                series,
                split,
                training_std,
            })
        })
        .collect()
}

fn sample_std(values: &[f64]) -> Option<f64> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    Some((ss / (n - 1.0)).sqrt())
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn sample_std_of(values: &[f64]) -> Option<f64> {
    sample_std(values)
}

/// Context shared by every model family runner within one job.
struct JobCtx<'a> {
    config: &'a BenchmarkConfig,
    session: &'a SessionData,
    name: String,
    s_idx: u64,
    m_idx: u64,
}

impl<'a> JobCtx<'a> {
    fn id(&self) -> &str {
        self.session.series.id()
    }

    fn values(&self) -> &[f64] {
        self.session.series.values()
    }

    fn train(&self) -> &[f64] {
        &self.values()[..self.session.split.train_end]
    }

    fn train_val(&self) -> &[f64] {
        &self.values()[..self.session.split.val_end]
    }

    fn levels(&self) -> &[f64] {
        &self.config.quantile_levels
    }

    fn task(&self, history: usize, horizon: usize) -> Result<ForecastTask> {
        ForecastTask::with_levels(history, horizon, self.config.quantile_levels.clone())
    }

    fn val_windows(&self, task: &ForecastTask) -> Result<Vec<WindowSample>> {
        make_eval_windows(
            &self.session.series,
            self.session.split.train_end,
            self.session.split.val_end,
            task,
        )
    }

    fn test_windows(&self, task: &ForecastTask) -> Result<Vec<WindowSample>> {
        make_eval_windows(
            &self.session.series,
            self.session.split.val_end,
            self.session.split.test_end,
            task,
        )
    }

    fn seed_path(&self, tags: &[u64]) -> u64 {
        let mut full = vec![self.s_idx, self.m_idx];
        full.extend_from_slice(tags);
        derive_seed_path(self.config.global_seed, &full)
    }

    fn failure(&self, horizon: Option<usize>, seed: Option<u64>, err: &Error) -> FailureRecord {
        FailureRecord {
            session: self.id().to_string(),
            model: self.name.clone(),
            horizon,
            seed,
            error: err.to_string(),
        }
    }

    /// Scores one forecast per window against its target.
    fn eval(
        &self,
        windows: &[WindowSample],
        mut forecast: impl FnMut(&WindowSample) -> Result<Forecast>,
    ) -> Result<MetricReport> {
        let mut batch = EvalBatch::new(self.levels().to_vec())?;
        for window in windows {
            batch.push(
                window.target.clone(),
                &forecast(window)?,
                self.session.training_std,
            )?;
        }
        compute_report(&batch)
    }

    fn deterministic_cell(
        &self,
        horizon: usize,
        h_idx: usize,
        history_length: usize,
        selection: Option<SelectionSummary>,
        metrics: MetricReport,
    ) -> CellResult {
        let seed = self.seed_path(&[1 + h_idx as u64, 0]);
        CellResult {
            session: self.id().to_string(),
            model: self.name.clone(),
            horizon,
            history_length,
            seeds_collapsed: true,
            selection,
            mean_mwql: metrics.mwql,
            median_seed: seed,
            seeds: vec![SeedResult { seed, metrics }],
            threshold_crossing: None,
        }
    }
}

/// Seed rows of one stochastic cell: lower-median seed by aggregate loss
/// and the mean loss across replicates. Undefined losses sort last.
fn median_and_mean(seeds: &[SeedResult]) -> (usize, u64, Option<f64>) {
    let mut order: Vec<usize> = (0..seeds.len()).collect();
    order.sort_by(|&a, &b| {
        let ka = seeds[a].metrics.mwql.unwrap_or(f64::INFINITY);
        let kb = seeds[b].metrics.mwql.unwrap_or(f64::INFINITY);
        ka.total_cmp(&kb).then(seeds[a].seed.cmp(&seeds[b].seed))
    });
    let median_pos = order[(order.len() - 1) / 2];
    let finite: Vec<f64> = seeds.iter().filter_map(|s| s.metrics.mwql).collect();
    let mean_mwql = (!finite.is_empty()).then(|| mean(&finite));
    (median_pos, seeds[median_pos].seed, mean_mwql)
}

fn file_stem(session: &str, model: &str, horizon: usize) -> String {
    let clean: String = session
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '-'
            }
        })
        .collect();
    format!("{clean}_{model}_h{horizon}")
}

fn run_job(
    config: &BenchmarkConfig,
    session: &SessionData,
    model: &ModelSpec,
    s_idx: u64,
    m_idx: u64,
) -> JobOutput {
    let ctx = JobCtx {
        config,
        session,
        name: model.name(),
        s_idx,
        m_idx,
    };
    let mut out = JobOutput::default();
    match model {
        ModelSpec::Naive => run_naive(&ctx, &mut out),
        ModelSpec::Average => run_average(&ctx, &mut out),
        ModelSpec::Ar {
            selection,
            history_length,
            max_p,
            max_models,
            patience,
        } => {
            if matches!(selection, crate::harness::config::SelectionKind::Valql) {
                run_ar_valql(&ctx, *history_length, *patience, &mut out);
            } else {
                run_ar_aicc(&ctx, *history_length, *max_p, *max_models, &mut out);
            }
        }
        ModelSpec::Arma {
            history_length,
            max_p,
            max_q,
            max_models,
            ..
        } => run_arma(&ctx, *history_length, *max_p, *max_q, *max_models, &mut out),
        ModelSpec::Theta { history_length, .. } => run_theta(&ctx, *history_length, &mut out),
        ModelSpec::Arhmm {
            history_length,
            n_trajectories,
            states,
            lags,
            em_max_iters,
            ..
        } => run_arhmm(
            &ctx,
            *history_length,
            *n_trajectories,
            states.clone(),
            lags.clone(),
            *em_max_iters,
            &mut out,
        ),
        ModelSpec::Dlinear {
            n_configs,
            search,
            max_epochs,
            batch_size,
            patience,
            ..
        }
        | ModelSpec::Mlp {
            n_configs,
            search,
            max_epochs,
            batch_size,
            patience,
            ..
        } => {
            let space = search.clone().unwrap_or_else(|| model.default_search_space());
            run_neural(
                &ctx,
                matches!(model, ModelSpec::Mlp { .. }),
                space,
                *n_configs,
                *max_epochs,
                *batch_size,
                *patience,
                &mut out,
            );
        }
    }
    out
}

fn run_naive(ctx: &JobCtx, out: &mut JobOutput) {
    let fitted = match NaiveModel::fit(ctx.train()) {
        Ok(m) => m,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(1, horizon)?;
            let windows = ctx.test_windows(&task)?;
            ctx.eval(&windows, |w| {
                let last = *w.history.last().expect("history nonempty");
                Ok(Forecast::from(fitted.forecast(last, horizon)?))
            })
        })();
        match result {
            Ok(metrics) => out
                .cells
                .push(ctx.deterministic_cell(horizon, h_idx, 1, None, metrics)),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_average(ctx: &JobCtx, out: &mut JobOutput) {
    let fitted = match AverageModel::fit(ctx.train()) {
        Ok(m) => m,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(1, horizon)?;
            let windows = ctx.test_windows(&task)?;
            let forecast = Forecast::from(fitted.forecast(horizon)?);
            ctx.eval(&windows, |_| Ok(forecast.clone()))
        })();
        match result {
            Ok(metrics) => out
                .cells
                .push(ctx.deterministic_cell(horizon, h_idx, 1, None, metrics)),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_ar_valql(ctx: &JobCtx, history_length: usize, patience: usize, out: &mut JobOutput) {
    let h_eff = history_length.min(ctx.session.split.train_end);
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(h_eff, horizon)?;
            let val_windows = ctx.val_windows(&task)?;
            let selection = select_order_valql(ctx.train(), &val_windows, &task, patience)?;
            let p = selection.chosen.0;
            let fitted = ArModel::fit(ctx.train(), p)?;
            let windows = ctx.test_windows(&task)?;
            let metrics = ctx.eval(&windows, |w| {
                Ok(Forecast::from(fitted.forecast(&w.history, horizon)?))
            })?;
            Ok((
                SelectionSummary::Order {
                    p,
                    q: 0,
                    criterion: "validation_mwql".into(),
                    models_tried: selection.tried.len(),
                },
                metrics,
            ))
        })();
        match result {
            Ok((selection, metrics)) => out.cells.push(ctx.deterministic_cell(
                horizon,
                h_idx,
                h_eff,
                Some(selection),
                metrics,
            )),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_ar_aicc(
    ctx: &JobCtx,
    history_length: usize,
    max_p: usize,
    max_models: usize,
    out: &mut JobOutput,
) {
    let h_eff = history_length.min(ctx.session.split.train_end);
    let shared = (|| {
        let selection =
            select_order_aicc_bounded(ctx.train_val(), max_models, max_p.min(h_eff), 0)?;
        let p = selection.chosen.0;
        let fitted = ArmaModel::fit(ctx.train_val(), p, 0)?;
        Ok((selection, fitted))
    })();
    let (selection, fitted) = match shared {
        Ok(pair) => pair,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(h_eff, horizon)?;
            let windows = ctx.test_windows(&task)?;
            ctx.eval(&windows, |w| {
                Ok(Forecast::from(fitted.forecast(&w.history, horizon)?))
            })
        })();
        match result {
            Ok(metrics) => out.cells.push(ctx.deterministic_cell(
                horizon,
                h_idx,
                h_eff,
                Some(SelectionSummary::Order {
                    p: selection.chosen.0,
                    q: 0,
                    criterion: "aicc".into(),
                    models_tried: selection.tried.len(),
                }),
                metrics,
            )),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_arma(
    ctx: &JobCtx,
    history_length: usize,
    max_p: usize,
    max_q: usize,
    max_models: usize,
    out: &mut JobOutput,
) {
    let h_eff = history_length.min(ctx.session.split.train_end);
    let shared = (|| {
        // Warm start the two-dimensional search at the best pure-AR order.
        let ar_only = select_order_aicc_bounded(ctx.train_val(), max_models, max_p.min(h_eff), 0)?;
        let selection = select_order_aicc_from(
            ctx.train_val(),
            (ar_only.chosen.0, 0),
            max_models,
            max_p.min(h_eff),
            max_q.min(h_eff),
        )?;
        let (p, q) = selection.chosen;
        let fitted = ArmaModel::fit(ctx.train_val(), p, q)?;
        Ok((selection, fitted))
    })();
    let (selection, fitted) = match shared {
        Ok(pair) => pair,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(h_eff, horizon)?;
            let windows = ctx.test_windows(&task)?;
            ctx.eval(&windows, |w| {
                Ok(Forecast::from(fitted.forecast(&w.history, horizon)?))
            })
        })();
        match result {
            Ok(metrics) => out.cells.push(ctx.deterministic_cell(
                horizon,
                h_idx,
                h_eff,
                Some(SelectionSummary::Order {
                    p: selection.chosen.0,
                    q: selection.chosen.1,
                    criterion: "aicc".into(),
                    models_tried: selection.tried.len(),
                }),
                metrics,
            )),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_theta(ctx: &JobCtx, history_length: usize, out: &mut JobOutput) {
    let h_eff = history_length.min(ctx.session.split.train_end);
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let result = (|| {
            let task = ctx.task(h_eff, horizon)?;
            let val_windows = ctx.val_windows(&task)?;
            let variant = select_theta_variant(&val_windows, &task)?;
            let windows = ctx.test_windows(&task)?;
            let metrics = ctx.eval(&windows, |w| {
                Ok(Forecast::from(theta_forecast(&w.history, horizon, variant)?))
            })?;
            Ok((variant, metrics))
        })();
        match result {
            Ok((variant, metrics)) => out.cells.push(ctx.deterministic_cell(
                horizon,
                h_idx,
                h_eff,
                Some(SelectionSummary::ThetaVariant {
                    variant: match variant {
                        ThetaVariant::Standard => "standard".into(),
                        ThetaVariant::Optimized => "optimized".into(),
                    },
                }),
                metrics,
            )),
            Err(e) => out.failures.push(ctx.failure(Some(horizon), None, &e)),
        }
    }
}

fn run_arhmm(
    ctx: &JobCtx,
    history_length: usize,
    n_trajectories: usize,
    states: Option<Vec<usize>>,
    lags: Option<Vec<usize>>,
    em_max_iters: usize,
    out: &mut JobOutput,
) {
    let h_eff = history_length.min(ctx.session.split.train_end);
    let defaults = SelectionGrid::default();
    let grid = SelectionGrid {
        states: states.unwrap_or(defaults.states),
        lags: lags
            .unwrap_or(defaults.lags)
            .into_iter()
            .filter(|l| *l <= h_eff)
            .collect(),
    };
    let shared = (|| {
        let val = &ctx.values()[ctx.session.split.train_end..ctx.session.split.val_end];
        select_arhmm_with(
            ctx.train(),
            val,
            &grid,
            ctx.seed_path(&[0]),
            em_max_iters,
            EM_TOL,
        )
    })();
    let selection = match shared {
        Ok(sel) => sel,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };
    let summary = SelectionSummary::StateSpace {
        num_states: selection.num_states,
        num_lags: selection.num_lags,
        fallback_argmax: selection.fallback_argmax,
    };

    // One EM fit per replicate seed, shared by all horizons.
    let mut cell_seeds: Vec<Vec<SeedResult>> = vec![Vec::new(); ctx.config.horizons.len()];
    for k in 0..ctx.config.n_seeds {
        let fit_seed = ctx.seed_path(&[1, k as u64]);
        let fitted = match em_fit(
            ctx.train(),
            selection.num_states,
            selection.num_lags,
            fit_seed,
            em_max_iters,
            EM_TOL,
        ) {
            Ok(m) => m,
            Err(e) => {
                for &h in &ctx.config.horizons {
                    out.failures.push(ctx.failure(Some(h), Some(fit_seed), &e));
                }
                continue;
            }
        };
        for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
            let window_seed_base = ctx.seed_path(&[2 + h_idx as u64, k as u64]);
            let result = (|| {
                let task = ctx.task(h_eff, horizon)?;
                let windows = ctx.test_windows(&task)?;
                let mut w_idx = 0u64;
                ctx.eval(&windows, |w| {
                    let seed = derive_seed(window_seed_base, w_idx);
                    w_idx += 1;
                    Ok(Forecast::from(fitted.sample_forecast(
                        &w.history,
                        horizon,
                        n_trajectories,
                        seed,
                    )?))
                })
            })();
            match result {
                Ok(metrics) => cell_seeds[h_idx].push(SeedResult {
                    seed: fit_seed,
                    metrics,
                }),
                Err(e) => out
                    .failures
                    .push(ctx.failure(Some(horizon), Some(fit_seed), &e)),
            }
        }
    }
    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let seeds = std::mem::take(&mut cell_seeds[h_idx]);
        if seeds.is_empty() {
            continue;
        }
        let (_, median_seed, mean_mwql) = median_and_mean(&seeds);
        out.cells.push(CellResult {
            session: ctx.id().to_string(),
            model: ctx.name.clone(),
            horizon,
            history_length: h_eff,
            seeds_collapsed: false,
            selection: Some(summary.clone()),
            seeds,
            median_seed,
            mean_mwql,
            threshold_crossing: None,
        });
    }
}

fn param(candidate: &CandidateConfig, key: &str, default: f64) -> f64 {
    candidate.values.get(key).copied().unwrap_or(default)
}

fn param_usize(candidate: &CandidateConfig, key: &str, default: usize) -> usize {
    param(candidate, key, default as f64).round() as usize
}

/// Conditioning length for a neural candidate: the context factor times the
/// horizon, clipped so at least one training window fits.
fn neural_history(candidate: &CandidateConfig, horizon: usize, train_end: usize) -> Result<usize> {
    let cap = train_end
        .checked_sub(horizon)
        .filter(|c| *c >= 1)
        .ok_or(Error::NoWindowFits {
            start: 0,
            end: train_end,
            horizon,
        })?;
    let factor = param(candidate, "context_factor", 2.0);
    let raw = (factor * horizon as f64).round() as usize;
    Ok(raw.clamp(1, cap))
}

fn dlinear_config_of(
    candidate: &CandidateConfig,
    horizon: usize,
    train_end: usize,
) -> Result<DLinearConfig> {
    let history_length = neural_history(candidate, horizon, train_end)?;
    let mut kernel_size = param_usize(candidate, "kernel_size", 25).min(history_length);
    if kernel_size % 2 == 0 {
        kernel_size -= 1;
    }
    Ok(DLinearConfig {
        history_length,
        horizon,
        feature_dim: param_usize(candidate, "feature_dim", 1),
        kernel_size: kernel_size.max(1),
        head: HeadKind::StudentT,
    })
}

fn mlp_config_of(
    candidate: &CandidateConfig,
    horizon: usize,
    train_end: usize,
) -> Result<MlpConfig> {
    let history_length = neural_history(candidate, horizon, train_end)?;
    let width = param_usize(candidate, "hidden_width", 64).max(1);
    let blocks = param_usize(candidate, "num_blocks", 1).max(1);
    Ok(MlpConfig {
        history_length,
        horizon,
        feature_dim: param_usize(candidate, "feature_dim", 1),
        hidden_widths: vec![width; blocks],
        residual: vec![true; blocks],
        dropout: param(candidate, "dropout", 0.0),
        head: HeadKind::StudentT,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_neural(
    ctx: &JobCtx,
    is_mlp: bool,
    space: BTreeMap<String, Vec<f64>>,
    n_configs: usize,
    max_epochs: usize,
    batch_size: usize,
    patience: usize,
    out: &mut JobOutput,
) {
    let train_end = ctx.session.split.train_end;
    let space = match SearchSpace::new(space) {
        Ok(s) => s,
        Err(e) => {
            for &h in &ctx.config.horizons {
                out.failures.push(ctx.failure(Some(h), None, &e));
            }
            return;
        }
    };

    let train_one = |candidate: &CandidateConfig,
                     horizon: usize,
                     seed: u64|
     -> Result<(DirectForecaster, TrainReport, ForecastTask)> {
        let train_config = TrainConfig {
            learning_rate: param(candidate, "learning_rate", 3e-3),
            batch_size,
            max_epochs,
            early_stop_patience: patience,
            seed,
        };
        if is_mlp {
            let config = mlp_config_of(candidate, horizon, train_end)?;
            let task = ctx.task(config.history_length, horizon)?;
            let train_windows = make_training_windows(ctx.values(), train_end, &task);
            let val_windows = ctx.val_windows(&task)?;
            let (model, report) = train_mlp(&config, &train_windows, &val_windows, &train_config)?;
            Ok((DirectForecaster::Mlp(model), report, task))
        } else {
            let config = dlinear_config_of(candidate, horizon, train_end)?;
            let task = ctx.task(config.history_length, horizon)?;
            let train_windows = make_training_windows(ctx.values(), train_end, &task);
            let val_windows = ctx.val_windows(&task)?;
            let (model, report) =
                train_dlinear(&config, &train_windows, &val_windows, &train_config)?;
            Ok((DirectForecaster::DLinear(model), report, task))
        }
    };

    for (h_idx, &horizon) in ctx.config.horizons.iter().enumerate() {
        let search_seed = ctx.seed_path(&[0, h_idx as u64]);
        let searched = random_search(&space, n_configs, search_seed, |candidate, seed| {
            let (model, _, task) = train_one(candidate, horizon, seed)?;
            let val_windows = ctx.val_windows(&task)?;
            let mut batch = EvalBatch::new(ctx.levels().to_vec())?;
            for window in &val_windows {
                batch.push(window.target.clone(), &model.forecast(&window.history)?, None)?;
            }
            mwql(&batch)
        });
        let searched = match searched {
            Ok(outcome) => outcome,
            Err(e) => {
                out.failures.push(ctx.failure(Some(horizon), None, &e));
                continue;
            }
        };
        let best = match searched.best_or_err() {
            Ok(best) => best.clone(),
            Err(e) => {
                out.failures.push(ctx.failure(Some(horizon), None, &e));
                continue;
            }
        };
        let evaluated = searched.leaderboard.len();

        let mut seeds: Vec<SeedResult> = Vec::new();
        let mut kept: Vec<(u64, TrainReport, DirectForecaster)> = Vec::new();
        let mut h_used = 0usize;
        for k in 0..ctx.config.n_seeds {
            let rep_seed = ctx.seed_path(&[1 + h_idx as u64, k as u64]);
            let result = (|| {
                let (model, report, task) = train_one(&best, horizon, rep_seed)?;
                h_used = task.history_length();
                let windows = ctx.test_windows(&task)?;
                let metrics = ctx.eval(&windows, |w| model.forecast(&w.history))?;
                Ok((model, report, metrics))
            })();
            match result {
                Ok((model, report, metrics)) => {
                    seeds.push(SeedResult {
                        seed: rep_seed,
                        metrics,
                    });
                    kept.push((rep_seed, report, model));
                }
                Err(e) => out
                    .failures
                    .push(ctx.failure(Some(horizon), Some(rep_seed), &e)),
            }
        }
        if seeds.is_empty() {
            continue;
        }
        let (median_pos, median_seed, mean_mwql) = median_and_mean(&seeds);
        let (_, report, model) = kept.swap_remove(
            kept.iter()
                .position(|(s, _, _)| *s == seeds[median_pos].seed)
                .expect("median seed kept"),
        );
        let stem = file_stem(ctx.id(), &ctx.name, horizon);
        out.traces.push((stem.clone(), report.trace));
        out.checkpoints.push((stem, model));
        out.cells.push(CellResult {
            session: ctx.id().to_string(),
            model: ctx.name.clone(),
            horizon,
            history_length: h_used,
            seeds_collapsed: false,
            selection: Some(SelectionSummary::Hyperparameters {
                chosen: best.values.clone(),
                evaluated,
            }),
            seeds,
            median_seed,
            mean_mwql,
            threshold_crossing: None,
        });
    }
}

/// Fills each cell's crossing step against the average baseline's
/// median-seed curve for the same session and horizon.
fn attach_crossings(cells: &mut [CellResult], sessions: &[SessionSummary]) {
    let rates: BTreeMap<String, f64> = sessions
        .iter()
        .map(|s| (s.id.clone(), s.sampling_rate))
        .collect();
    let mut average: BTreeMap<(String, usize), Vec<f64>> = BTreeMap::new();
    for cell in cells.iter() {
        if cell.model != "average" {
            continue;
        }
        if let Some(curve) = median_curve(cell) {
            average.insert((cell.session.clone(), cell.horizon), curve);
        }
    }
    for cell in cells.iter_mut() {
        let Some(avg) = average.get(&(cell.session.clone(), cell.horizon)) else {
            continue;
        };
        let Some(curve) = median_curve(cell) else {
            continue;
        };
        if curve.len() != avg.len() {
            continue;
        }
        cell.threshold_crossing = threshold_crossing(&curve, avg).map(|step| CrossingPoint {
            step,
            seconds: step as f64 / rates.get(&cell.session).copied().unwrap_or(1.0),
        });
    }
}

/// The median seed's per-step loss curve, if every step is defined.
fn median_curve(cell: &CellResult) -> Option<Vec<f64>> {
    let median = cell.seeds.iter().find(|s| s.seed == cell.median_seed)?;
    median.metrics.mwql_per_step.iter().copied().collect()
}

fn cells_of<'a>(cells: &'a [CellResult], model: &str, horizon: usize) -> Vec<&'a CellResult> {
    cells
        .iter()
        .filter(|c| c.model == model && c.horizon == horizon)
        .collect()
}

/// Mean across sessions of the per-session seed mean of one metric field.
fn session_mean(cells: &[&CellResult], field: impl Fn(&MetricReport) -> Option<f64>) -> Option<f64> {
    let per_session: Vec<f64> = cells
        .iter()
        .filter_map(|cell| {
            let vals: Vec<f64> = cell.seeds.iter().filter_map(|s| field(&s.metrics)).collect();
            (!vals.is_empty()).then(|| mean(&vals))
        })
        .collect();
    (!per_session.is_empty()).then(|| mean(&per_session))
}

fn aggregate_rows(config: &BenchmarkConfig, cells: &[CellResult]) -> Vec<AggregateRow> {
    let mut rows = Vec::new();
    for model in &config.models {
        let name = model.name();
        for &horizon in &config.horizons {
            let group = cells_of(cells, &name, horizon);
            let stds: Vec<f64> = group
                .iter()
                .filter_map(|cell| {
                    let vals: Vec<f64> =
                        cell.seeds.iter().filter_map(|s| s.metrics.mwql).collect();
                    sample_std_of(&vals)
                })
                .collect();
            rows.push(AggregateRow {
                model: name.clone(),
                horizon,
                n_sessions: group.len(),
                mwql_mean: session_mean(&group, |m| m.mwql),
                mwql_std: (!stds.is_empty()).then(|| mean(&stds)),
                msis_mean: session_mean(&group, |m| m.msis),
                mae_mean: session_mean(&group, |m| m.mae),
                mse_mean: session_mean(&group, |m| m.mse),
                median_corr_mean: session_mean(&group, |m| m.median_corr),
                crossing_rate_mean: session_mean(&group, |m| Some(m.crossing_rate)),
            });
        }
    }
    rows
}

fn relative_rows(
    config: &BenchmarkConfig,
    sessions: &[SessionSummary],
    cells: &[CellResult],
) -> Vec<RelativeRow> {
    if !config.models.iter().any(|m| m.name() == "naive") {
        return Vec::new();
    }
    // Denominators: the naive cell's single-seed loss per (session, horizon).
    let mut naive: BTreeMap<(String, usize), f64> = BTreeMap::new();
    for cell in cells.iter().filter(|c| c.model == "naive") {
        if let Some(v) = cell.seeds.first().and_then(|s| s.metrics.mwql) {
            if v > 0.0 {
                naive.insert((cell.session.clone(), cell.horizon), v);
            }
        }
    }
    let mut rows = Vec::new();
    for model in &config.models {
        let name = model.name();
        for &horizon in &config.horizons {
            let mut session_means: Vec<f64> = Vec::new();
            let mut session_stds: Vec<f64> = Vec::new();
            for session in sessions {
                let Some(base) = naive.get(&(session.id.clone(), horizon)) else {
                    continue;
                };
                let Some(cell) = cells.iter().find(|c| {
                    c.model == name && c.horizon == horizon && c.session == session.id
                }) else {
                    continue;
                };
                let ratios: Vec<f64> = cell
                    .seeds
                    .iter()
                    .filter_map(|s| s.metrics.mwql)
                    .map(|v| v / base)
                    .collect();
                if ratios.is_empty() {
                    continue;
                }
                session_means.push(mean(&ratios));
                if let Some(sd) = sample_std_of(&ratios) {
                    session_stds.push(sd);
                }
            }
            rows.push(RelativeRow {
                model: name.clone(),
                horizon,
                n_sessions: session_means.len(),
                mean: (!session_means.is_empty()).then(|| mean(&session_means)),
                std: (!session_stds.is_empty()).then(|| mean(&session_stds)),
            });
        }
    }
    rows
}

fn significance_rows(
    config: &BenchmarkConfig,
    sessions: &[SessionSummary],
    cells: &[CellResult],
) -> Vec<SignificanceRow> {
    const BASELINE: &str = "ar_valql";
    if !config.models.iter().any(|m| m.name() == BASELINE) {
        return Vec::new();
    }
    let value_of = |model: &str, session: &str, horizon: usize| -> Option<f64> {
        cells
            .iter()
            .find(|c| c.model == model && c.session == session && c.horizon == horizon)
            .and_then(|c| c.mean_mwql)
    };
    let mut rows = Vec::new();
    for model in &config.models {
        let name = model.name();
        if name == BASELINE {
            continue;
        }
        for &horizon in &config.horizons {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for session in sessions {
                if let (Some(x), Some(y)) = (
                    value_of(&name, &session.id, horizon),
                    value_of(BASELINE, &session.id, horizon),
                ) {
                    a.push(x);
                    b.push(y);
                }
            }
            if a.len() < 2 {
                continue;
            }
            let Ok(test) = paired_t_one_sided(&a, &b) else {
                continue;
            };
            rows.push(SignificanceRow {
                model: name.clone(),
                horizon,
                baseline: BASELINE.into(),
                t: test.t.is_finite().then_some(test.t),
                p: test.p,
                degenerate: test.degenerate,
                n_sessions: a.len(),
            });
        }
    }
    rows
}
