//! Decomposition-linear forecaster: the standardized history is split into
//! a moving-average trend and a remainder, each mapped by its own dense
//! matrix to per-step features, which the distribution head reads out.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::rng::rng_from_seed;
use crate::series::WindowSample;

use super::{
    moving_average_decompose, train_net, HeadKind, Net, TrainConfig, TrainReport, Trunk,
    TrunkCache,
};

/// Architecture of a decomposition-linear model. `feature_dim` is the
/// per-step feature width the head consumes; 1 gives the plain
/// horizon-by-history linear maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DLinearConfig {
    pub history_length: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    /// Moving-average window; odd, at most `history_length`.
    pub kernel_size: usize,
    pub head: HeadKind,
}

impl DLinearConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_length == 0 || self.horizon == 0 || self.feature_dim == 0 {
            return Err(Error::Config {
                reason: "history length, horizon, and feature dim must be at least 1".into(),
            });
        }
        if self.kernel_size % 2 == 0 || self.kernel_size > self.history_length {
            return Err(Error::InvalidKernel {
                kernel: self.kernel_size,
                len: self.history_length,
            });
        }
        self.head.validate()
    }
}

struct DLinearTrunk {
    history_length: usize,
    horizon: usize,
    feature_dim: usize,
    kernel_size: usize,
}

impl DLinearTrunk {
    fn rows(&self) -> usize {
        self.horizon * self.feature_dim
    }
}

impl Trunk for DLinearTrunk {
    fn history_len(&self) -> usize {
        self.history_length
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn trunk_param_count(&self) -> usize {
        2 * self.rows() * self.history_length
    }

    fn init_trunk(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        let a = (6.0 / (self.history_length + self.rows()) as f64).sqrt();
        for v in out.iter_mut() {
            *v = rng.random_range(-a..a);
        }
    }

    fn features(
        &self,
        params: &[f64],
        hist_std: &[f64],
        _dropout: Option<&mut ChaCha12Rng>,
        cache: Option<&mut TrunkCache>,
    ) -> Vec<f64> {
        let (trend, remainder) = moving_average_decompose(hist_std, self.kernel_size)
            .expect("kernel validated at construction");
        let h = self.history_length;
        let rows = self.rows();
        let (w1, w2) = params.split_at(rows * h);
        let mut features = vec![0.0; rows];
        for r in 0..rows {
            let mut acc = 0.0;
            for c in 0..h {
                acc += w1[r * h + c] * trend[c] + w2[r * h + c] * remainder[c];
            }
            features[r] = acc;
        }
        if let Some(cache) = cache {
            cache.slots = vec![trend, remainder];
        }
        features
    }

    fn backward(&self, _params: &[f64], cache: &TrunkCache, dfeat: &[f64], grad: &mut [f64]) {
        let h = self.history_length;
        let rows = self.rows();
        let trend = &cache.slots[0];
        let remainder = &cache.slots[1];
        let (g1, g2) = grad.split_at_mut(rows * h);
        for r in 0..rows {
            let d = dfeat[r];
            if d == 0.0 {
                continue;
            }
            for c in 0..h {
                g1[r * h + c] += d * trend[c];
                g2[r * h + c] += d * remainder[c];
            }
        }
    }

    fn layout(&self) -> Vec<(String, usize, usize)> {
        vec![
            ("w1".into(), self.rows(), self.history_length),
            ("w2".into(), self.rows(), self.history_length),
        ]
    }
}

/// A fitted decomposition-linear forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct DLinearModel {
    config: DLinearConfig,
    params: Vec<f64>,
}

impl DLinearModel {
    /// Wraps a parameter vector; the length must match the architecture.
    pub fn with_params(config: DLinearConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = net_of(&config).num_params();
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(DLinearModel { config, params })
    }

    pub fn config(&self) -> &DLinearConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Tensor layout (name, rows, cols) covering the parameter vector:
    /// trend map, remainder map, then the head block.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        Self::layout_for(&self.config).expect("config validated at construction")
    }

    pub(crate) fn layout_for(config: &DLinearConfig) -> Result<Vec<(String, usize, usize)>> {
        config.validate()?;
        let net = net_of(config);
        let mut layout = net.trunk.layout();
        layout.push((
            "head".into(),
            1,
            net.head.param_count(config.feature_dim),
        ));
        Ok(layout)
    }

    pub fn forecast(&self, history: &[f64]) -> Result<Forecast> {
        net_of(&self.config).forecast(&self.params, history)
    }
}

fn net_of(config: &DLinearConfig) -> Net<DLinearTrunk> {
    Net {
        trunk: DLinearTrunk {
            history_length: config.history_length,
            horizon: config.horizon,
            feature_dim: config.feature_dim,
            kernel_size: config.kernel_size,
        },
        head: config.head.clone(),
        dropout: 0.0,
    }
}

/// Trains a decomposition-linear model; see the module docs for the
/// optimization scheme.
pub fn train_dlinear(
    config: &DLinearConfig,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    train_config: &TrainConfig,
) -> Result<(DLinearModel, TrainReport)> {
    config.validate()?;
    let net = net_of(config);
    let (params, report) = train_net(&net, train_windows, val_windows, train_config)?;
    Ok((
        DLinearModel {
            config: config.clone(),
            params,
        },
        report,
    ))
}

/// Largest relative disagreement between the analytic gradient and a
/// central finite-difference estimate, taken at a seeded random
/// initialization over a small random batch. A healthy backward pass stays
/// well below 1e-4. Cost is two forward passes per parameter, so keep the
/// instance small.
pub fn gradient_check(config: &DLinearConfig, seed: u64) -> Result<f64> {
    config.validate()?;
    let net = net_of(config);
    let mut rng = rng_from_seed(seed);
    let params = net.init_params(&mut rng);
    let windows: Vec<WindowSample> = (0..4)
        .map(|_| WindowSample {
            history: (0..config.history_length)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5)
                .collect(),
            target: (0..config.horizon)
                .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5)
                .collect(),
            target_start: 0,
        })
        .collect();
    let refs: Vec<&WindowSample> = windows.iter().collect();
    let (_, analytic) = net.batch_loss_grad(&params, &refs, None);

    let mut work = params.clone();
    let step = 1e-5;
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        work[i] = params[i] + step;
        let up = net.mean_loss(&work, &windows);
        work[i] = params[i] - step;
        let down = net.mean_loss(&work, &windows);
        work[i] = params[i];
        let numeric = (up - down) / (2.0 * step);
        let rel = (analytic[i] - numeric).abs() / (analytic[i].abs() + numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::forecast::Forecast;
    use crate::metrics::{mwql, EvalBatch};
    use crate::rng::rng_from_seed;
    use crate::series::default_quantile_levels;
    use approx::assert_abs_diff_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn student_config(h: usize, l: usize, d: usize) -> DLinearConfig {
        DLinearConfig {
            history_length: h,
            horizon: l,
            feature_dim: d,
            kernel_size: 5.min(h | 1),
            head: HeadKind::StudentT,
        }
    }

    #[test]
    fn zero_parameters_forecast_scale_softplus_zero() {
        let config = student_config(6, 3, 2);
        let count = net_of(&config).num_params();
        let model = DLinearModel::with_params(config, vec![0.0; count]).unwrap();
        // History with mean 0 and population std exactly 1, so the
        // de-standardization is the identity.
        let history = vec![-1.0, 1.0, -1.0, 1.0, -1.0, 1.0];
        let f = model.forecast(&history).unwrap();
        let Forecast::Parametric(p) = f else {
            panic!("student-t head returns a parametric forecast")
        };
        for l in 0..3 {
            assert_abs_diff_eq!(p.location()[l], 0.0, epsilon = 1e-15);
            assert_abs_diff_eq!(p.scale()[l], std::f64::consts::LN_2, epsilon = 1e-15);
        }
        // dof = 2 + softplus(0) stays above 2.
        assert!(p.dof().unwrap()[0] > 2.0);
    }

    #[test]
    fn equal_maps_ignore_the_decomposition() {
        let h = 8;
        let l = 2;
        let mut rng = rng_from_seed(40);
        let head = HeadKind::StudentT;
        let make = |kernel: usize, rng: &mut rand_chacha::ChaCha12Rng| {
            let config = DLinearConfig {
                history_length: h,
                horizon: l,
                feature_dim: 1,
                kernel_size: kernel,
                head: head.clone(),
            };
            let net = net_of(&config);
            let trunk_n = net.trunk.trunk_param_count();
            let head_n = net.head.param_count(1);
            let w: Vec<f64> = (0..trunk_n / 2)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let head_p: Vec<f64> = (0..head_n)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect();
            let mut params = w.clone();
            params.extend(w);
            params.extend(head_p);
            params
        };
        // Same W1 == W2 and same head under two different kernels.
        let mut rng2 = rng_from_seed(40);
        let params3 = make(3, &mut rng);
        let params7 = make(7, &mut rng2);
        assert_eq!(params3, params7);
        let m3 = DLinearModel::with_params(
            DLinearConfig {
                history_length: h,
                horizon: l,
                feature_dim: 1,
                kernel_size: 3,
                head: head.clone(),
            },
            params3,
        )
        .unwrap();
        let m7 = DLinearModel::with_params(
            DLinearConfig {
                history_length: h,
                horizon: l,
                feature_dim: 1,
                kernel_size: 7,
                head,
            },
            params7,
        )
        .unwrap();
        let history: Vec<f64> = (0..h).map(|i| (i as f64 * 1.7).sin() * 3.0 + 1.0).collect();
        let (Forecast::Parametric(a), Forecast::Parametric(b)) =
            (m3.forecast(&history).unwrap(), m7.forecast(&history).unwrap())
        else {
            panic!("parametric heads")
        };
        for i in 0..l {
            assert_abs_diff_eq!(a.location()[i], b.location()[i], epsilon = 1e-12);
            assert_abs_diff_eq!(a.scale()[i], b.scale()[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn quantile_head_reports_crossing_rows() {
        let config = DLinearConfig {
            history_length: 5,
            horizon: 2,
            feature_dim: 1,
            kernel_size: 3,
            head: HeadKind::Quantile {
                levels: vec![0.1, 0.9],
            },
        };
        let net = net_of(&config);
        let mut params = vec![0.0; net.num_params()];
        let split = net.trunk.trunk_param_count();
        // Level 0.1 bias above level 0.9 bias: every row crosses.
        params[split + 1] = 1.0;
        params[split + 3] = -1.0;
        let model = DLinearModel::with_params(config, params).unwrap();
        let Forecast::Quantile(q) = model.forecast(&[0.0, 1.0, 2.0, 1.0, 0.0]).unwrap() else {
            panic!("quantile head returns a quantile forecast")
        };
        assert!(q.crossing_flags().iter().all(|c| *c));
        assert_eq!(q.crossing_rate(), 1.0);
    }

    fn numeric_grad(
        net: &Net<DLinearTrunk>,
        params: &[f64],
        windows: &[WindowSample],
    ) -> Vec<f64> {
        let mut out = Vec::with_capacity(params.len());
        let mut work = params.to_vec();
        let step = 1e-5;
        for i in 0..params.len() {
            work[i] = params[i] + step;
            let up = net.mean_loss(&work, windows);
            work[i] = params[i] - step;
            let down = net.mean_loss(&work, windows);
            work[i] = params[i];
            out.push((up - down) / (2.0 * step));
        }
        out
    }

    fn check_gradients(config: DLinearConfig, seed: u64) {
        let net = net_of(&config);
        let mut rng = rng_from_seed(seed);
        let params = net.init_params(&mut rng);
        let windows: Vec<WindowSample> = (0..4)
            .map(|_| WindowSample {
                history: (0..config.history_length)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5)
                    .collect(),
                target: (0..config.horizon)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 2.0 + 0.5)
                    .collect(),
                target_start: 0,
            })
            .collect();
        let refs: Vec<&WindowSample> = windows.iter().collect();
        let (_, analytic) = net.batch_loss_grad(&params, &refs, None);
        let numeric = numeric_grad(&net, &params, &windows);
        for (i, (a, n)) in analytic.iter().zip(&numeric).enumerate() {
            let rel = (a - n).abs() / (a.abs() + n.abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {a} vs numeric {n}");
        }
    }

    #[test]
    fn gradients_match_finite_differences_student_t() {
        check_gradients(student_config(7, 3, 2), 11);
    }

    #[test]
    fn gradients_match_finite_differences_quantile() {
        check_gradients(
            DLinearConfig {
                history_length: 6,
                horizon: 2,
                feature_dim: 3,
                kernel_size: 3,
                head: HeadKind::Quantile {
                    levels: vec![0.1, 0.5, 0.9],
                },
            },
            12,
        );
    }

    /// Windows whose target, in standardized units, is a fixed linear map of
    /// the standardized history plus Gaussian noise. The map with the true
    /// noise scale is then the analytic oracle, and it lies inside the model
    /// class exactly.
    fn linear_map_windows(
        h: usize,
        l: usize,
        n: usize,
        sigma: f64,
        seed: u64,
    ) -> (Vec<WindowSample>, Vec<Vec<f64>>) {
        let mut rng = rng_from_seed(seed);
        let map: Vec<Vec<f64>> = (0..l)
            .map(|r| {
                let mut row = vec![0.0; h];
                row[r % h] += 0.6;
                row[(r + 1) % h] += 0.4;
                row
            })
            .collect();
        let windows = (0..n)
            .map(|_| {
                let history: Vec<f64> = (0..h)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5 + 2.0)
                    .collect();
                let (mean, std) = super::super::window_stats(&history);
                let hist_std = super::super::standardize(&history, mean, std);
                let target: Vec<f64> = map
                    .iter()
                    .map(|row| {
                        let loc: f64 = row.iter().zip(&hist_std).map(|(m, x)| m * x).sum();
                        mean + std * (loc + sigma * rng.sample::<f64, _>(StandardNormal))
                    })
                    .collect();
                WindowSample {
                    history,
                    target,
                    target_start: 0,
                }
            })
            .collect();
        (windows, map)
    }

    #[test]
    fn training_on_linear_map_approaches_the_oracle() {
        let (h, l, sigma) = (6, 3, 0.3);
        let (train, map) = linear_map_windows(h, l, 400, sigma, 1);
        let (val, _) = linear_map_windows(h, l, 120, sigma, 2);
        let config = DLinearConfig {
            history_length: h,
            horizon: l,
            feature_dim: 1,
            kernel_size: 5,
            head: HeadKind::StudentT,
        };
        let tc = TrainConfig {
            learning_rate: 0.05,
            batch_size: 64,
            max_epochs: 200,
            early_stop_patience: 15,
            seed: 7,
        };
        let (model, report) = train_dlinear(&config, &train, &val, &tc).unwrap();

        // Early epochs head downhill on the training loss.
        let first: Vec<f64> = report.trace.iter().take(6).map(|r| r.train_loss).collect();
        let drops = first
            .windows(2)
            .filter(|w| w[1] <= w[0] + 1e-12)
            .count();
        assert!(drops >= 4, "train losses {first:?}");

        let levels = default_quantile_levels();
        let mut model_batch = EvalBatch::new(levels.clone()).unwrap();
        let mut oracle_batch = EvalBatch::new(levels).unwrap();
        for w in &val {
            model_batch
                .push(w.target.clone(), &model.forecast(&w.history).unwrap(), None)
                .unwrap();
            let (mean, std) = super::super::window_stats(&w.history);
            let hist_std = super::super::standardize(&w.history, mean, std);
            let loc: Vec<f64> = map
                .iter()
                .map(|row| {
                    let z: f64 = row.iter().zip(&hist_std).map(|(m, x)| m * x).sum();
                    mean + std * z
                })
                .collect();
            let oracle =
                crate::forecast::ParametricForecast::gaussian(loc, vec![std * sigma; l]).unwrap();
            oracle_batch
                .push(w.target.clone(), &Forecast::from(oracle), None)
                .unwrap();
        }
        let model_score = mwql(&model_batch).unwrap();
        let oracle_score = mwql(&oracle_batch).unwrap();
        assert!(
            model_score <= 1.10 * oracle_score,
            "model {model_score} vs oracle {oracle_score}"
        );
    }

    #[test]
    fn early_stopping_returns_the_validation_argmin() {
        let (train, _) = linear_map_windows(6, 2, 120, 0.5, 5);
        let (val, _) = linear_map_windows(6, 2, 60, 0.5, 6);
        let config = DLinearConfig {
            history_length: 6,
            horizon: 2,
            feature_dim: 1,
            kernel_size: 3,
            head: HeadKind::StudentT,
        };
        let tc = TrainConfig {
            learning_rate: 0.08,
            batch_size: 32,
            max_epochs: 60,
            early_stop_patience: 5,
            seed: 3,
        };
        let (model, report) = train_dlinear(&config, &train, &val, &tc).unwrap();
        let argmin = report
            .trace
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        assert_eq!(report.best_epoch, argmin.epoch);
        // The returned parameters reproduce the recorded best loss.
        let net = net_of(&config);
        let recomputed = net.mean_loss(model.params(), &val);
        assert_abs_diff_eq!(recomputed, argmin.val_loss, epsilon = 1e-12);
        // Early stopping halted within patience of the minimum.
        let last = report.trace.last().unwrap().epoch;
        assert!(last <= argmin.epoch + tc.early_stop_patience);
    }

    #[test]
    fn training_is_deterministic_given_seed() {
        let (train, _) = linear_map_windows(5, 2, 60, 0.4, 8);
        let (val, _) = linear_map_windows(5, 2, 30, 0.4, 9);
        let config = DLinearConfig {
            history_length: 5,
            horizon: 2,
            feature_dim: 2,
            kernel_size: 3,
            head: HeadKind::Quantile {
                levels: vec![0.25, 0.5, 0.75],
            },
        };
        let tc = TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            max_epochs: 12,
            early_stop_patience: 10,
            seed: 21,
        };
        let (a, ra) = train_dlinear(&config, &train, &val, &tc).unwrap();
        let (b, rb) = train_dlinear(&config, &train, &val, &tc).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra.trace, rb.trace);
    }

    #[test]
    fn absurd_learning_rate_aborts_after_one_halving() {
        let (train, _) = linear_map_windows(5, 2, 40, 0.4, 10);
        let (val, _) = linear_map_windows(5, 2, 20, 0.4, 11);
        let config = DLinearConfig {
            history_length: 5,
            horizon: 2,
            feature_dim: 1,
            kernel_size: 3,
            head: HeadKind::StudentT,
        };
        let tc = TrainConfig {
            learning_rate: 1e18,
            batch_size: 8,
            max_epochs: 20,
            early_stop_patience: 5,
            seed: 2,
        };
        let err = train_dlinear(&config, &train, &val, &tc).unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged { .. }), "{err:?}");
    }

    #[test]
    fn shape_and_precondition_errors() {
        let config = student_config(6, 3, 1);
        let count = net_of(&config).num_params();
        let model = DLinearModel::with_params(config.clone(), vec![0.0; count]).unwrap();
        assert!(matches!(
            model.forecast(&[1.0; 4]),
            Err(Error::ShapeMismatch { .. })
        ));
        assert!(DLinearModel::with_params(config.clone(), vec![0.0; count + 1]).is_err());
        let bad_kernel = DLinearConfig {
            kernel_size: 4,
            ..config.clone()
        };
        assert!(bad_kernel.validate().is_err());
        let tc = TrainConfig {
            learning_rate: 0.1,
            batch_size: 8,
            max_epochs: 5,
            early_stop_patience: 1,
            seed: 0,
        };
        assert!(matches!(
            train_dlinear(&config, &[], &[], &tc),
            Err(Error::EmptyBatch)
        ));
    }
}
