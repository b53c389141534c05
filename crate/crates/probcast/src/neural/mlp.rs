//! Residual MLP forecaster. Each hidden block is a two-layer perceptron
//! with an optional skip connection (identity when widths match, a learned
//! projection otherwise) and inverted dropout on its output during training.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forecast::Forecast;
use crate::series::WindowSample;

use super::{dot, train_net, HeadKind, Net, TrainConfig, TrainReport, Trunk, TrunkCache};

/// Architecture of a residual MLP. `residual` and `hidden_widths` pair up
/// elementwise; `dropout` is the per-unit drop probability in [0, 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub history_length: usize,
    pub horizon: usize,
    pub feature_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub residual: Vec<bool>,
    pub dropout: f64,
    pub head: HeadKind,
}

impl MlpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.history_length == 0 || self.horizon == 0 || self.feature_dim == 0 {
            return Err(Error::Config {
                reason: "history length, horizon, and feature dim must be at least 1".into(),
            });
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return Err(Error::Config {
                reason: "at least one hidden block, every width at least 1".into(),
            });
        }
        if self.residual.len() != self.hidden_widths.len() {
            return Err(Error::Config {
                reason: format!(
                    "residual flags ({}) must pair with hidden widths ({})",
                    self.residual.len(),
                    self.hidden_widths.len()
                ),
            });
        }
        if !(self.dropout.is_finite() && (0.0..1.0).contains(&self.dropout)) {
            return Err(Error::Config {
                reason: format!("dropout must lie in [0, 1), got {}", self.dropout),
            });
        }
        self.head.validate()
    }
}

/// Offsets of one hidden block's tensors inside the trunk parameter vector.
struct BlockMeta {
    n_in: usize,
    width: usize,
    residual: bool,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    /// Projection offset; present only for a residual block that changes
    /// width.
    skip: Option<usize>,
}

struct MlpTrunk {
    history_length: usize,
    horizon: usize,
    feature_dim: usize,
    hidden_widths: Vec<usize>,
    residual: Vec<bool>,
    dropout: f64,
}

impl MlpTrunk {
    fn out_rows(&self) -> usize {
        self.horizon * self.feature_dim
    }

    fn blocks(&self) -> (Vec<BlockMeta>, usize, usize) {
        let mut metas = Vec::with_capacity(self.hidden_widths.len());
        let mut off = 0;
        let mut n_in = self.history_length;
        for (i, &width) in self.hidden_widths.iter().enumerate() {
            let w1 = off;
            let b1 = w1 + width * n_in;
            let w2 = b1 + width;
            let b2 = w2 + width * width;
            off = b2 + width;
            let residual = self.residual[i];
            let skip = if residual && n_in != width {
                let s = off;
                off += width * n_in;
                Some(s)
            } else {
                None
            };
            metas.push(BlockMeta {
                n_in,
                width,
                residual,
                w1,
                b1,
                w2,
                b2,
                skip,
            });
            n_in = width;
        }
        let w_out = off;
        let b_out = w_out + self.out_rows() * n_in;
        (metas, w_out, b_out)
    }
}

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] = dot(&w[r * cols..(r + 1) * cols], x);
    }
}

impl Trunk for MlpTrunk {
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
        let (_, _, b_out) = self.blocks();
        b_out + self.out_rows()
    }

    fn init_trunk(&self, rng: &mut ChaCha12Rng, out: &mut [f64]) {
        // Xavier-uniform weights, zero biases.
        let mut off = 0;
        for (name, rows, cols) in self.layout() {
            let size = rows * cols;
            if name.starts_with('b') {
                out[off..off + size].fill(0.0);
            } else {
                let a = (6.0 / (rows + cols) as f64).sqrt();
                for v in &mut out[off..off + size] {
                    *v = rng.random_range(-a..a);
                }
            }
            off += size;
        }
    }

    fn features(
        &self,
        params: &[f64],
        hist_std: &[f64],
        mut dropout: Option<&mut ChaCha12Rng>,
        cache: Option<&mut TrunkCache>,
    ) -> Vec<f64> {
        let (metas, off_w_out, off_b_out) = self.blocks();
        let mut slots = Vec::with_capacity(3 * metas.len() + 1);
        let mut x = hist_std.to_vec();
        for meta in &metas {
            let (w, n_in) = (meta.width, meta.n_in);
            let mut u = vec![0.0; w];
            matvec(&params[meta.w1..meta.w1 + w * n_in], w, n_in, &x, &mut u);
            for (uj, bj) in u.iter_mut().zip(&params[meta.b1..meta.b1 + w]) {
                *uj += bj;
            }
            let relu: Vec<f64> = u.iter().map(|v| v.max(0.0)).collect();
            let mut y = vec![0.0; w];
            matvec(&params[meta.w2..meta.w2 + w * w], w, w, &relu, &mut y);
            for (yj, bj) in y.iter_mut().zip(&params[meta.b2..meta.b2 + w]) {
                *yj += bj;
            }
            let mask: Vec<f64> = match dropout.as_deref_mut() {
                Some(rng) if self.dropout > 0.0 => {
                    let keep = 1.0 - self.dropout;
                    (0..w)
                        .map(|_| {
                            if rng.random::<f64>() < self.dropout {
                                0.0
                            } else {
                                1.0 / keep
                            }
                        })
                        .collect()
                }
                _ => Vec::new(),
            };
            if !mask.is_empty() {
                for (yj, m) in y.iter_mut().zip(&mask) {
                    *yj *= m;
                }
            }
            if meta.residual {
                if let Some(skip) = meta.skip {
                    let proj = &params[skip..skip + w * n_in];
                    for j in 0..w {
                        y[j] += dot(&proj[j * n_in..(j + 1) * n_in], &x);
                    }
                } else {
                    for j in 0..w {
                        y[j] += x[j];
                    }
                }
            }
            slots.push(std::mem::take(&mut x));
            slots.push(u);
            slots.push(mask);
            x = y;
        }
        let rows = self.out_rows();
        let w_last = x.len();
        let mut features = vec![0.0; rows];
        matvec(
            &params[off_w_out..off_w_out + rows * w_last],
            rows,
            w_last,
            &x,
            &mut features,
        );
        for (f, b) in features
            .iter_mut()
            .zip(&params[off_b_out..off_b_out + rows])
        {
            *f += b;
        }
        slots.push(x);
        if let Some(cache) = cache {
            cache.slots = slots;
        }
        features
    }

    fn backward(&self, params: &[f64], cache: &TrunkCache, dfeat: &[f64], grad: &mut [f64]) {
        let (metas, off_w_out, off_b_out) = self.blocks();
        let x_last = &cache.slots[3 * metas.len()];
        let w_last = x_last.len();
        let rows = self.out_rows();
        let w_out = &params[off_w_out..off_w_out + rows * w_last];
        let mut dx = vec![0.0; w_last];
        for r in 0..rows {
            let d = dfeat[r];
            if d == 0.0 {
                continue;
            }
            grad[off_b_out + r] += d;
            for c in 0..w_last {
                grad[off_w_out + r * w_last + c] += d * x_last[c];
                dx[c] += w_out[r * w_last + c] * d;
            }
        }
        for (i, meta) in metas.iter().enumerate().rev() {
            let x_in = &cache.slots[3 * i];
            let u = &cache.slots[3 * i + 1];
            let mask = &cache.slots[3 * i + 2];
            let (w, n_in) = (meta.width, meta.n_in);
            let dy = dx;
            let mut dv = dy.clone();
            if !mask.is_empty() {
                for (v, m) in dv.iter_mut().zip(mask) {
                    *v *= m;
                }
            }
            let w2 = &params[meta.w2..meta.w2 + w * w];
            let mut dr = vec![0.0; w];
            for j in 0..w {
                let dvj = dv[j];
                if dvj == 0.0 {
                    continue;
                }
                grad[meta.b2 + j] += dvj;
                for k in 0..w {
                    grad[meta.w2 + j * w + k] += dvj * u[k].max(0.0);
                    dr[k] += w2[j * w + k] * dvj;
                }
            }
            let w1 = &params[meta.w1..meta.w1 + w * n_in];
            let mut dxin = vec![0.0; n_in];
            for j in 0..w {
                if u[j] <= 0.0 {
                    continue;
                }
                let duj = dr[j];
                if duj == 0.0 {
                    continue;
                }
                grad[meta.b1 + j] += duj;
                for c in 0..n_in {
                    grad[meta.w1 + j * n_in + c] += duj * x_in[c];
                    dxin[c] += w1[j * n_in + c] * duj;
                }
            }
            if meta.residual {
                if let Some(skip) = meta.skip {
                    let proj = &params[skip..skip + w * n_in];
                    for j in 0..w {
                        let dyj = dy[j];
                        if dyj == 0.0 {
                            continue;
                        }
                        for c in 0..n_in {
                            grad[skip + j * n_in + c] += dyj * x_in[c];
                            dxin[c] += proj[j * n_in + c] * dyj;
                        }
                    }
                } else {
                    for c in 0..n_in {
                        dxin[c] += dy[c];
                    }
                }
            }
            dx = dxin;
        }
    }

    fn layout(&self) -> Vec<(String, usize, usize)> {
        let (metas, _, _) = self.blocks();
        let mut out = Vec::new();
        for (i, meta) in metas.iter().enumerate() {
            out.push((format!("w1_{i}"), meta.width, meta.n_in));
            out.push((format!("b1_{i}"), 1, meta.width));
            out.push((format!("w2_{i}"), meta.width, meta.width));
            out.push((format!("b2_{i}"), 1, meta.width));
            if meta.skip.is_some() {
                out.push((format!("skip_{i}"), meta.width, meta.n_in));
            }
        }
        let w_last = *self.hidden_widths.last().expect("validated nonempty");
        out.push(("w_out".into(), self.out_rows(), w_last));
        out.push(("b_out".into(), 1, self.out_rows()));
        out
    }
}

/// A fitted residual-MLP forecaster.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpDirectModel {
    config: MlpConfig,
    params: Vec<f64>,
}

impl MlpDirectModel {
    /// Wraps a parameter vector; the length must match the architecture.
    pub fn with_params(config: MlpConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = net_of(&config).num_params();
        if params.len() != expected {
            return Err(Error::ShapeMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(MlpDirectModel { config, params })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Tensor layout (name, rows, cols) covering the parameter vector:
    /// per-block tensors, the output map, then the head block.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        Self::layout_for(&self.config).expect("config validated at construction")
    }

    pub(crate) fn layout_for(config: &MlpConfig) -> Result<Vec<(String, usize, usize)>> {
        config.validate()?;
        let net = net_of(config);
        let mut layout = net.trunk.layout();
        layout.push(("head".into(), 1, net.head.param_count(config.feature_dim)));
        Ok(layout)
    }

    pub fn forecast(&self, history: &[f64]) -> Result<Forecast> {
        net_of(&self.config).forecast(&self.params, history)
    }
}

fn net_of(config: &MlpConfig) -> Net<MlpTrunk> {
    Net {
        trunk: MlpTrunk {
            history_length: config.history_length,
            horizon: config.horizon,
            feature_dim: config.feature_dim,
            hidden_widths: config.hidden_widths.clone(),
            residual: config.residual.clone(),
            dropout: config.dropout,
        },
        head: config.head.clone(),
        dropout: config.dropout,
    }
}

/// Trains a residual MLP; see the module docs for the optimization scheme.
pub fn train_mlp(
    config: &MlpConfig,
    train_windows: &[WindowSample],
    val_windows: &[WindowSample],
    train_config: &TrainConfig,
) -> Result<(MlpDirectModel, TrainReport)> {
    config.validate()?;
    let net = net_of(config);
    let (params, report) = train_net(&net, train_windows, val_windows, train_config)?;
    Ok((
        MlpDirectModel {
            config: config.clone(),
            params,
        },
        report,
    ))
}

#[cfg(test)]
mod tests {
    use super::super::{
        load_checkpoint, save_checkpoint, standardize, window_stats, DirectForecaster,
    };
    use super::*;
    use crate::error::Error;
    use crate::neural::{train_dlinear, DLinearConfig};
    use crate::rng::rng_from_seed;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn base_config() -> MlpConfig {
        MlpConfig {
            history_length: 7,
            horizon: 2,
            feature_dim: 2,
            hidden_widths: vec![7, 4],
            residual: vec![true, true],
            dropout: 0.0,
            head: HeadKind::StudentT,
        }
    }

    #[test]
    fn config_validation_catches_shape_mistakes() {
        let ok = base_config();
        assert!(ok.validate().is_ok());
        let no_hidden = MlpConfig {
            hidden_widths: vec![],
            residual: vec![],
            ..ok.clone()
        };
        assert!(no_hidden.validate().is_err());
        let zero_width = MlpConfig {
            hidden_widths: vec![4, 0],
            ..ok.clone()
        };
        assert!(zero_width.validate().is_err());
        let mismatched = MlpConfig {
            residual: vec![true],
            ..ok.clone()
        };
        assert!(mismatched.validate().is_err());
        let full_dropout = MlpConfig {
            dropout: 1.0,
            ..ok.clone()
        };
        assert!(full_dropout.validate().is_err());
        let bad_levels = MlpConfig {
            head: HeadKind::Quantile { levels: vec![] },
            ..ok
        };
        assert!(bad_levels.validate().is_err());
    }

    #[test]
    fn layout_covers_every_parameter_once() {
        let config = base_config();
        let net = net_of(&config);
        let layout = MlpDirectModel::layout_for(&config).unwrap();
        let total: usize = layout.iter().map(|(_, r, c)| r * c).sum();
        assert_eq!(total, net.num_params());
        // Block 0 keeps width 7 (identity skip, no tensor); block 1 shrinks
        // 7 to 4 and needs a projection.
        let names: Vec<&str> = layout.iter().map(|(n, _, _)| n.as_str()).collect();
        assert!(!names.contains(&"skip_0"));
        assert!(names.contains(&"skip_1"));
    }

    fn numeric_grad(net: &Net<MlpTrunk>, params: &[f64], windows: &[WindowSample]) -> Vec<f64> {
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

    fn check_gradients(config: MlpConfig, seed: u64) {
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
    fn gradients_match_finite_differences_residual_blocks() {
        // Identity skip (7 -> 7) followed by a projection skip (7 -> 4).
        check_gradients(base_config(), 31);
    }

    #[test]
    fn gradients_match_finite_differences_plain_block() {
        check_gradients(
            MlpConfig {
                history_length: 6,
                horizon: 3,
                feature_dim: 1,
                hidden_widths: vec![5],
                residual: vec![false],
                dropout: 0.0,
                head: HeadKind::Quantile {
                    levels: vec![0.2, 0.8],
                },
            },
            32,
        );
    }

    fn linear_map_windows(h: usize, l: usize, n: usize, sigma: f64, seed: u64) -> Vec<WindowSample> {
        let mut rng = rng_from_seed(seed);
        let windows = (0..n)
            .map(|_| {
                let history: Vec<f64> = (0..h)
                    .map(|_| rng.sample::<f64, _>(StandardNormal) * 1.5 + 2.0)
                    .collect();
                let (mean, std) = window_stats(&history);
                let hist_std = standardize(&history, mean, std);
                let target: Vec<f64> = (0..l)
                    .map(|r| {
                        let loc = 0.6 * hist_std[r % h] + 0.4 * hist_std[(r + 1) % h];
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
        windows
    }

    #[test]
    fn training_reduces_validation_loss() {
        let train = linear_map_windows(7, 2, 300, 0.4, 1);
        let val = linear_map_windows(7, 2, 100, 0.4, 2);
        let config = MlpConfig {
            history_length: 7,
            horizon: 2,
            feature_dim: 1,
            hidden_widths: vec![8],
            residual: vec![false],
            dropout: 0.0,
            head: HeadKind::StudentT,
        };
        let tc = TrainConfig {
            learning_rate: 0.02,
            batch_size: 32,
            max_epochs: 60,
            early_stop_patience: 8,
            seed: 4,
        };
        let (_, report) = train_mlp(&config, &train, &val, &tc).unwrap();
        let first = report.trace.first().unwrap().val_loss;
        let best = report.trace[report.best_epoch - 1].val_loss;
        assert!(best < first, "val loss {first} never improved ({best})");
        assert!(!report.lr_halved);
    }

    #[test]
    fn dropout_training_is_deterministic_per_seed() {
        let train = linear_map_windows(6, 2, 80, 0.4, 5);
        let val = linear_map_windows(6, 2, 40, 0.4, 6);
        let config = MlpConfig {
            history_length: 6,
            horizon: 2,
            feature_dim: 1,
            hidden_widths: vec![6],
            residual: vec![true],
            dropout: 0.3,
            head: HeadKind::StudentT,
        };
        let tc = TrainConfig {
            learning_rate: 0.02,
            batch_size: 16,
            max_epochs: 8,
            early_stop_patience: 8,
            seed: 11,
        };
        let (a, ra) = train_mlp(&config, &train, &val, &tc).unwrap();
        let (b, rb) = train_mlp(&config, &train, &val, &tc).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(ra.trace, rb.trace);
        let other_seed = TrainConfig { seed: 12, ..tc };
        let (c, _) = train_mlp(&config, &train, &val, &other_seed).unwrap();
        assert_ne!(a.params(), c.params());
        // Inference applies no dropout: repeated forecasts agree exactly.
        let history = &train[0].history;
        let (Forecast::Parametric(p1), Forecast::Parametric(p2)) =
            (a.forecast(history).unwrap(), a.forecast(history).unwrap())
        else {
            panic!("parametric head")
        };
        assert_eq!(p1.location(), p2.location());
        assert_eq!(p1.scale(), p2.scale());
    }

    #[test]
    fn checkpoint_round_trips_both_architectures() {
        let mlp_config = base_config();
        let net = net_of(&mlp_config);
        let mut rng = rng_from_seed(9);
        let params = net.init_params(&mut rng);
        let mlp = MlpDirectModel::with_params(mlp_config, params).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&DirectForecaster::Mlp(mlp.clone()), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("probcast-checkpoint 1\n"));
        assert!(text.trim_end().ends_with("end"));
        let DirectForecaster::Mlp(loaded) = load_checkpoint(text.as_bytes()).unwrap() else {
            panic!("architecture tag survives the round trip")
        };
        assert_eq!(loaded.config(), mlp.config());
        assert_eq!(loaded.params(), mlp.params());

        let dl_config = DLinearConfig {
            history_length: 6,
            horizon: 2,
            feature_dim: 1,
            kernel_size: 3,
            head: HeadKind::Quantile {
                levels: vec![0.1, 0.5, 0.9],
            },
        };
        let train = linear_map_windows(6, 2, 60, 0.4, 14);
        let val = linear_map_windows(6, 2, 30, 0.4, 15);
        let tc = TrainConfig {
            learning_rate: 0.05,
            batch_size: 16,
            max_epochs: 10,
            early_stop_patience: 10,
            seed: 3,
        };
        let (dl, _) = train_dlinear(&dl_config, &train, &val, &tc).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&DirectForecaster::DLinear(dl.clone()), &mut buf).unwrap();
        let restored = load_checkpoint(buf.as_slice()).unwrap();
        let DirectForecaster::DLinear(ref loaded) = restored else {
            panic!("architecture tag survives the round trip")
        };
        assert_eq!(loaded.params(), dl.params());
        // Bit-identical forecasts after the round trip.
        let history = &val[0].history;
        let (Forecast::Quantile(q1), Forecast::Quantile(q2)) = (
            dl.forecast(history).unwrap(),
            restored.forecast(history).unwrap(),
        ) else {
            panic!("quantile head")
        };
        assert_eq!(q1.values(), q2.values());
    }

    #[test]
    fn checkpoint_rejects_malformed_input() {
        let config = base_config();
        let net = net_of(&config);
        let mut rng = rng_from_seed(13);
        let model = MlpDirectModel::with_params(config, net.init_params(&mut rng)).unwrap();
        let mut buf = Vec::new();
        save_checkpoint(&DirectForecaster::Mlp(model), &mut buf).unwrap();
        let good = String::from_utf8(buf).unwrap();

        let bad_magic = good.replacen("probcast-checkpoint 1", "probcast-checkpoint 2", 1);
        assert!(matches!(
            load_checkpoint(bad_magic.as_bytes()),
            Err(Error::MalformedCheckpoint { .. })
        ));

        let truncated = &good[..good.len() - 20];
        assert!(matches!(
            load_checkpoint(truncated.as_bytes()),
            Err(Error::MalformedCheckpoint { .. })
        ));

        let missing_end = good.trim_end().trim_end_matches("end").to_string();
        assert!(matches!(
            load_checkpoint(missing_end.as_bytes()),
            Err(Error::MalformedCheckpoint { .. })
        ));

        // Corrupt one value into something unparsable.
        let lines: Vec<&str> = good.lines().collect();
        let mut corrupted: Vec<String> = lines.iter().map(|l| l.to_string()).collect();
        corrupted[3] = corrupted[3].replacen(char::is_numeric, "x", 1);
        let corrupted = corrupted.join("\n") + "\n";
        assert!(matches!(
            load_checkpoint(corrupted.as_bytes()),
            Err(Error::MalformedCheckpoint { .. })
        ));
    }

    #[test]
    fn shape_errors_surface() {
        let config = base_config();
        let net = net_of(&config);
        assert!(MlpDirectModel::with_params(config.clone(), vec![0.0; 3]).is_err());
        let mut rng = rng_from_seed(2);
        let model = MlpDirectModel::with_params(config, net.init_params(&mut rng)).unwrap();
        assert!(matches!(
            model.forecast(&[0.0; 5]),
            Err(Error::ShapeMismatch { .. })
        ));
    }
}
