//! Benchmark configuration: which series, which models, which horizons,
//! and every knob a run needs to be reproducible from one file.

use std::collections::BTreeMap;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{default_quantile_levels, validate_levels};
use crate::synth::GeneratorSpec;

pub const DEFAULT_HORIZONS: [usize; 3] = [18, 35, 70];
pub const DEFAULT_N_SEEDS: usize = 5;
pub const DEFAULT_SPLIT: [f64; 3] = [0.6, 0.2, 0.2];
pub const DEFAULT_SAMPLING_RATE: f64 = 35.0;

fn default_output_dir() -> PathBuf {
    PathBuf::from("probcast-out")
}

fn default_horizons() -> Vec<usize> {
    DEFAULT_HORIZONS.to_vec()
}

fn default_n_seeds() -> usize {
    DEFAULT_N_SEEDS
}

fn default_split() -> [f64; 3] {
    DEFAULT_SPLIT
}

fn default_sampling_rate() -> f64 {
    DEFAULT_SAMPLING_RATE
}

/// One benchmark run, start to finish. Parses from TOML; see
/// `BenchmarkConfig::from_toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub global_seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<usize>,
    #[serde(default = "default_quantile_levels")]
    pub quantile_levels: Vec<f64>,
    /// Replicate count for models with stochastic fitting; deterministic
    /// models always run once.
    #[serde(default = "default_n_seeds")]
    pub n_seeds: usize,
    /// Chronological train/validation/test fractions.
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    /// Samples per second, used for step-to-seconds conversion. A CSV time
    /// column overrides it per session.
    #[serde(default = "default_sampling_rate")]
    pub sampling_rate: f64,
    pub sessions: Vec<SessionSpec>,
    pub models: Vec<ModelSpec>,
}

impl BenchmarkConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: BenchmarkConfig = toml::from_str(text).map_err(|e| Error::Config {
            reason: format!("config parse failed: {e}"),
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizons.is_empty() || self.horizons.contains(&0) {
            return Err(Error::Config {
                reason: "horizons must be a nonempty list of positive steps".into(),
            });
        }
        validate_levels(&self.quantile_levels)?;
        if self.n_seeds == 0 {
            return Err(Error::Config {
                reason: "n_seeds must be at least 1".into(),
            });
        }
        let [a, b, c] = self.split;
        if !(a > 0.0 && b > 0.0 && c > 0.0 && (a + b + c - 1.0).abs() <= 1e-9) {
            return Err(Error::Config {
                reason: format!("split fractions must be positive and sum to 1, got {:?}", self.split),
            });
        }
        if !(self.sampling_rate.is_finite() && self.sampling_rate > 0.0) {
            return Err(Error::Config {
                reason: format!("sampling_rate must be positive, got {}", self.sampling_rate),
            });
        }
        if self.sessions.is_empty() {
            return Err(Error::Config {
                reason: "at least one session is required".into(),
            });
        }
        for session in &self.sessions {
            session.validate()?;
        }
        if self.models.is_empty() {
            return Err(Error::Config {
                reason: "at least one model is required".into(),
            });
        }
        let mut names = std::collections::BTreeSet::new();
        for model in &self.models {
            model.validate()?;
            if !names.insert(model.name()) {
                return Err(Error::Config {
                    reason: format!("duplicate model entry `{}`", model.name()),
                });
            }
        }
        Ok(())
    }
}

/// A data source: either a CSV file (one series per non-time column) or a
/// synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<PathBuf>,
    /// Name of the CSV column holding sample times, validated for uniform
    /// spacing and used to infer the sampling rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Id override for generator sessions; CSV sessions take column names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
}

impl SessionSpec {
    pub fn validate(&self) -> Result<()> {
        match (&self.csv, &self.generator) {
            (Some(_), Some(_)) => Err(Error::Config {
                reason: "a session is either a csv or a generator, not both".into(),
            }),
            (None, None) => Err(Error::Config {
                reason: "a session needs a csv path or a generator".into(),
            }),
            (None, Some(generator)) => {
                if self.time_column.is_some() {
                    return Err(Error::Config {
                        reason: "time_column applies only to csv sessions".into(),
                    });
                }
                generator.validate()
            }
            (Some(_), None) => {
                if self.id.is_some() {
                    return Err(Error::Config {
                        reason: "csv sessions take their ids from column headers".into(),
                    });
                }
                Ok(())
            }
        }
    }
}

/// How a model picks its structure or hyperparameters before evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionKind {
    /// Stepwise order search minimizing corrected AIC on train plus
    /// validation data.
    Aicc,
    /// Forward lag sweep minimizing validation weighted quantile loss.
    Valql,
    /// Exhaustive grid scored by validation log-likelihood.
    Grid,
    /// Random subset of a hyperparameter grid scored by validation loss.
    RandomSearch,
    /// Choose among fixed model variants by validation loss.
    VariantSelect,
}

fn default_ar_history() -> usize {
    80
}

fn default_state_history() -> usize {
    300
}

fn default_max_p() -> usize {
    30
}

fn default_max_q() -> usize {
    5
}

fn default_max_models() -> usize {
    100
}

fn default_patience() -> usize {
    10
}

fn default_n_trajectories() -> usize {
    100
}

fn default_em_max_iters() -> usize {
    crate::arhmm::EM_MAX_ITERS
}

fn default_n_configs() -> usize {
    40
}

fn default_max_epochs() -> usize {
    100
}

fn default_batch_size() -> usize {
    64
}

fn arma_selection() -> SelectionKind {
    SelectionKind::Aicc
}

fn theta_selection() -> SelectionKind {
    SelectionKind::VariantSelect
}

fn grid_selection() -> SelectionKind {
    SelectionKind::Grid
}

fn search_selection() -> SelectionKind {
    SelectionKind::RandomSearch
}

/// One model entry of the benchmark. The `kind` tag picks the family; the
/// remaining fields are that family's knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelSpec {
    Naive,
    Average,
    Ar {
        /// `aicc` fits on train+validation; `valql` selects the lag order
        /// on validation loss and fits on train only.
        selection: SelectionKind,
        #[serde(default = "default_ar_history")]
        history_length: usize,
        #[serde(default = "default_max_p")]
        max_p: usize,
        #[serde(default = "default_max_models")]
        max_models: usize,
        #[serde(default = "default_patience")]
        patience: usize,
    },
    Arma {
        #[serde(default = "arma_selection")]
        selection: SelectionKind,
        #[serde(default = "default_ar_history")]
        history_length: usize,
        #[serde(default = "default_max_p")]
        max_p: usize,
        #[serde(default = "default_max_q")]
        max_q: usize,
        #[serde(default = "default_max_models")]
        max_models: usize,
    },
    Theta {
        #[serde(default = "theta_selection")]
        selection: SelectionKind,
        #[serde(default = "default_state_history")]
        history_length: usize,
    },
    Arhmm {
        #[serde(default = "grid_selection")]
        selection: SelectionKind,
        #[serde(default = "default_state_history")]
        history_length: usize,
        #[serde(default = "default_n_trajectories")]
        n_trajectories: usize,
        /// Grid override; defaults to the full state grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        states: Option<Vec<usize>>,
        /// Grid override; defaults to the full lag grid.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        lags: Option<Vec<usize>>,
        #[serde(default = "default_em_max_iters")]
        em_max_iters: usize,
    },
    Dlinear {
        #[serde(default = "search_selection")]
        selection: SelectionKind,
        #[serde(default = "default_n_configs")]
        n_configs: usize,
        /// Hyperparameter grid override, name to candidate values.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search: Option<BTreeMap<String, Vec<f64>>>,
        #[serde(default = "default_max_epochs")]
        max_epochs: usize,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_patience")]
        patience: usize,
    },
    Mlp {
        #[serde(default = "search_selection")]
        selection: SelectionKind,
        #[serde(default = "default_n_configs")]
        n_configs: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        search: Option<BTreeMap<String, Vec<f64>>>,
        #[serde(default = "default_max_epochs")]
        max_epochs: usize,
        #[serde(default = "default_batch_size")]
        batch_size: usize,
        #[serde(default = "default_patience")]
        patience: usize,
    },
}

/// Search-space keys each neural family understands.
pub const DLINEAR_SEARCH_KEYS: [&str; 4] =
    ["context_factor", "learning_rate", "kernel_size", "feature_dim"];
pub const MLP_SEARCH_KEYS: [&str; 6] = [
    "context_factor",
    "learning_rate",
    "hidden_width",
    "num_blocks",
    "dropout",
    "feature_dim",
];

impl ModelSpec {
    /// Stable name used in report tables. Distinguishes the two order
    /// selection strategies of the AR family.
    pub fn name(&self) -> String {
        match self {
            ModelSpec::Naive => "naive".into(),
            ModelSpec::Average => "average".into(),
            ModelSpec::Ar { selection, .. } => match selection {
                SelectionKind::Valql => "ar_valql".into(),
                _ => "ar_aicc".into(),
            },
            ModelSpec::Arma { .. } => "arma".into(),
            ModelSpec::Theta { .. } => "theta".into(),
            ModelSpec::Arhmm { .. } => "arhmm".into(),
            ModelSpec::Dlinear { .. } => "dlinear".into(),
            ModelSpec::Mlp { .. } => "mlp".into(),
        }
    }

    /// True when repeated fits with different seeds can differ.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self,
            ModelSpec::Arhmm { .. } | ModelSpec::Dlinear { .. } | ModelSpec::Mlp { .. }
        )
    }

    pub fn validate(&self) -> Result<()> {
        let err = |reason: String| Err(Error::Config { reason });
        match self {
            ModelSpec::Naive | ModelSpec::Average => Ok(()),
            ModelSpec::Ar {
                selection,
                history_length,
                max_p,
                max_models,
                patience,
            } => {
                if !matches!(selection, SelectionKind::Aicc | SelectionKind::Valql) {
                    return err("ar selection must be `aicc` or `valql`".into());
                }
                if *history_length == 0 || *max_p == 0 || *max_models == 0 || *patience == 0 {
                    return err("ar knobs must all be at least 1".into());
                }
                Ok(())
            }
            ModelSpec::Arma {
                selection,
                history_length,
                max_p,
                max_models,
                ..
            } => {
                if !matches!(selection, SelectionKind::Aicc) {
                    return err("arma selection must be `aicc`".into());
                }
                if *history_length == 0 || *max_p == 0 || *max_models == 0 {
                    return err("arma knobs must all be at least 1".into());
                }
                Ok(())
            }
            ModelSpec::Theta {
                selection,
                history_length,
            } => {
                if !matches!(selection, SelectionKind::VariantSelect) {
                    return err("theta selection must be `variant_select`".into());
                }
                if *history_length < 3 {
                    return err("theta history_length must be at least 3".into());
                }
                Ok(())
            }
            ModelSpec::Arhmm {
                selection,
                history_length,
                n_trajectories,
                states,
                lags,
                em_max_iters,
            } => {
                if !matches!(selection, SelectionKind::Grid) {
                    return err("arhmm selection must be `grid`".into());
                }
                if *history_length == 0 || *n_trajectories < 2 || *em_max_iters == 0 {
                    return err(
                        "arhmm needs history_length >= 1, n_trajectories >= 2, em_max_iters >= 1"
                            .into(),
                    );
                }
                if states.as_ref().is_some_and(|s| s.is_empty() || s.contains(&0))
                    || lags.as_ref().is_some_and(|l| l.is_empty() || l.contains(&0))
                {
                    return err("arhmm grid overrides must be nonempty and positive".into());
                }
                Ok(())
            }
            ModelSpec::Dlinear {
                selection,
                n_configs,
                search,
                max_epochs,
                batch_size,
                patience,
            }
            | ModelSpec::Mlp {
                selection,
                n_configs,
                search,
                max_epochs,
                batch_size,
                patience,
            } => {
                if !matches!(selection, SelectionKind::RandomSearch) {
                    return err(format!(
                        "{} selection must be `random_search`",
                        self.name()
                    ));
                }
                if *n_configs == 0 || *max_epochs == 0 || *batch_size == 0 || *patience == 0 {
                    return err(format!("{} knobs must all be at least 1", self.name()));
                }
                let allowed: &[&str] = if matches!(self, ModelSpec::Dlinear { .. }) {
                    &DLINEAR_SEARCH_KEYS
                } else {
                    &MLP_SEARCH_KEYS
                };
                if let Some(space) = search {
                    if space.is_empty() || space.values().any(|v| v.is_empty()) {
                        return Err(Error::EmptySearchSpace);
                    }
                    for key in space.keys() {
                        if !allowed.contains(&key.as_str()) {
                            return Err(Error::UnknownHyperparameter {
                                name: key.clone(),
                                family: self.name(),
                            });
                        }
                    }
                }
                Ok(())
            }
        }
    }

    /// The hyperparameter grid a neural model searches when the config does
    /// not supply one.
    pub fn default_search_space(&self) -> BTreeMap<String, Vec<f64>> {
        let mut space = BTreeMap::new();
        match self {
            ModelSpec::Dlinear { .. } => {
                space.insert("context_factor".into(), vec![1.0, 2.0, 4.0]);
                space.insert("learning_rate".into(), vec![1e-3, 3e-3, 1e-2]);
                space.insert("kernel_size".into(), vec![5.0, 9.0, 25.0]);
            }
            ModelSpec::Mlp { .. } => {
                space.insert("context_factor".into(), vec![1.0, 2.0, 4.0]);
                space.insert("learning_rate".into(), vec![1e-3, 3e-3, 1e-2]);
                space.insert("hidden_width".into(), vec![32.0, 64.0]);
                space.insert("num_blocks".into(), vec![1.0, 2.0]);
                space.insert("dropout".into(), vec![0.0, 0.1]);
            }
            _ => {}
        }
        space
    }
}
