//! Run configuration: one TOML file, every key optional, unknown keys
//! rejected. Precedence is flags > `DUALREJ_OUT_DIR` > file > defaults.

use std::path::{Path, PathBuf};

use dualrej::pipeline::{RejectionMode, DEFAULT_SWEEP_RATES};
use dualrej::synthetic::SyntheticConfig;
use dualrej::{ErrorMetric, ErrorModelConfig, MlpConfig, VaeConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUT_DIR_ENV: &str = "DUALREJ_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds model initialization and minibatch order; never the data split.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataConfig,
    pub forecaster: ForecasterConfig,
    pub vae: VaeConfig,
    pub error_model: ErrorModelConfig,
    pub rejection: RejectionConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("dualrej-out"),
            data: DataConfig::default(),
            forecaster: ForecasterConfig::default(),
            vae: VaeConfig::default(),
            error_model: ErrorModelConfig::default(),
            rejection: RejectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV with a time column first; absent means the bundled synthetic series.
    pub path: Option<PathBuf>,
    pub has_header: bool,
    pub input_len: usize,
    pub horizon: usize,
    pub stride: usize,
    /// Train / validation / test fractions of the window count.
    pub ratios: [f64; 3],
    pub synthetic: SyntheticConfig,
    pub synthetic_seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            path: None,
            has_header: true,
            input_len: 24,
            horizon: 8,
            stride: 1,
            ratios: [0.7, 0.1, 0.2],
            synthetic: SyntheticConfig::default(),
            synthetic_seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForecasterKind {
    #[default]
    Ridge,
    Mlp,
    /// Forecasts read from `predictions`, keyed by window origin.
    External,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    pub kind: ForecasterKind,
    pub ridge_lambda: f64,
    pub mlp: MlpConfig,
    /// CSV of normalized forecasts: `origin_index, y0, y1, ...`.
    pub predictions: Option<PathBuf>,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            kind: ForecasterKind::Ridge,
            ridge_lambda: 1e-3,
            mlp: MlpConfig::default(),
            predictions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RejectionConfig {
    pub mode: RejectionMode,
    /// Combined validation rejection rate; split evenly in dual mode.
    pub target_rate: f64,
    pub alpha: f64,
    /// Interval width; when set, the variance threshold comes from it
    /// instead of from `target_rate`.
    pub width: Option<f64>,
    pub lambda: f64,
    /// Per-window cost of abstaining.
    pub cost: f64,
    pub metric: ErrorMetric,
    pub sweep_rates: Vec<f64>,
}

impl Default for RejectionConfig {
    fn default() -> Self {
        Self {
            mode: RejectionMode::Dual,
            target_rate: 0.10,
            alpha: 0.05,
            width: None,
            lambda: 0.0,
            cost: 1.0,
            metric: ErrorMetric::Squared,
            sweep_rates: DEFAULT_SWEEP_RATES.to_vec(),
        }
    }
}

/// Command-line overrides; `None` leaves the lower layer in place.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub forecaster: Option<ForecasterKind>,
    pub mode: Option<RejectionMode>,
    pub target_rate: Option<f64>,
    pub width: Option<f64>,
    pub lambda: Option<f64>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Resolves all layers and validates the result.
    pub fn resolve(file: Option<Self>, env_out_dir: Option<PathBuf>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut cfg = file.unwrap_or_default();
        if let Some(dir) = env_out_dir {
            cfg.out_dir = dir;
        }
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.out_dir {
            self.out_dir = v.clone();
        }
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.data {
            self.data.path = Some(v.clone());
        }
        if let Some(v) = o.forecaster {
            self.forecaster.kind = v;
        }
        if let Some(v) = o.mode {
            self.rejection.mode = v;
        }
        if let Some(v) = o.target_rate {
            self.rejection.target_rate = v;
        }
        if let Some(v) = o.width {
            self.rejection.width = Some(v);
        }
        if let Some(v) = o.lambda {
            self.rejection.lambda = v;
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let fail = |msg: String| Err(CliError::Config(msg));
        let d = &self.data;
        if d.input_len == 0 || d.horizon == 0 || d.stride == 0 {
            return fail("data.input_len, data.horizon and data.stride must be positive".into());
        }
        let sum: f64 = d.ratios.iter().sum();
        if d.ratios.iter().any(|r| !(0.0..=1.0).contains(r)) || (sum - 1.0).abs() > 1e-9 {
            return fail(format!("data.ratios must be in [0, 1] and sum to 1, got {:?}", d.ratios));
        }
        if d.path.is_none() && d.synthetic.length == 0 {
            return fail("data.synthetic.length must be positive".into());
        }
        let f = &self.forecaster;
        if !(f.ridge_lambda >= 0.0) || !f.ridge_lambda.is_finite() {
            return fail(format!("forecaster.ridge_lambda must be >= 0, got {}", f.ridge_lambda));
        }
        if f.kind == ForecasterKind::External && f.predictions.is_none() {
            return fail("forecaster.kind = \"external\" needs forecaster.predictions".into());
        }
        let v = &self.vae;
        if v.hidden_dim == 0 || v.latent_dim == 0 || v.epochs == 0 || v.batch_size == 0 {
            return fail("vae.hidden_dim, latent_dim, epochs and batch_size must be positive".into());
        }
        if !(v.learning_rate > 0.0) {
            return fail(format!("vae.learning_rate must be positive, got {}", v.learning_rate));
        }
        let r = &self.rejection;
        if !(0.0..1.0).contains(&r.target_rate) {
            return fail(format!("rejection.target_rate must be in [0, 1), got {}", r.target_rate));
        }
        if !(r.alpha > 0.0 && r.alpha < 1.0) {
            return fail(format!("rejection.alpha must be in (0, 1), got {}", r.alpha));
        }
        if let Some(w) = r.width {
            if !(w >= 0.0) || !w.is_finite() {
                return fail(format!("rejection.width must be >= 0, got {w}"));
            }
        }
        if !(r.lambda >= 0.0) || !r.lambda.is_finite() {
            return fail(format!("rejection.lambda must be >= 0, got {}", r.lambda));
        }
        if !(r.cost >= 0.0) || !r.cost.is_finite() {
            return fail(format!("rejection.cost must be >= 0, got {}", r.cost));
        }
        if r.sweep_rates.is_empty()
            || r.sweep_rates.iter().any(|x| !(0.0..1.0).contains(x))
            || r.sweep_rates.windows(2).any(|w| w[0] > w[1])
        {
            return fail("rejection.sweep_rates must be non-empty, ascending and in [0, 1)".into());
        }
        Ok(())
    }

    /// Hash of the fields that determine the prepared data.
    pub fn data_hash(&self) -> String {
        hash_json(&self.data)
    }
}

pub fn hash_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
