//! Selective multivariate time-series forecasting with two rejection rules.
//!
//! A forecast window is rejected when the input is *novel* (its VAE latent
//! mean is far from the training latent distribution in Mahalanobis distance)
//! or *ambiguous* (its estimated prediction-error variance exceeds a
//! threshold derived from a t-interval width). Evaluation reports the risk
//! `R_λ = (1 − ε)·L_accepted + λ·ε` next to ideal and random reference risks.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod ambiguity;
pub mod forecaster;
pub mod linalg;
pub mod nn;
pub mod novelty;
pub mod pipeline;
pub mod scalar;
pub mod stats;
pub mod synthetic;
pub mod threshold;
pub mod tsio;
pub mod vae;

pub use ambiguity::{
    AmbiguityCalibration, AmbiguityError, AmbiguityRejector, CalibrationTarget, ErrorModelConfig,
    ErrorVarianceEstimator, FeatureMode,
};
pub use forecaster::{
    AnyForecaster, ErrorMetric, ForecastError, Forecaster, MlpConfig, MlpForecaster, PredictionSource,
    PredictionTable, RidgeAr,
};
pub use linalg::{Cholesky, LinalgError, Matrix};
pub use novelty::{NoveltyCalibration, NoveltyError, NoveltyRejector};
pub use pipeline::{
    DualCalibration, DualRejector, PipelineError, RejectionMode, RejectionTarget, RiskReport, ScoredWindow,
    SweepRow, Thresholds, TotalDecision,
};
pub use scalar::Scalar;
pub use stats::{ConfidenceSpec, GaussianSummary, RateCalibration, StatsError};
pub use threshold::Threshold;
pub use tsio::{DataError, DatasetSplit, NormalizationStats, RawSeries, WindowPair, WindowSpec};
pub use vae::{VaeConfig, VaeError, VaeParams, VaeTrainLog};

pub type RidgeAR = RidgeAr<f64>;
pub type Mlp = MlpForecaster<f64>;
pub type Vae = VaeParams<f64>;
pub type Series = RawSeries<f64>;
pub type Window = WindowPair<f64>;
pub type Split = DatasetSplit<f64>;
pub type Rejector = DualRejector<f64>;
pub type Report = RiskReport<f64>;
