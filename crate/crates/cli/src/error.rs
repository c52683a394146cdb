use std::path::PathBuf;

use dualrej::pipeline::PipelineError;
use dualrej::{AmbiguityError, DataError, ForecastError, NoveltyError, StatsError, VaeError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training diverged: {0}")]
    Diverged(String),
    #[error("missing artifact {}: run `dualrej {stage}` first", path.display())]
    MissingArtifact { path: PathBuf, stage: &'static str },
    #[error("stale artifact {}: {reason}", path.display())]
    Stale { path: PathBuf, reason: String },
    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed artifact {}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("{0}")]
    Model(String),
}

impl CliError {
    /// 0 success, 1 other, 2 config, 3 data, 4 divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Data(_) => 3,
            Self::Diverged(_) => 4,
            _ => 1,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::InvalidRatios(_) | DataError::InvalidWindow { .. } => Self::Config(e.to_string()),
            _ => Self::Data(e.to_string()),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::Diverged { .. } => Self::Diverged(e.to_string()),
            ForecastError::InvalidPenalty(_) => Self::Config(e.to_string()),
            ForecastError::MissingPrediction(_)
            | ForecastError::PredictionFile(_)
            | ForecastError::Csv(_)
            | ForecastError::Io(_) => Self::Data(e.to_string()),
            _ => Self::Model(e.to_string()),
        }
    }
}

impl From<VaeError> for CliError {
    fn from(e: VaeError) -> Self {
        match e {
            VaeError::Diverged { .. } | VaeError::NonFinite(_) => Self::Diverged(e.to_string()),
            _ => Self::Model(e.to_string()),
        }
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        match e {
            StatsError::InvalidAlpha(_) | StatsError::InvalidWidth(_) | StatsError::InvalidRate(_) => {
                Self::Config(e.to_string())
            }
            _ => Self::Model(e.to_string()),
        }
    }
}

impl From<NoveltyError> for CliError {
    fn from(e: NoveltyError) -> Self {
        match e {
            NoveltyError::Vae(v) => v.into(),
            NoveltyError::Stats(s) => s.into(),
            _ => Self::Model(e.to_string()),
        }
    }
}

impl From<AmbiguityError> for CliError {
    fn from(e: AmbiguityError) -> Self {
        match e {
            AmbiguityError::Stats(s) => s.into(),
            AmbiguityError::Forecast(f) => f.into(),
            _ => Self::Model(e.to_string()),
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Ambiguity(a) => a.into(),
            PipelineError::Novelty(n) => n.into(),
            PipelineError::Forecast(f) => f.into(),
            PipelineError::Stats(s) => s.into(),
            PipelineError::Vae(v) => v.into(),
            PipelineError::Data(d) => d.into(),
            PipelineError::InvalidLambda(_) | PipelineError::InvalidRates | PipelineError::InvalidEpsilon(_) => {
                Self::Config(e.to_string())
            }
            _ => Self::Model(e.to_string()),
        }
    }
}
