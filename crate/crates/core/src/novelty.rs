//! Novelty rejection: summarize the training windows in VAE latent space and
//! reject windows whose latent mean lies too far from it in Mahalanobis
//! distance.

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;
use crate::stats::{self, GaussianSummary, RateCalibration, StatsError};
use crate::threshold::{Threshold, Uncalibrated};
use crate::vae::{LatentEncoding, VaeError, VaeParams};

#[derive(Debug, Error)]
pub enum NoveltyError {
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Uncalibrated(#[from] Uncalibrated),
    #[error("summary has dimension {summary}, VAE latent dimension is {latent}")]
    DimensionMismatch { summary: usize, latent: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Encodes every training window and fits the latent Gaussian summary.
pub fn fit_latent_summary<T: Scalar>(
    vae: &VaeParams<T>,
    train_windows: &[Vec<T>],
) -> Result<GaussianSummary<T>, NoveltyError> {
    let encodings = train_windows
        .iter()
        .map(|x| vae.encode(x))
        .collect::<Result<Vec<_>, _>>()?;
    summary_from_encodings(&encodings)
}

pub fn summary_from_encodings<T: Scalar>(encodings: &[LatentEncoding<T>]) -> Result<GaussianSummary<T>, NoveltyError> {
    let means: Vec<Vec<T>> = encodings.iter().map(|e| e.mu.clone()).collect();
    let vars: Vec<Vec<T>> = encodings.iter().map(|e| e.var.clone()).collect();
    Ok(stats::fit_gaussian_summary(&means, &vars)?)
}

/// How the distance threshold was set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", bound = "T: Scalar")]
pub enum NoveltyCalibration<T> {
    /// Empirical quantile of validation scores.
    Rate(RateCalibration<T>),
    /// Chi quantile with `latent_dim` degrees of freedom; only exact if the
    /// latent means were Gaussian with the summary covariance.
    Chi { target_rate: f64, threshold: T },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct NoveltyRejector<T> {
    pub vae: VaeParams<T>,
    pub summary: GaussianSummary<T>,
    pub threshold: Threshold<T>,
    pub calibration: Option<NoveltyCalibration<T>>,
}

impl<T: Scalar> NoveltyRejector<T> {
    pub fn new(vae: VaeParams<T>, summary: GaussianSummary<T>) -> Result<Self, NoveltyError> {
        if summary.dim() != vae.latent_dim {
            return Err(NoveltyError::DimensionMismatch {
                summary: summary.dim(),
                latent: vae.latent_dim,
            });
        }
        Ok(Self {
            vae,
            summary,
            threshold: Threshold::Uncalibrated,
            calibration: None,
        })
    }

    /// Mahalanobis distance of an already computed latent mean.
    pub fn score_latent(&self, mu: &[T]) -> Result<T, NoveltyError> {
        Ok(stats::mahalanobis(mu, &self.summary)?)
    }

    /// `D_M(x)` of a flattened window; only the latent mean enters.
    pub fn score(&self, window: &[T]) -> Result<T, NoveltyError> {
        let enc = self.vae.encode(window)?;
        self.score_latent(&enc.mu)
    }

    /// 1 iff `score > d_threshold` (equality accepts).
    pub fn decide(&self, score: T) -> Result<bool, NoveltyError> {
        Ok(self.threshold.exceeded_by(score)?)
    }

    pub fn with_threshold(mut self, threshold: Threshold<T>, calibration: Option<NoveltyCalibration<T>>) -> Self {
        self.threshold = threshold;
        self.calibration = calibration;
        self
    }

    pub fn calibrated_on(self, val_scores: &[T], target_rate: f64) -> Result<Self, NoveltyError> {
        let cal = calibrate_novelty(val_scores, target_rate)?;
        Ok(self.with_threshold(Threshold::Value(cal.threshold), Some(NoveltyCalibration::Rate(cal))))
    }

    /// Threshold from the chi distribution, for use without validation data.
    pub fn calibrated_chi(self, target_rate: f64) -> Result<Self, NoveltyError> {
        let threshold = chi_threshold::<T>(self.vae.latent_dim, target_rate)?;
        Ok(self.with_threshold(
            Threshold::Value(threshold),
            Some(NoveltyCalibration::Chi { target_rate, threshold }),
        ))
    }

    pub fn disabled(self) -> Self {
        self.with_threshold(Threshold::Disabled, None)
    }
}

/// Empirical `(1 − rate)` quantile of validation distances.
pub fn calibrate_novelty<T: Scalar>(val_scores: &[T], target_rate: f64) -> Result<RateCalibration<T>, NoveltyError> {
    Ok(stats::calibrate_rate(val_scores, target_rate)?)
}

pub fn chi_threshold<T: Scalar>(latent_dim: usize, target_rate: f64) -> Result<T, NoveltyError> {
    if !(0.0..1.0).contains(&target_rate) {
        return Err(StatsError::InvalidRate(target_rate).into());
    }
    if target_rate == 0.0 {
        return Ok(T::infinity());
    }
    Ok(stats::chi_quantile(1.0 - target_rate, latent_dim))
}

/// Writes `origin_index,score,decision` rows.
pub fn write_score_csv<T: Scalar, W: Write>(writer: W, rows: &[(usize, T, bool)]) -> Result<(), NoveltyError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["origin_index", "score", "decision"])?;
    for (origin, score, rejected) in rows {
        wtr.write_record([origin.to_string(), score.to_string(), u8::from(*rejected).to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}
