//! Ambiguity rejection: estimate each window's prediction-error variance
//! from its features and reject when the estimate exceeds the t-interval
//! variance threshold `(W / (2·t_{α/2,N−1}))²`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecaster::{window_loss, ErrorMetric, ForecastError, ResidualRecord};
use crate::linalg::{Cholesky, Matrix};
use crate::scalar::Scalar;
use crate::stats::{self, ConfidenceSpec, StatsError};
use crate::threshold::{Threshold, Uncalibrated};

pub const MIN_RECORDS: usize = 10;

#[derive(Debug, Error)]
pub enum AmbiguityError {
    #[error("need at least {MIN_RECORDS} residual records, got {0}")]
    TooFewRecords(usize),
    #[error("all feature vectors are identical")]
    DegenerateFeatures,
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("error regression could not be solved; increase the ridge penalty")]
    Singular,
    #[error("rejection cost must be non-negative, got {0}")]
    NegativeCost(f64),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Uncalibrated(#[from] Uncalibrated),
}

/// Which view of a window the error model reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureMode {
    /// The flattened, normalized input window.
    #[default]
    Input,
    /// The VAE latent mean of the input window.
    Latent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ErrorModelConfig {
    pub feature_mode: FeatureMode,
    /// Ridge penalty on standardized features.
    pub ridge: f64,
    /// Added to every error before taking the log.
    pub floor: f64,
}

impl Default for ErrorModelConfig {
    fn default() -> Self {
        Self {
            feature_mode: FeatureMode::Input,
            ridge: 1.0,
            floor: 1e-8,
        }
    }
}

/// Log-linear regressor predicting a window's error from its features.
///
/// The prediction is `exp(intercept + w·standardize(x)) · smearing`, which is
/// positive for every input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ErrorVarianceEstimator<T> {
    pub feature_mode: FeatureMode,
    pub feature_mean: Vec<T>,
    pub feature_scale: Vec<T>,
    pub weights: Vec<T>,
    pub intercept: T,
    /// Mean of `exp(residual)` on the fitting set; maps the geometric-mean
    /// prediction back to the arithmetic scale of the errors.
    pub smearing: T,
    pub config: ErrorModelConfig,
}

/// Fits `log(e + floor)` on standardized features by ridge least squares.
/// `records` must already carry features in the configured mode.
pub fn fit_error_model<T: Scalar>(
    records: &[ResidualRecord<T>],
    config: ErrorModelConfig,
) -> Result<ErrorVarianceEstimator<T>, AmbiguityError> {
    let n = records.len();
    if n < MIN_RECORDS {
        return Err(AmbiguityError::TooFewRecords(n));
    }
    let p = records[0].features.len();
    for r in records {
        if r.features.len() != p {
            return Err(AmbiguityError::Dimension {
                expected: p,
                got: r.features.len(),
            });
        }
    }
    if records.iter().all(|r| r.features == records[0].features) {
        return Err(AmbiguityError::DegenerateFeatures);
    }
    let nf = T::from_usize_lossy(n);
    let floor = T::lit(config.floor);
    let targets: Vec<T> = records.iter().map(|r| (r.error.max(T::zero()) + floor).ln()).collect();
    let y_mean = targets.iter().copied().sum::<T>() / nf;

    let mut mean = vec![T::zero(); p];
    for r in records {
        for (m, &x) in mean.iter_mut().zip(&r.features) {
            *m = *m + x;
        }
    }
    mean.iter_mut().for_each(|m| *m = *m / nf);
    let mut scale = vec![T::zero(); p];
    for r in records {
        for ((s, &x), &m) in scale.iter_mut().zip(&r.features).zip(&mean) {
            *s = *s + (x - m) * (x - m);
        }
    }
    for s in &mut scale {
        let sd = (*s / nf).sqrt();
        *s = if sd > T::zero() { sd } else { T::one() };
    }

    let standardized: Vec<Vec<T>> = records
        .iter()
        .map(|r| {
            r.features
                .iter()
                .zip(&mean)
                .zip(&scale)
                .map(|((&x, &m), &s)| (x - m) / s)
                .collect()
        })
        .collect();
    let mut gram = Matrix::zeros(p, p);
    let mut rhs = vec![T::zero(); p];
    for (x, &y) in standardized.iter().zip(&targets) {
        let yc = y - y_mean;
        for i in 0..p {
            rhs[i] = rhs[i] + x[i] * yc;
            let row = gram.row_mut(i);
            for j in 0..=i {
                row[j] = row[j] + x[i] * x[j];
            }
        }
    }
    let ridge = T::lit(config.ridge.max(0.0));
    for i in 0..p {
        gram[(i, i)] = gram[(i, i)] + ridge;
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    let weights = Cholesky::new(&gram)
        .and_then(|c| c.solve(&rhs))
        .map_err(|_| AmbiguityError::Singular)?;

    let smearing = standardized
        .iter()
        .zip(&targets)
        .map(|(x, &y)| (y - y_mean - crate::linalg::dot(&weights, x)).exp())
        .sum::<T>()
        / nf;

    Ok(ErrorVarianceEstimator {
        feature_mode: config.feature_mode,
        feature_mean: mean,
        feature_scale: scale,
        weights,
        intercept: y_mean,
        smearing,
        config,
    })
}

impl<T: Scalar> ErrorVarianceEstimator<T> {
    pub fn feature_dim(&self) -> usize {
        self.weights.len()
    }

    /// Fitted value of `log(e + floor)`.
    pub fn log_error(&self, features: &[T]) -> Result<T, AmbiguityError> {
        if features.len() != self.feature_dim() {
            return Err(AmbiguityError::Dimension {
                expected: self.feature_dim(),
                got: features.len(),
            });
        }
        let mut acc = self.intercept;
        for (((&x, &m), &s), &w) in features
            .iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .zip(&self.weights)
        {
            acc = acc + w * (x - m) / s;
        }
        Ok(acc)
    }

    /// Estimated error variance of the window; always `≥ 0`.
    pub fn estimate(&self, features: &[T]) -> Result<T, AmbiguityError> {
        Ok(self.log_error(features)?.exp() * self.smearing)
    }
}

/// How the variance threshold was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CalibrationTarget {
    /// Reject a given fraction of the calibration scores.
    Rate { target_rate: f64 },
    /// Interval width `W` at significance `alpha`.
    Interval { alpha: f64, width: f64 },
}

/// Outcome of threshold calibration, in both parameterizations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AmbiguityCalibration<T> {
    pub target: CalibrationTarget,
    pub var_threshold: T,
    pub spec: ConfidenceSpec,
    /// Width `W` with `variance_threshold(W, spec) = var_threshold`.
    pub width: T,
    /// Fraction of calibration scores strictly above the threshold.
    pub realized_rate: f64,
}

/// Picks the variance threshold from validation scores.
///
/// Rate mode takes the empirical `(1 − rate)` quantile; interval mode uses
/// `(W / (2·t_{α/2,n−1}))²` with `n` the number of calibration scores. In
/// rate mode `alpha` only fixes the reported equivalent width.
pub fn calibrate_ambiguity<T: Scalar>(
    val_scores: &[T],
    target: CalibrationTarget,
    alpha: f64,
) -> Result<AmbiguityCalibration<T>, AmbiguityError> {
    if val_scores.is_empty() {
        return Err(StatsError::TooFewSamples { needed: 1, got: 0 }.into());
    }
    let n = val_scores.len();
    let (var_threshold, spec, width) = match target {
        CalibrationTarget::Rate { target_rate } => {
            let spec = ConfidenceSpec::for_samples(alpha, n.max(2))?;
            let cal = stats::calibrate_rate(val_scores, target_rate)?;
            (cal.threshold, spec, stats::width_for_variance(cal.threshold, spec))
        }
        CalibrationTarget::Interval { alpha, width } => {
            let spec = ConfidenceSpec::for_samples(alpha, n.max(2))?;
            let w = T::lit(width);
            (stats::variance_threshold(w, spec)?, spec, w)
        }
    };
    let exceed = val_scores.iter().filter(|&&s| s > var_threshold).count();
    Ok(AmbiguityCalibration {
        target,
        var_threshold,
        spec,
        width,
        realized_rate: exceed as f64 / n as f64,
    })
}

/// Error estimator plus the threshold it is compared against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct AmbiguityRejector<T> {
    pub estimator: ErrorVarianceEstimator<T>,
    pub threshold: Threshold<T>,
    pub calibration: Option<AmbiguityCalibration<T>>,
}

impl<T: Scalar> AmbiguityRejector<T> {
    pub fn uncalibrated(estimator: ErrorVarianceEstimator<T>) -> Self {
        Self {
            estimator,
            threshold: Threshold::Uncalibrated,
            calibration: None,
        }
    }

    pub fn with_calibration(mut self, cal: AmbiguityCalibration<T>) -> Self {
        self.threshold = Threshold::Value(cal.var_threshold);
        self.calibration = Some(cal);
        self
    }

    pub fn disabled(mut self) -> Self {
        self.threshold = Threshold::Disabled;
        self.calibration = None;
        self
    }

    /// 1 iff the estimated variance exceeds the threshold (equality accepts).
    pub fn decide_variance(&self, estimated_variance: T) -> Result<bool, AmbiguityError> {
        Ok(self.threshold.exceeded_by(estimated_variance)?)
    }

    pub fn decide(&self, features: &[T]) -> Result<bool, AmbiguityError> {
        self.decide_variance(self.estimator.estimate(features)?)
    }
}

/// `c` when rejected, otherwise the window loss of the forecast.
pub fn sequence_rejection_loss<T: Scalar>(
    prediction: &Matrix<T>,
    truth: &Matrix<T>,
    rejected: bool,
    cost: T,
    metric: ErrorMetric,
) -> Result<T, AmbiguityError> {
    if !(cost >= T::zero()) {
        return Err(AmbiguityError::NegativeCost(cost.to_f64_lossy()));
    }
    if rejected {
        Ok(cost)
    } else {
        Ok(window_loss(prediction, truth, metric)?)
    }
}
