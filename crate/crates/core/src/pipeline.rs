//! Dual rejection (novelty first, then ambiguity), empirical risk
//! `R_λ = (1 − ε)·L_accepted + λ·ε`, ideal/random reference risks, and the
//! rate sweep and ablation drivers built on them.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambiguity::{
    self, AmbiguityCalibration, AmbiguityError, AmbiguityRejector, CalibrationTarget, ErrorModelConfig,
    ErrorVarianceEstimator, FeatureMode,
};
use crate::forecaster::{collect_residuals, window_loss, ErrorMetric, ForecastError, PredictionSource};
use crate::novelty::{self, NoveltyCalibration, NoveltyError, NoveltyRejector};
use crate::scalar::Scalar;
use crate::stats::{self, StatsError};
use crate::threshold::{Threshold, Uncalibrated};
use crate::tsio::{DataError, WindowPair};
use crate::vae::{VaeConfig, VaeError, VaeTrainLog};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Ambiguity(#[from] AmbiguityError),
    #[error(transparent)]
    Novelty(#[from] NoveltyError),
    #[error(transparent)]
    Forecast(#[from] ForecastError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0} rejector is not calibrated for the active mode")]
    Uncalibrated(&'static str),
    #[error("lambda must be finite and non-negative, got {0}")]
    InvalidLambda(f64),
    #[error("rejection rate must lie in [0, 1), got {0}")]
    InvalidEpsilon(f64),
    #[error("loss list is empty")]
    EmptyLosses,
    #[error("sweep rates must be ascending and in [0, 1)")]
    InvalidRates,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which sub-rejectors may fire.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionMode {
    #[default]
    Dual,
    AmbiguityOnly,
    NoveltyOnly,
    None,
}

impl RejectionMode {
    pub fn novelty_active(self) -> bool {
        matches!(self, Self::Dual | Self::NoveltyOnly)
    }

    pub fn ambiguity_active(self) -> bool {
        matches!(self, Self::Dual | Self::AmbiguityOnly)
    }

    /// Ablation label: Base, NRO, ARO, DRM.
    pub fn label(self) -> &'static str {
        match self {
            Self::None => "Base",
            Self::NoveltyOnly => "NRO",
            Self::AmbiguityOnly => "ARO",
            Self::Dual => "DRM",
        }
    }

    /// Fixed ablation order.
    pub const ABLATION: [RejectionMode; 4] = [Self::None, Self::NoveltyOnly, Self::AmbiguityOnly, Self::Dual];
}

/// Both thresholds of a dual rejector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Thresholds<T> {
    pub variance: Threshold<T>,
    pub novelty: Threshold<T>,
}

impl<T: Scalar> Thresholds<T> {
    pub fn disabled() -> Self {
        Self {
            variance: Threshold::Disabled,
            novelty: Threshold::Disabled,
        }
    }
}

/// Outcome of the combined decision for one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TotalDecision<T> {
    pub rejected: bool,
    pub novelty_fired: bool,
    pub ambiguity_fired: bool,
    pub novelty_score: T,
    /// `None` when novelty already rejected and the variance check was skipped.
    pub variance_score: Option<T>,
}

/// Applies the combined rule to precomputed scores. Novelty is checked first;
/// when it fires the variance score is reported as skipped.
pub fn decide_scores<T: Scalar>(
    thresholds: &Thresholds<T>,
    mode: RejectionMode,
    novelty_score: T,
    variance_score: impl FnOnce() -> Result<T, PipelineError>,
) -> Result<TotalDecision<T>, PipelineError> {
    let novelty_fired = if mode.novelty_active() {
        thresholds
            .novelty
            .exceeded_by(novelty_score)
            .map_err(|Uncalibrated| PipelineError::Uncalibrated("novelty"))?
    } else {
        false
    };
    if novelty_fired {
        return Ok(TotalDecision {
            rejected: true,
            novelty_fired,
            ambiguity_fired: false,
            novelty_score,
            variance_score: None,
        });
    }
    let v = variance_score()?;
    let ambiguity_fired = if mode.ambiguity_active() {
        thresholds
            .variance
            .exceeded_by(v)
            .map_err(|Uncalibrated| PipelineError::Uncalibrated("ambiguity"))?
    } else {
        false
    };
    Ok(TotalDecision {
        rejected: ambiguity_fired,
        novelty_fired,
        ambiguity_fired,
        novelty_score,
        variance_score: Some(v),
    })
}

/// Ambiguity and novelty rejectors sharing one VAE, plus the active mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DualRejector<T> {
    pub ambiguity: AmbiguityRejector<T>,
    pub novelty: NoveltyRejector<T>,
    pub mode: RejectionMode,
}

impl<T: Scalar> DualRejector<T> {
    pub fn new(ambiguity: AmbiguityRejector<T>, novelty: NoveltyRejector<T>, mode: RejectionMode) -> Self {
        Self {
            ambiguity,
            novelty,
            mode,
        }
    }

    pub fn thresholds(&self) -> Thresholds<T> {
        Thresholds {
            variance: self.ambiguity.threshold,
            novelty: self.novelty.threshold,
        }
    }

    /// Novelty distance and estimated error variance of a flattened window.
    pub fn scores(&self, window: &[T]) -> Result<(T, T), PipelineError> {
        let enc = self.novelty.vae.encode(window)?;
        let nov = self.novelty.score_latent(&enc.mu)?;
        let var = self.variance_from(window, &enc.mu)?;
        Ok((nov, var))
    }

    fn variance_from(&self, window: &[T], latent_mu: &[T]) -> Result<T, PipelineError> {
        let feats = match self.ambiguity.estimator.feature_mode {
            FeatureMode::Input => window,
            FeatureMode::Latent => latent_mu,
        };
        Ok(self.ambiguity.estimator.estimate(feats)?)
    }

    /// Combined decision for one flattened window, short-circuiting the
    /// variance estimate when novelty rejects.
    pub fn decide_total(&self, window: &[T]) -> Result<TotalDecision<T>, PipelineError> {
        let enc = self.novelty.vae.encode(window)?;
        let nov = self.novelty.score_latent(&enc.mu)?;
        decide_scores(&self.thresholds(), self.mode, nov, || self.variance_from(window, &enc.mu))
    }
}

/// Error-model features for a window under the given mode.
pub fn window_features<T: Scalar>(
    mode: FeatureMode,
    novelty: &NoveltyRejector<T>,
    window: &WindowPair<T>,
) -> Result<Vec<T>, PipelineError> {
    Ok(match mode {
        FeatureMode::Input => window.flat_input().to_vec(),
        FeatureMode::Latent => novelty.vae.encode(window.flat_input())?.mu,
    })
}

/// Trains the VAE on the training inputs and fits the latent summary.
pub fn train_novelty_model<T: Scalar>(
    train: &[WindowPair<T>],
    config: VaeConfig,
    seed: u64,
) -> Result<(NoveltyRejector<T>, VaeTrainLog<T>), PipelineError> {
    let inputs: Vec<Vec<T>> = train.iter().map(|w| w.flat_input().to_vec()).collect();
    let (vae, log) = crate::vae::train_vae(&inputs, config, seed)?;
    let summary = novelty::fit_latent_summary(&vae, &inputs)?;
    Ok((NoveltyRejector::new(vae, summary)?, log))
}

/// Fits the error-variance model on validation residuals.
pub fn fit_ambiguity_model<T: Scalar, P: PredictionSource<T> + ?Sized>(
    source: &P,
    novelty: &NoveltyRejector<T>,
    validation: &[WindowPair<T>],
    metric: ErrorMetric,
    config: ErrorModelConfig,
) -> Result<ErrorVarianceEstimator<T>, PipelineError> {
    let mut records = collect_residuals(source, validation, metric)?;
    if config.feature_mode == FeatureMode::Latent {
        for (r, w) in records.iter_mut().zip(validation) {
            r.features = window_features(FeatureMode::Latent, novelty, w)?;
        }
    }
    Ok(ambiguity::fit_error_model(&records, config)?)
}

/// Per-window scores and losses; independent of thresholds, so one pass
/// serves every sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ScoredWindow<T> {
    pub origin_index: usize,
    pub novelty_score: T,
    pub variance_score: T,
    /// Window loss under the configured metric.
    pub loss: T,
    pub mae: T,
    pub mse: T,
}

/// Windows are scored in parallel; output order follows `windows`.
pub fn score_windows<T: Scalar, P: PredictionSource<T> + Sync + ?Sized>(
    rejector: &DualRejector<T>,
    windows: &[WindowPair<T>],
    source: &P,
    metric: ErrorMetric,
) -> Result<Vec<ScoredWindow<T>>, PipelineError> {
    windows
        .par_iter()
        .map(|w| {
            let (novelty_score, variance_score) = rejector.scores(w.flat_input())?;
            let pred = source.predict_window(w)?;
            let mae = window_loss(&pred, &w.target, ErrorMetric::Absolute)?;
            let mse = window_loss(&pred, &w.target, ErrorMetric::Squared)?;
            Ok(ScoredWindow {
                origin_index: w.origin_index,
                novelty_score,
                variance_score,
                loss: match metric {
                    ErrorMetric::Absolute => mae,
                    ErrorMetric::Squared => mse,
                },
                mae,
                mse,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct WindowOutcome<T> {
    pub origin_index: usize,
    pub rejected: bool,
    /// Loss the forecast incurs if accepted.
    pub loss: T,
    pub variance_score: Option<T>,
    pub novelty_score: T,
}

/// Empirical risk of a rejector on a test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RiskReport<T> {
    pub mode: RejectionMode,
    pub metric: ErrorMetric,
    pub n_windows: usize,
    pub n_rejected: usize,
    pub epsilon: f64,
    pub lambda: T,
    /// `None` when every window was rejected.
    pub l_accepted: Option<T>,
    pub l_all: T,
    pub risk: T,
    pub mae_accepted: Option<T>,
    pub mse_accepted: Option<T>,
    pub mae_all: T,
    pub mse_all: T,
    pub bound_ideal: T,
    pub bound_random: T,
    #[serde(skip)]
    pub per_window: Vec<WindowOutcome<T>>,
}

fn check_lambda<T: Scalar>(lambda: T) -> Result<(), PipelineError> {
    if !(lambda >= T::zero()) || !lambda.is_finite() {
        return Err(PipelineError::InvalidLambda(lambda.to_f64_lossy()));
    }
    Ok(())
}

fn mean_of<T: Scalar>(values: impl Iterator<Item = T>) -> Option<T> {
    let (sum, n) = values.fold((T::zero(), 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / T::from_usize_lossy(n))
}

/// Applies fixed thresholds to scored windows and assembles the report.
pub fn evaluate_scored<T: Scalar>(
    scored: &[ScoredWindow<T>],
    thresholds: &Thresholds<T>,
    mode: RejectionMode,
    lambda: T,
    metric: ErrorMetric,
) -> Result<RiskReport<T>, PipelineError> {
    check_lambda(lambda)?;
    if scored.is_empty() {
        return Err(PipelineError::EmptyLosses);
    }
    let mut per_window = Vec::with_capacity(scored.len());
    for w in scored {
        let d = decide_scores(thresholds, mode, w.novelty_score, || Ok(w.variance_score))?;
        per_window.push(WindowOutcome {
            origin_index: w.origin_index,
            rejected: d.rejected,
            loss: w.loss,
            variance_score: d.variance_score,
            novelty_score: w.novelty_score,
        });
    }
    let n = scored.len();
    let n_rejected = per_window.iter().filter(|o| o.rejected).count();
    let epsilon = n_rejected as f64 / n as f64;
    let eps = T::lit(epsilon);

    let accepted = || scored.iter().zip(&per_window).filter(|(_, o)| !o.rejected).map(|(w, _)| w);
    let l_accepted = mean_of(accepted().map(|w| w.loss));
    let mae_accepted = mean_of(accepted().map(|w| w.mae));
    let mse_accepted = mean_of(accepted().map(|w| w.mse));
    let l_all = mean_of(scored.iter().map(|w| w.loss)).expect("non-empty");
    let mae_all = mean_of(scored.iter().map(|w| w.mae)).expect("non-empty");
    let mse_all = mean_of(scored.iter().map(|w| w.mse)).expect("non-empty");

    let risk = match l_accepted {
        Some(la) => (T::one() - eps) * la + lambda * eps,
        None => lambda,
    };
    let losses: Vec<T> = scored.iter().map(|w| w.loss).collect();
    let (bound_ideal, bound_random) = if n_rejected == n {
        (lambda, lambda)
    } else {
        (
            bound_ideal(&losses, epsilon, lambda)?,
            bound_random(&losses, epsilon, lambda)?,
        )
    };
    Ok(RiskReport {
        mode,
        metric,
        n_windows: n,
        n_rejected,
        epsilon,
        lambda,
        l_accepted,
        l_all,
        risk,
        mae_accepted,
        mse_accepted,
        mae_all,
        mse_all,
        bound_ideal,
        bound_random,
        per_window,
    })
}

/// Scores `test`, applies the rejector's own thresholds and reports risk.
pub fn evaluate<T: Scalar, P: PredictionSource<T> + Sync + ?Sized>(
    rejector: &DualRejector<T>,
    test: &[WindowPair<T>],
    source: &P,
    lambda: T,
    metric: ErrorMetric,
) -> Result<RiskReport<T>, PipelineError> {
    let scored = score_windows(rejector, test, source, metric)?;
    evaluate_scored(&scored, &rejector.thresholds(), rejector.mode, lambda, metric)
}

fn check_bound_inputs<T: Scalar>(losses: &[T], epsilon: f64, lambda: T) -> Result<(), PipelineError> {
    if losses.is_empty() {
        return Err(PipelineError::EmptyLosses);
    }
    if !(0.0..1.0).contains(&epsilon) {
        return Err(PipelineError::InvalidEpsilon(epsilon));
    }
    check_lambda(lambda)
}

/// Risk of rejecting the highest-loss windows up to a mass of exactly `ε·n`
/// windows (ties: the earlier window goes first). When `ε·n` is fractional
/// the last window is removed in part, so the rejection term is `λ·ε` as in
/// [`bound_random`].
pub fn bound_ideal<T: Scalar>(losses: &[T], epsilon: f64, lambda: T) -> Result<T, PipelineError> {
    check_bound_inputs(losses, epsilon, lambda)?;
    let n = losses.len();
    let mass = epsilon * n as f64;
    let whole = ((mass + 1e-9).floor() as usize).min(n);
    let part = (mass - whole as f64).max(0.0);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        losses[b]
            .partial_cmp(&losses[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut removed = vec![false; n];
    for &i in &order[..whole] {
        removed[i] = true;
    }
    // summed in window order so that ε = 0 reproduces the plain mean exactly
    let mut kept = losses.iter().zip(&removed).filter(|(_, &r)| !r).map(|(&l, _)| l).sum::<T>();
    if part > 0.0 && whole < n {
        kept = kept - T::lit(part) * losses[order[whole]];
    }
    let ideal = kept / T::from_usize_lossy(n) + lambda * T::lit(epsilon);
    // never above the random bound; where the two coincide (e.g. one window)
    // the different evaluation orders can differ in the last bit
    Ok(ideal.min(bound_random(losses, epsilon, lambda)?))
}

/// Expected risk of rejecting a uniformly random `ε` fraction:
/// `(1 − ε)·mean(losses) + λ·ε`.
pub fn bound_random<T: Scalar>(losses: &[T], epsilon: f64, lambda: T) -> Result<T, PipelineError> {
    check_bound_inputs(losses, epsilon, lambda)?;
    let eps = T::lit(epsilon);
    let mean = losses.iter().copied().sum::<T>() / T::from_usize_lossy(losses.len());
    Ok((T::one() - eps) * mean + lambda * eps)
}

/// What a calibration should aim for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectionTarget {
    /// Combined rate; in dual mode each rejector gets half the budget.
    Rate { rate: f64 },
    /// Interval-derived variance threshold plus a novelty rate.
    Interval { alpha: f64, width: f64, novelty_rate: f64 },
}

/// Per-rejector rate budgets for a combined target under `mode`.
pub fn rate_budget(mode: RejectionMode, rate: f64) -> (Option<f64>, Option<f64>) {
    match mode {
        RejectionMode::None => (None, None),
        RejectionMode::NoveltyOnly => (Some(rate), None),
        RejectionMode::AmbiguityOnly => (None, Some(rate)),
        RejectionMode::Dual => (Some(rate / 2.0), Some(rate / 2.0)),
    }
}

/// Calibration record for a dual rejector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DualCalibration<T> {
    pub target: RejectionTarget,
    pub mode: RejectionMode,
    pub ambiguity: Option<AmbiguityCalibration<T>>,
    pub novelty: Option<NoveltyCalibration<T>>,
    /// Combined rejection rate on the validation windows.
    pub validation_rate: f64,
    pub validation_windows: usize,
}

/// Sets both thresholds from validation scores. Inactive rejectors get the
/// disabled sentinel; a zero rate disables the corresponding rejector.
pub fn calibrate_dual<T: Scalar>(
    mut rejector: DualRejector<T>,
    validation: &[ScoredWindow<T>],
    mode: RejectionMode,
    target: RejectionTarget,
    alpha: f64,
) -> Result<(DualRejector<T>, DualCalibration<T>), PipelineError> {
    let nov_scores: Vec<T> = validation.iter().map(|w| w.novelty_score).collect();
    let var_scores: Vec<T> = validation.iter().map(|w| w.variance_score).collect();

    let (nov_rate, amb_target) = match target {
        RejectionTarget::Rate { rate } => {
            if !(0.0..1.0).contains(&rate) {
                return Err(StatsError::InvalidRate(rate).into());
            }
            let (n, a) = rate_budget(mode, rate);
            (n, a.map(|r| CalibrationTarget::Rate { target_rate: r }))
        }
        RejectionTarget::Interval {
            alpha,
            width,
            novelty_rate,
        } => (
            mode.novelty_active().then_some(novelty_rate),
            mode.ambiguity_active().then_some(CalibrationTarget::Interval { alpha, width }),
        ),
    };

    let mut nov_cal = None;
    rejector.novelty = match nov_rate {
        Some(r) if r > 0.0 => {
            let cal = novelty::calibrate_novelty(&nov_scores, r)?;
            let threshold = Threshold::Value(cal.threshold);
            nov_cal = Some(NoveltyCalibration::Rate(cal));
            rejector.novelty.with_threshold(threshold, nov_cal)
        }
        _ => rejector.novelty.disabled(),
    };
    let mut amb_cal = None;
    rejector.ambiguity = match amb_target {
        Some(CalibrationTarget::Rate { target_rate }) if target_rate <= 0.0 => rejector.ambiguity.disabled(),
        Some(t) => {
            let cal = ambiguity::calibrate_ambiguity(&var_scores, t, alpha)?;
            amb_cal = Some(cal);
            rejector.ambiguity.with_calibration(cal)
        }
        None => rejector.ambiguity.disabled(),
    };
    rejector.mode = mode;

    let thresholds = rejector.thresholds();
    let mut rejected = 0;
    for w in validation {
        if decide_scores(&thresholds, mode, w.novelty_score, || Ok(w.variance_score))?.rejected {
            rejected += 1;
        }
    }
    let record = DualCalibration {
        target,
        mode,
        ambiguity: amb_cal,
        novelty: nov_cal,
        validation_rate: rejected as f64 / validation.len().max(1) as f64,
        validation_windows: validation.len(),
    };
    Ok((rejector, record))
}

/// Thresholds for a combined `rate` under `mode`, from validation scores.
pub fn thresholds_for_rate<T: Scalar>(
    validation: &[ScoredWindow<T>],
    mode: RejectionMode,
    rate: f64,
) -> Result<Thresholds<T>, PipelineError> {
    let (nov, amb) = rate_budget(mode, rate);
    let pick = |r: Option<f64>, f: fn(&ScoredWindow<T>) -> T| -> Result<Threshold<T>, PipelineError> {
        match r {
            Some(r) if r > 0.0 => {
                let scores: Vec<T> = validation.iter().map(f).collect();
                Ok(Threshold::Value(stats::calibrate_rate(&scores, r)?.threshold))
            }
            _ => Ok(Threshold::Disabled),
        }
    };
    Ok(Thresholds {
        novelty: pick(nov, |w| w.novelty_score)?,
        variance: pick(amb, |w| w.variance_score)?,
    })
}

/// One row of a rate sweep or ablation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct SweepRow<T> {
    pub label: String,
    pub target_rate: f64,
    pub realized_rate: f64,
    pub var_threshold: Option<T>,
    pub d_threshold: Option<T>,
    pub mae_accepted: Option<T>,
    pub mse_accepted: Option<T>,
    pub risk: T,
    pub bound_ideal: T,
    pub bound_random: T,
}

fn row_from<T: Scalar>(label: String, target_rate: f64, th: &Thresholds<T>, rep: &RiskReport<T>) -> SweepRow<T> {
    let value = |t: Threshold<T>| match t {
        Threshold::Value(v) => Some(v),
        _ => None,
    };
    SweepRow {
        label,
        target_rate,
        realized_rate: rep.epsilon,
        var_threshold: value(th.variance),
        d_threshold: value(th.novelty),
        mae_accepted: rep.mae_accepted,
        mse_accepted: rep.mse_accepted,
        risk: rep.risk,
        bound_ideal: rep.bound_ideal,
        bound_random: rep.bound_random,
    }
}

/// Default rate grid of the sweep.
pub const DEFAULT_SWEEP_RATES: [f64; 6] = [0.0, 0.02, 0.06, 0.10, 0.12, 0.16];

/// Recalibrates both thresholds per target rate on validation scores and
/// evaluates each setting on the test scores. Rate 0 means no rejection.
pub fn sweep<T: Scalar>(
    validation: &[ScoredWindow<T>],
    test: &[ScoredWindow<T>],
    mode: RejectionMode,
    lambda: T,
    metric: ErrorMetric,
    rates: &[f64],
) -> Result<Vec<SweepRow<T>>, PipelineError> {
    if rates.iter().any(|r| !(0.0..1.0).contains(r)) || rates.windows(2).any(|w| w[0] > w[1]) {
        return Err(PipelineError::InvalidRates);
    }
    rates
        .iter()
        .map(|&rate| {
            let (th, m) = if rate == 0.0 {
                (Thresholds::disabled(), RejectionMode::None)
            } else {
                (thresholds_for_rate(validation, mode, rate)?, mode)
            };
            let rep = evaluate_scored(test, &th, m, lambda, metric)?;
            Ok(row_from(format!("{rate}"), rate, &th, &rep))
        })
        .collect()
}

/// Base / NRO / ARO / DRM at one target rate.
pub fn ablate<T: Scalar>(
    validation: &[ScoredWindow<T>],
    test: &[ScoredWindow<T>],
    rate: f64,
    lambda: T,
    metric: ErrorMetric,
) -> Result<Vec<SweepRow<T>>, PipelineError> {
    RejectionMode::ABLATION
        .iter()
        .map(|&mode| {
            let th = thresholds_for_rate(validation, mode, rate)?;
            let rep = evaluate_scored(test, &th, mode, lambda, metric)?;
            Ok(row_from(mode.label().to_string(), rate, &th, &rep))
        })
        .collect()
}

fn opt<T: Scalar>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes the sweep table: `target_rate, realized_rate, var_threshold,
/// d_threshold, mae_accepted, mse_accepted, risk, bound_ideal, bound_random`.
/// Disabled thresholds and undefined accepted metrics are empty cells.
pub fn write_sweep_csv<T: Scalar, W: Write>(writer: W, rows: &[SweepRow<T>]) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "target_rate",
        "realized_rate",
        "var_threshold",
        "d_threshold",
        "mae_accepted",
        "mse_accepted",
        "risk",
        "bound_ideal",
        "bound_random",
    ])?;
    for r in rows {
        wtr.write_record([
            r.target_rate.to_string(),
            r.realized_rate.to_string(),
            opt(r.var_threshold),
            opt(r.d_threshold),
            opt(r.mae_accepted),
            opt(r.mse_accepted),
            r.risk.to_string(),
            r.bound_ideal.to_string(),
            r.bound_random.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Same columns as the sweep with a leading `model` label column.
pub fn write_ablation_csv<T: Scalar, W: Write>(writer: W, rows: &[SweepRow<T>]) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record([
        "model",
        "target_rate",
        "realized_rate",
        "var_threshold",
        "d_threshold",
        "mae_accepted",
        "mse_accepted",
        "risk",
        "bound_ideal",
        "bound_random",
    ])?;
    for r in rows {
        wtr.write_record([
            r.label.clone(),
            r.target_rate.to_string(),
            r.realized_rate.to_string(),
            opt(r.var_threshold),
            opt(r.d_threshold),
            opt(r.mae_accepted),
            opt(r.mse_accepted),
            r.risk.to_string(),
            r.bound_ideal.to_string(),
            r.bound_random.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `origin_index, decision, loss, variance_score, novelty_score`; a skipped
/// variance score is an empty cell.
pub fn write_per_window_csv<T: Scalar, W: Write>(writer: W, report: &RiskReport<T>) -> Result<(), PipelineError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["origin_index", "decision", "loss", "variance_score", "novelty_score"])?;
    for o in &report.per_window {
        wtr.write_record([
            o.origin_index.to_string(),
            u8::from(o.rejected).to_string(),
            o.loss.to_string(),
            opt(o.variance_score),
            o.novelty_score.to_string(),
        ])?;
    }
    wtr.flush()?;
    Ok(())
}
