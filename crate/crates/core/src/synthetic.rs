//! Bundled synthetic benchmark: an AR(1) signal whose noise scale is driven
//! by an observed seasonal volatility channel, with an optional mean-shifted
//! segment late in the series.
//!
//! Used as the stand-in dataset when no real series is available.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::linalg::Matrix;
use rand::Rng;

use crate::nn::{seeded_rng, standard_normal};
use crate::scalar::Scalar;
use crate::ambiguity::{AmbiguityRejector, ErrorModelConfig};
use crate::forecaster::{fit_ridge, ErrorMetric};
use crate::pipeline::{
    fit_ambiguity_model, score_windows, train_novelty_model, DualRejector, PipelineError, RejectionMode, ScoredWindow,
};
use crate::tsio::{prepare_split, DataError, RawSeries, WindowSpec};
use crate::vae::VaeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub length: usize,
    /// AR coefficient of the signal channel.
    pub phi: f64,
    /// Period of the seasonal volatility driver, in rows.
    pub period: f64,
    /// Std of the AR(1) perturbation added to the driver's sine.
    pub driver_noise: f64,
    /// Signal noise std is `noise_base · exp(noise_gain · driver)`.
    pub noise_base: f64,
    pub noise_gain: f64,
    /// Shift of the injected segment, in marginal signal standard deviations.
    pub ood_shift_sigma: f64,
    /// Segment start and length as fractions of `length`; length 0 disables it.
    pub ood_start: f64,
    pub ood_fraction: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            length: 6000,
            phi: 0.9,
            period: 96.0,
            driver_noise: 0.1,
            noise_base: 0.5,
            noise_gain: 1.0,
            ood_shift_sigma: 5.0,
            ood_start: 0.86,
            ood_fraction: 0.02,
        }
    }
}

impl SyntheticConfig {
    pub fn without_ood(self) -> Self {
        Self {
            ood_fraction: 0.0,
            ..self
        }
    }

    pub fn ood_rows(&self) -> Range<usize> {
        let start = ((self.ood_start * self.length as f64) as usize).min(self.length);
        let len = (self.ood_fraction * self.length as f64).round() as usize;
        start..(start + len).min(self.length)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticSeries<T> {
    pub series: RawSeries<T>,
    /// Raw rows carrying the mean shift.
    pub ood_rows: Range<usize>,
    /// Noise std of the signal at each row.
    pub noise_std: Vec<f64>,
}

/// Generates columns `signal, driver` with integer time labels.
pub fn generate<T: Scalar>(config: &SyntheticConfig, seed: u64) -> Result<SyntheticSeries<T>, DataError> {
    let n = config.length;
    if n == 0 {
        return Err(DataError::EmptySeries);
    }
    let mut rng = seeded_rng(seed);
    let burn_in = 200;
    let u_phi: f64 = 0.9;
    let u_scale = config.driver_noise * (1.0 - u_phi * u_phi).sqrt();
    let phase = rng.random_range(0.0..std::f64::consts::TAU);
    let mut x = 0.0;
    let mut u = 0.0;
    let mut signal = Vec::with_capacity(n);
    let mut driver = Vec::with_capacity(n);
    let mut noise_std = Vec::with_capacity(n);
    for t in 0..n + burn_in {
        u = u_phi * u + u_scale * standard_normal::<f64, _>(&mut rng);
        let v = (std::f64::consts::TAU * t as f64 / config.period + phase).sin() + u;
        let s = config.noise_base * (config.noise_gain * v).exp();
        x = config.phi * x + s * standard_normal::<f64, _>(&mut rng);
        if t >= burn_in {
            signal.push(x);
            driver.push(v);
            noise_std.push(s);
        }
    }

    let ood_rows = config.ood_rows();
    if !ood_rows.is_empty() {
        let mean = signal.iter().sum::<f64>() / n as f64;
        let var = signal.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n.max(2) - 1) as f64;
        let shift = config.ood_shift_sigma * var.sqrt();
        for s in &mut signal[ood_rows.clone()] {
            *s += shift;
        }
    }

    let data: Vec<T> = signal
        .iter()
        .zip(&driver)
        .flat_map(|(&s, &d)| [T::lit(s), T::lit(d)])
        .collect();
    let series = RawSeries::new(
        (0..n).map(|i| i.to_string()).collect(),
        Matrix::from_vec(n, 2, data),
        vec!["signal".to_string(), "driver".to_string()],
    )?;
    Ok(SyntheticSeries {
        series,
        ood_rows,
        noise_std,
    })
}

/// Writes the series as CSV with a `time` header column.
pub fn write_csv<T: Scalar, W: std::io::Write>(series: &RawSeries<T>, writer: W) -> Result<(), DataError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend(series.variable_names.iter().cloned());
    wtr.write_record(&header)?;
    for r in 0..series.len() {
        let mut rec = vec![series.timestamps[r].clone()];
        rec.extend(series.values.row(r).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush().map_err(|source| DataError::Io {
        path: "<writer>".to_string(),
        source,
    })?;
    Ok(())
}

/// End-to-end settings for scoring the synthetic benchmark.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkConfig {
    pub synthetic: SyntheticConfig,
    pub window: WindowSpec,
    pub ratios: [f64; 3],
    pub ridge_lambda: f64,
    pub vae: VaeConfig,
    pub error_model: ErrorModelConfig,
    pub metric: ErrorMetric,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            window: WindowSpec::new(24, 8, 1),
            ratios: [0.7, 0.1, 0.2],
            ridge_lambda: 1e-3,
            vae: VaeConfig {
                hidden_dim: 32,
                latent_dim: 4,
                ..VaeConfig::default()
            },
            error_model: ErrorModelConfig::default(),
            metric: ErrorMetric::Absolute,
        }
    }
}

/// Threshold-free scores of the validation and test windows.
#[derive(Debug, Clone)]
pub struct BenchmarkScores<T> {
    pub validation: Vec<ScoredWindow<T>>,
    pub test: Vec<ScoredWindow<T>>,
    pub ood_rows: Range<usize>,
    pub window: WindowSpec,
}

impl<T> BenchmarkScores<T> {
    /// Whether the window starting at `origin` overlaps the shifted segment.
    pub fn touches_shift(&self, origin: usize) -> bool {
        origin < self.ood_rows.end && origin + self.window.span() > self.ood_rows.start
    }
}

/// Generates a series, fits RidgeAR, the VAE and the error model, and scores
/// the validation and test windows. `seed` drives both data and models.
pub fn score_benchmark<T: Scalar>(config: &BenchmarkConfig, seed: u64) -> Result<BenchmarkScores<T>, PipelineError> {
    let data = generate::<T>(&config.synthetic, seed)?;
    let (split, _) = prepare_split(&data.series, config.window, config.ratios)?;
    let model = fit_ridge(&split.train, T::lit(config.ridge_lambda))?;
    let (novelty, _) = train_novelty_model(&split.train, config.vae, seed)?;
    let estimator = fit_ambiguity_model(&model, &novelty, &split.validation, config.metric, config.error_model)?;
    let rejector = DualRejector::new(AmbiguityRejector::uncalibrated(estimator), novelty, RejectionMode::Dual);
    Ok(BenchmarkScores {
        validation: score_windows(&rejector, &split.validation, &model, config.metric)?,
        test: score_windows(&rejector, &split.test, &model, config.metric)?,
        ood_rows: data.ood_rows,
        window: config.window,
    })
}
