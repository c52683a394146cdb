//! Point forecasters and per-window residual extraction.
//!
//! Everything downstream consumes predictions through [`PredictionSource`],
//! so a live model and a file of externally produced forecasts are
//! interchangeable.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{Cholesky, LinalgError, Matrix};
use crate::nn::{self, Adam, Dense};
use crate::scalar::Scalar;
use crate::tsio::WindowPair;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("ridge penalty must be finite and non-negative, got {0}")]
    InvalidPenalty(f64),
    #[error("normal equations are singular (ridge_lambda = 0?): {0}")]
    Singular(LinalgError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite training loss at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("no prediction for window at origin {0}")]
    MissingPrediction(usize),
    #[error("prediction file: {0}")]
    PredictionFile(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Anything that can produce an `S × N` forecast for a window.
pub trait PredictionSource<T: Scalar> {
    fn predict_window(&self, window: &WindowPair<T>) -> Result<Matrix<T>, ForecastError>;
}

/// A fitted model mapping an `L × N` input to an `S × N` forecast.
pub trait Forecaster<T: Scalar>: Send + Sync {
    fn input_len(&self) -> usize;
    fn horizon(&self) -> usize;
    fn n_vars(&self) -> usize;
    fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>, ForecastError>;

    fn check_input(&self, input: &Matrix<T>) -> Result<(), ForecastError> {
        if input.shape() != (self.input_len(), self.n_vars()) {
            return Err(ForecastError::Shape(format!(
                "input {:?}, model expects ({}, {})",
                input.shape(),
                self.input_len(),
                self.n_vars()
            )));
        }
        Ok(())
    }
}

macro_rules! forecaster_source {
    ($($ty:ident),*) => {$(
        impl<T: Scalar> PredictionSource<T> for $ty<T> {
            fn predict_window(&self, window: &WindowPair<T>) -> Result<Matrix<T>, ForecastError> {
                self.predict(&window.input)
            }
        }
    )*};
}

forecaster_source!(RidgeAr, MlpForecaster, AnyForecaster);

fn window_dims<T: Scalar>(train: &[WindowPair<T>]) -> Result<(usize, usize, usize), ForecastError> {
    let first = train.first().ok_or(ForecastError::EmptyTrainingSet)?;
    let (l, n) = first.input.shape();
    let s = first.target.rows();
    for w in train {
        if w.input.shape() != (l, n) || w.target.shape() != (s, n) {
            return Err(ForecastError::Shape(format!(
                "window at origin {} has shapes {:?}/{:?}",
                w.origin_index,
                w.input.shape(),
                w.target.shape()
            )));
        }
    }
    Ok((l, s, n))
}

/// Linear direct multi-step forecaster fitted by ridge regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RidgeAr<T> {
    /// `(L·N + 1) × (S·N)`; the last row is the bias.
    pub weights: Matrix<T>,
    pub ridge_lambda: T,
    pub input_len: usize,
    pub horizon: usize,
    pub n_vars: usize,
}

/// Solves the ridge normal equations on centered data, leaving the
/// intercept unpenalized.
pub fn fit_ridge<T: Scalar>(train: &[WindowPair<T>], ridge_lambda: T) -> Result<RidgeAr<T>, ForecastError> {
    if !(ridge_lambda >= T::zero()) || !ridge_lambda.is_finite() {
        return Err(ForecastError::InvalidPenalty(ridge_lambda.to_f64_lossy()));
    }
    let (l, s, n) = window_dims(train)?;
    let p = l * n;
    let q = s * n;
    let count = T::from_usize_lossy(train.len());

    let mut x_mean = vec![T::zero(); p];
    let mut y_mean = vec![T::zero(); q];
    for w in train {
        for (m, &v) in x_mean.iter_mut().zip(w.flat_input()) {
            *m = *m + v;
        }
        for (m, &v) in y_mean.iter_mut().zip(w.flat_target()) {
            *m = *m + v;
        }
    }
    x_mean.iter_mut().for_each(|m| *m = *m / count);
    y_mean.iter_mut().for_each(|m| *m = *m / count);

    let mut gram = Matrix::zeros(p, p);
    let mut cross = Matrix::zeros(p, q);
    let mut xc = vec![T::zero(); p];
    let mut yc = vec![T::zero(); q];
    for w in train {
        for ((c, &v), &m) in xc.iter_mut().zip(w.flat_input()).zip(&x_mean) {
            *c = v - m;
        }
        for ((c, &v), &m) in yc.iter_mut().zip(w.flat_target()).zip(&y_mean) {
            *c = v - m;
        }
        for i in 0..p {
            let xi = xc[i];
            if xi == T::zero() {
                continue;
            }
            let row = gram.row_mut(i);
            for j in 0..=i {
                row[j] = row[j] + xi * xc[j];
            }
            for (c, &y) in cross.row_mut(i).iter_mut().zip(&yc) {
                *c = *c + xi * y;
            }
        }
    }
    for i in 0..p {
        gram[(i, i)] = gram[(i, i)] + ridge_lambda;
        for j in 0..i {
            gram[(j, i)] = gram[(i, j)];
        }
    }
    let chol = Cholesky::new(&gram).map_err(ForecastError::Singular)?;
    let coef = chol.solve_matrix(&cross).map_err(ForecastError::Singular)?;

    let mut weights = Matrix::zeros(p + 1, q);
    for i in 0..p {
        weights.row_mut(i).copy_from_slice(coef.row(i));
    }
    for k in 0..q {
        let mut b = y_mean[k];
        for i in 0..p {
            b = b - x_mean[i] * coef[(i, k)];
        }
        weights[(p, k)] = b;
    }
    Ok(RidgeAr {
        weights,
        ridge_lambda,
        input_len: l,
        horizon: s,
        n_vars: n,
    })
}

impl<T: Scalar> Forecaster<T> for RidgeAr<T> {
    fn input_len(&self) -> usize {
        self.input_len
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>, ForecastError> {
        self.check_input(input)?;
        let p = self.input_len * self.n_vars;
        let mut out = self.weights.row(p).to_vec();
        for (i, &x) in input.as_slice().iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.weights.row(i)) {
                *o = *o + x * w;
            }
        }
        Ok(Matrix::from_vec(self.horizon, self.n_vars, out))
    }
}

/// Hyperparameters of the feed-forward forecaster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden: 64,
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
        }
    }
}

/// One-hidden-layer tanh network on the flattened window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MlpForecaster<T> {
    pub hidden: Dense<T>,
    pub output: Dense<T>,
    pub input_len: usize,
    pub horizon: usize,
    pub n_vars: usize,
    pub config: MlpConfig,
    pub seed: u64,
    /// Mean training MSE before training (index 0) and after each epoch.
    pub loss_history: Vec<T>,
}

impl<T: Scalar> MlpForecaster<T> {
    pub fn init(input_len: usize, horizon: usize, n_vars: usize, config: MlpConfig, seed: u64) -> Self {
        let mut rng = nn::seeded_rng(seed);
        let p = input_len * n_vars;
        let q = horizon * n_vars;
        Self {
            hidden: Dense::glorot(p, config.hidden, &mut rng),
            output: Dense::glorot(config.hidden, q, &mut rng),
            input_len,
            horizon,
            n_vars,
            config,
            seed,
            loss_history: Vec::new(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.hidden.param_count() + self.output.param_count()
    }

    pub fn params(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        self.hidden.write_flat(&mut v);
        self.output.write_flat(&mut v);
        v
    }

    pub fn set_params(&mut self, flat: &[T]) {
        let used = self.hidden.read_flat(flat);
        self.output.read_flat(&flat[used..]);
    }

    fn forward_flat(&self, x: &[T]) -> (Vec<T>, Vec<T>) {
        let mut h = self.hidden.forward(x);
        nn::tanh_in_place(&mut h);
        let y = self.output.forward(&h);
        (h, y)
    }

    /// Mean over `batch` of the per-entry MSE, with its flat gradient.
    pub fn loss_and_grad(&self, batch: &[&WindowPair<T>]) -> (T, Vec<T>) {
        let q = self.horizon * self.n_vars;
        let mut g_hidden = Dense::zeros(self.hidden.inputs(), self.hidden.outputs());
        let mut g_output = Dense::zeros(self.output.inputs(), self.output.outputs());
        let scale = T::lit(2.0) / T::from_usize_lossy(q * batch.len());
        let mut loss = T::zero();
        for w in batch {
            let x = w.flat_input();
            let (h, y) = self.forward_flat(x);
            let dy: Vec<T> = y
                .iter()
                .zip(w.flat_target())
                .map(|(&p, &t)| {
                    loss = loss + (p - t) * (p - t);
                    (p - t) * scale
                })
                .collect();
            let dh = self.output.backward(&h, &dy, &mut g_output);
            let da = nn::tanh_backward(&h, &dh);
            self.hidden.backward(x, &da, &mut g_hidden);
        }
        let mut grad = Vec::with_capacity(self.param_count());
        g_hidden.write_flat(&mut grad);
        g_output.write_flat(&mut grad);
        (loss / T::from_usize_lossy(q * batch.len()), grad)
    }

    fn mean_loss(&self, data: &[WindowPair<T>]) -> T {
        let refs: Vec<&WindowPair<T>> = data.iter().collect();
        let q = T::from_usize_lossy(self.horizon * self.n_vars);
        let total: T = refs
            .iter()
            .map(|w| {
                let (_, y) = self.forward_flat(w.flat_input());
                y.iter()
                    .zip(w.flat_target())
                    .map(|(&p, &t)| (p - t) * (p - t))
                    .sum::<T>()
                    / q
            })
            .sum();
        total / T::from_usize_lossy(refs.len())
    }
}

/// Seeded mini-batch Adam training of an [`MlpForecaster`].
pub fn fit_mlp<T: Scalar>(
    train: &[WindowPair<T>],
    config: MlpConfig,
    seed: u64,
) -> Result<MlpForecaster<T>, ForecastError> {
    let (l, s, n) = window_dims(train)?;
    let mut model = MlpForecaster::init(l, s, n, config, seed);
    let initial = model.mean_loss(train);
    if !initial.is_finite() {
        return Err(ForecastError::Diverged { epoch: 0 });
    }
    model.loss_history.push(initial);

    let mut rng = nn::seeded_rng(seed ^ 0x05ee_d0fb_a7c4);
    let mut params = model.params();
    let mut opt = Adam::new(params.len(), T::lit(config.learning_rate));
    let mut order: Vec<usize> = (0..train.len()).collect();
    let batch_size = config.batch_size.max(1);
    for epoch in 1..=config.epochs {
        nn::shuffle(&mut rng, &mut order);
        for chunk in order.chunks(batch_size) {
            let batch: Vec<&WindowPair<T>> = chunk.iter().map(|&i| &train[i]).collect();
            let (loss, mut grad) = model.loss_and_grad(&batch);
            if !loss.is_finite() {
                return Err(ForecastError::Diverged { epoch });
            }
            nn::clip_grad_norm(&mut grad, T::lit(10.0));
            opt.update(&mut params, &grad);
            model.set_params(&params);
        }
        let loss = model.mean_loss(train);
        if !loss.is_finite() {
            return Err(ForecastError::Diverged { epoch });
        }
        model.loss_history.push(loss);
    }
    Ok(model)
}

impl<T: Scalar> Forecaster<T> for MlpForecaster<T> {
    fn input_len(&self) -> usize {
        self.input_len
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn n_vars(&self) -> usize {
        self.n_vars
    }

    fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>, ForecastError> {
        self.check_input(input)?;
        let (_, y) = self.forward_flat(input.as_slice());
        Ok(Matrix::from_vec(self.horizon, self.n_vars, y))
    }
}

/// Either built-in model, for configs and serialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "T: Scalar")]
pub enum AnyForecaster<T> {
    Ridge(RidgeAr<T>),
    Mlp(MlpForecaster<T>),
}

impl<T: Scalar> Forecaster<T> for AnyForecaster<T> {
    fn input_len(&self) -> usize {
        match self {
            Self::Ridge(m) => m.input_len,
            Self::Mlp(m) => m.input_len,
        }
    }
    fn horizon(&self) -> usize {
        match self {
            Self::Ridge(m) => m.horizon,
            Self::Mlp(m) => m.horizon,
        }
    }
    fn n_vars(&self) -> usize {
        match self {
            Self::Ridge(m) => m.n_vars,
            Self::Mlp(m) => m.n_vars,
        }
    }
    fn predict(&self, input: &Matrix<T>) -> Result<Matrix<T>, ForecastError> {
        match self {
            Self::Ridge(m) => m.predict(input),
            Self::Mlp(m) => m.predict(input),
        }
    }
}

/// Per-window deviation aggregated over every target entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMetric {
    #[default]
    Squared,
    Absolute,
}

/// Mean over all entries of the chosen deviation between two equally
/// shaped matrices.
pub fn window_loss<T: Scalar>(prediction: &Matrix<T>, truth: &Matrix<T>, metric: ErrorMetric) -> Result<T, ForecastError> {
    if prediction.shape() != truth.shape() {
        return Err(ForecastError::Shape(format!(
            "prediction {:?} vs truth {:?}",
            prediction.shape(),
            truth.shape()
        )));
    }
    let n = T::from_usize_lossy(truth.as_slice().len().max(1));
    let total: T = prediction
        .as_slice()
        .iter()
        .zip(truth.as_slice())
        .map(|(&p, &t)| match metric {
            ErrorMetric::Squared => (p - t) * (p - t),
            ErrorMetric::Absolute => (p - t).abs(),
        })
        .sum();
    Ok(total / n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct ResidualRecord<T> {
    pub origin_index: usize,
    pub error: T,
    /// Flattened input window.
    pub features: Vec<T>,
}

pub fn collect_residuals<T: Scalar, P: PredictionSource<T> + ?Sized>(
    source: &P,
    data: &[WindowPair<T>],
    metric: ErrorMetric,
) -> Result<Vec<ResidualRecord<T>>, ForecastError> {
    data.iter()
        .map(|w| {
            let pred = source.predict_window(w)?;
            Ok(ResidualRecord {
                origin_index: w.origin_index,
                error: window_loss(&pred, &w.target, metric)?,
                features: w.flat_input().to_vec(),
            })
        })
        .collect()
}

/// Externally produced forecasts keyed by window origin.
///
/// CSV layout: optional header, then one row per window with
/// `origin_index` followed by the `S·N` forecast values in row-major order
/// (all variables for the first step, then the second step, ...), in the
/// same normalized space as the prepared data.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionTable<T> {
    pub horizon: usize,
    pub n_vars: usize,
    rows: BTreeMap<usize, Vec<T>>,
}

impl<T: Scalar> PredictionTable<T> {
    pub fn new(horizon: usize, n_vars: usize) -> Self {
        Self {
            horizon,
            n_vars,
            rows: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, origin: usize, forecast: &Matrix<T>) -> Result<(), ForecastError> {
        if forecast.shape() != (self.horizon, self.n_vars) {
            return Err(ForecastError::Shape(format!(
                "forecast {:?}, table holds ({}, {})",
                forecast.shape(),
                self.horizon,
                self.n_vars
            )));
        }
        self.rows.insert(origin, forecast.as_slice().to_vec());
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn read_csv<R: Read>(reader: R, horizon: usize, n_vars: usize) -> Result<Self, ForecastError> {
        let width = horizon * n_vars;
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut table = Self::new(horizon, n_vars);
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let Ok(origin) = rec[0].parse::<usize>() else {
                if line == 0 {
                    continue;
                }
                return Err(ForecastError::PredictionFile(format!(
                    "line {}: bad origin_index {:?}",
                    line + 1,
                    &rec[0]
                )));
            };
            if rec.len() != width + 1 {
                return Err(ForecastError::PredictionFile(format!(
                    "line {}: expected {} values, found {}",
                    line + 1,
                    width,
                    rec.len() - 1
                )));
            }
            let values = rec
                .iter()
                .skip(1)
                .map(|c| {
                    c.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .map(T::lit)
                        .ok_or_else(|| ForecastError::PredictionFile(format!("line {}: bad value {c:?}", line + 1)))
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.rows.insert(origin, values);
        }
        Ok(table)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), ForecastError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec!["origin_index".to_string()];
        header.extend((0..self.horizon * self.n_vars).map(|i| format!("y{i}")));
        wtr.write_record(&header)?;
        for (origin, values) in &self.rows {
            let mut rec = vec![origin.to_string()];
            rec.extend(values.iter().map(|v| v.to_string()));
            wtr.write_record(&rec)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

impl<T: Scalar> PredictionSource<T> for PredictionTable<T> {
    fn predict_window(&self, window: &WindowPair<T>) -> Result<Matrix<T>, ForecastError> {
        let row = self
            .rows
            .get(&window.origin_index)
            .ok_or(ForecastError::MissingPrediction(window.origin_index))?;
        if window.target.shape() != (self.horizon, self.n_vars) {
            return Err(ForecastError::Shape(format!(
                "window target {:?}, table holds ({}, {})",
                window.target.shape(),
                self.horizon,
                self.n_vars
            )));
        }
        Ok(Matrix::from_vec(self.horizon, self.n_vars, row.clone()))
    }
}
