//! Stage commands with on-disk handoff. Each stage reads the artifacts of
//! the previous one from `out_dir`, writes its own, and records a manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use dualrej::forecaster::{self, AnyForecaster, ForecastError, Forecaster, PredictionSource, PredictionTable};
use dualrej::pipeline::{
    self, DualCalibration, DualRejector, RejectionTarget, RiskReport, ScoredWindow, SweepRow, TotalDecision,
};
use dualrej::synthetic::{self, SyntheticConfig};
use dualrej::tsio::{self, SplitLayout};
use dualrej::{
    AmbiguityRejector, DatasetSplit, ErrorVarianceEstimator, Matrix, NormalizationStats, NoveltyRejector, RawSeries,
    Threshold, VaeTrainLog, WindowPair, WindowSpec,
};
use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{hash_bytes, hash_json, DataConfig, ForecasterKind, RunConfig};
use crate::error::CliError;

pub const PREPARED: &str = "prepared.json";
pub const NORM_STATS: &str = "norm_stats.json";
pub const FORECASTER: &str = "forecaster.json";
pub const FORECASTER_LOG: &str = "forecaster_log.csv";
pub const NOVELTY: &str = "novelty.json";
pub const VAE_LOG: &str = "vae_log.csv";
pub const ERROR_MODEL: &str = "error_model.json";
pub const REJECTOR: &str = "rejector.json";
pub const CALIBRATION: &str = "calibration.json";
pub const REPORT: &str = "report.json";
pub const PER_WINDOW: &str = "per_window.csv";
pub const SWEEP: &str = "sweep.csv";
pub const ABLATION: &str = "ablation.csv";

pub fn manifest_name(stage: &str) -> String {
    format!("{stage}_manifest.json")
}

/// Record of one stage run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub stage: String,
    /// Hash of the `[data]` section.
    pub data_hash: String,
    /// SHA-256 of the input CSV; absent for synthetic data.
    pub input_digest: Option<String>,
    /// Hash of everything the stage depends on.
    pub config_hash: String,
    /// Artifact file name to SHA-256 of its bytes.
    pub artifacts: BTreeMap<String, String>,
    /// Resolved data section (prepare only; the seed plays no role there).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    /// Resolved configuration (every stage after prepare).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<RunConfig>,
}

impl Manifest {
    /// Configuration that reproduces the recorded run.
    pub fn run_config(&self) -> RunConfig {
        match (&self.config, &self.data) {
            (Some(c), _) => c.clone(),
            (None, Some(d)) => RunConfig {
                data: d.clone(),
                ..RunConfig::default()
            },
            (None, None) => RunConfig::default(),
        }
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest, CliError> {
    let bytes = fs::read(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes bytes, creating parent directories, and returns their SHA-256.
fn write_bytes(path: &Path, bytes: &[u8]) -> Result<String, CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, bytes).map_err(io_err(path))?;
    Ok(hash_bytes(bytes))
}

fn to_json<S: Serialize>(value: &S) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("artifact serializes");
    bytes.push(b'\n');
    bytes
}

fn read_json<D: DeserializeOwned>(path: &Path, stage: &'static str) -> Result<D, CliError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::MissingArtifact {
                path: path.to_path_buf(),
                stage,
            })
        }
        Err(source) => {
            return Err(CliError::Io {
                path: path.to_path_buf(),
                source,
            })
        }
    };
    serde_json::from_slice(&bytes).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Collects artifacts written by one stage, then its manifest.
struct Outputs<'a> {
    dir: &'a Path,
    artifacts: BTreeMap<String, String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Self {
        Self {
            dir,
            artifacts: BTreeMap::new(),
        }
    }

    fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.dir.join(name);
        let digest = write_bytes(&path, bytes)?;
        self.artifacts.insert(name.to_string(), digest);
        Ok(path)
    }

    fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<PathBuf, CliError> {
        self.bytes(name, &to_json(value))
    }

    fn finish(self, stage: &str, cfg: &RunConfig, input_digest: Option<String>) -> Result<Manifest, CliError> {
        let manifest = Manifest {
            stage: stage.to_string(),
            data_hash: cfg.data_hash(),
            input_digest,
            config_hash: hash_json(cfg),
            artifacts: self.artifacts,
            data: None,
            config: Some(cfg.clone()),
        };
        write_bytes(&self.dir.join(manifest_name(stage)), &to_json(&manifest))?;
        Ok(manifest)
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), CliError>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Normalized series plus everything needed to rebuild the split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreparedData {
    pub data_hash: String,
    pub layout: SplitLayout,
    pub ratios: [f64; 3],
    pub norm_stats: NormalizationStats<f64>,
    pub series: RawSeries<f64>,
}

impl PreparedData {
    pub fn split(&self) -> Result<DatasetSplit<f64>, CliError> {
        let w = self.layout.window;
        let windows = tsio::make_windows(&self.series, w.input_len, w.horizon, w.stride)?;
        Ok(tsio::split_dataset(windows, self.ratios, self.norm_stats.clone())?)
    }
}

/// Loads the raw series named by the config, or generates the synthetic one.
pub fn load_raw(cfg: &RunConfig) -> Result<(RawSeries<f64>, Option<String>), CliError> {
    match &cfg.data.path {
        Some(path) => {
            let bytes = fs::read(path).map_err(io_err(path))?;
            let series = tsio::read_csv(bytes.as_slice(), cfg.data.has_header)
                .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
            Ok((series, Some(hash_bytes(&bytes))))
        }
        None => Ok((synthetic::generate(&cfg.data.synthetic, cfg.data.synthetic_seed)?.series, None)),
    }
}

pub fn cmd_prepare(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let (raw, input_digest) = load_raw(cfg)?;
    let d = &cfg.data;
    let window = WindowSpec::new(d.input_len, d.horizon, d.stride);
    let (split, layout) = tsio::prepare_split(&raw, window, d.ratios)?;
    let prepared = PreparedData {
        data_hash: cfg.data_hash(),
        series: split.norm_stats.normalize(&raw)?,
        norm_stats: split.norm_stats.clone(),
        layout,
        ratios: d.ratios,
    };
    let mut out = Outputs::new(&cfg.out_dir);
    out.json(PREPARED, &prepared)?;
    out.json(NORM_STATS, &prepared.norm_stats)?;
    let manifest = Manifest {
        stage: "prepare".to_string(),
        data_hash: cfg.data_hash(),
        config_hash: hash_json(&(&cfg.data, &input_digest)),
        input_digest,
        artifacts: out.artifacts,
        data: Some(cfg.data.clone()),
        config: None,
    };
    write_bytes(&cfg.out_dir.join(manifest_name("prepare")), &to_json(&manifest))?;
    info!(
        "prepared {} rows x {} variables: {} train / {} validation / {} test windows",
        raw.len(),
        raw.n_vars(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    Ok(manifest)
}

/// Loads the prepared data and checks it matches the current `[data]` section.
pub fn load_prepared(cfg: &RunConfig) -> Result<(PreparedData, DatasetSplit<f64>), CliError> {
    let path = cfg.out_dir.join(PREPARED);
    let prepared: PreparedData = read_json(&path, "prepare")?;
    if prepared.data_hash != cfg.data_hash() {
        return Err(CliError::Stale {
            path,
            reason: "prepared with a different [data] section; rerun `dualrej prepare`".into(),
        });
    }
    let split = prepared.split()?;
    Ok((prepared, split))
}

/// Persisted forecaster: a built-in model or a pointer to external forecasts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum StoredForecaster {
    Builtin { model: AnyForecaster<f64> },
    External { path: PathBuf, digest: String },
}

#[derive(Debug, Clone)]
pub enum LoadedForecaster {
    Builtin(AnyForecaster<f64>),
    External(PredictionTable<f64>),
}

impl PredictionSource<f64> for LoadedForecaster {
    fn predict_window(&self, window: &WindowPair<f64>) -> Result<Matrix<f64>, ForecastError> {
        match self {
            Self::Builtin(m) => m.predict_window(window),
            Self::External(t) => t.predict_window(window),
        }
    }
}

fn read_predictions(path: &Path, horizon: usize, n_vars: usize) -> Result<(PredictionTable<f64>, String), CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let table = PredictionTable::read_csv(bytes.as_slice(), horizon, n_vars)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok((table, hash_bytes(&bytes)))
}

fn load_forecaster(cfg: &RunConfig, prepared: &PreparedData) -> Result<LoadedForecaster, CliError> {
    let path = cfg.out_dir.join(FORECASTER);
    match read_json::<StoredForecaster>(&path, "train")? {
        StoredForecaster::Builtin { model } => Ok(LoadedForecaster::Builtin(model)),
        StoredForecaster::External { path: file, digest } => {
            let (table, now) = read_predictions(&file, prepared.layout.window.horizon, prepared.series.n_vars())?;
            if now != digest {
                return Err(CliError::Stale {
                    path: file,
                    reason: "prediction file changed since `dualrej train`".into(),
                });
            }
            Ok(LoadedForecaster::External(table))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub vae_initial_loss: Option<f64>,
    pub vae_final_loss: Option<f64>,
    pub forecaster: ForecasterKind,
}

fn vae_log_csv(log: &VaeTrainLog<f64>) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        let csv_err = |e: csv::Error| CliError::Model(e.to_string());
        w.write_record(["epoch", "total", "recon", "kl"]).map_err(csv_err)?;
        for e in &log.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.terms.total.to_string(),
                e.terms.recon.to_string(),
                e.terms.kl.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush().map_err(|e| CliError::Model(e.to_string()))
    })
}

pub fn cmd_train(cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let (prepared, split) = load_prepared(cfg)?;
    let mut out = Outputs::new(&cfg.out_dir);

    let f = &cfg.forecaster;
    let (stored, loaded) = match f.kind {
        ForecasterKind::Ridge => {
            let model = AnyForecaster::Ridge(forecaster::fit_ridge(&split.train, f.ridge_lambda)?);
            (StoredForecaster::Builtin { model: model.clone() }, LoadedForecaster::Builtin(model))
        }
        ForecasterKind::Mlp => {
            let mlp = forecaster::fit_mlp(&split.train, f.mlp, cfg.seed)?;
            let log = csv_bytes(|buf| {
                let mut w = csv::Writer::from_writer(buf);
                let csv_err = |e: csv::Error| CliError::Model(e.to_string());
                w.write_record(["epoch", "mse"]).map_err(csv_err)?;
                for (i, l) in mlp.loss_history.iter().enumerate() {
                    w.write_record([i.to_string(), l.to_string()]).map_err(csv_err)?;
                }
                w.flush().map_err(|e| CliError::Model(e.to_string()))
            })?;
            out.bytes(FORECASTER_LOG, &log)?;
            let model = AnyForecaster::Mlp(mlp);
            (StoredForecaster::Builtin { model: model.clone() }, LoadedForecaster::Builtin(model))
        }
        ForecasterKind::External => {
            let path = f.predictions.clone().expect("validated");
            let (table, digest) = read_predictions(&path, prepared.layout.window.horizon, prepared.series.n_vars())?;
            (StoredForecaster::External { path, digest }, LoadedForecaster::External(table))
        }
    };
    out.json(FORECASTER, &stored)?;

    let (novelty, log) = pipeline::train_novelty_model(&split.train, cfg.vae, cfg.seed)?;
    out.bytes(VAE_LOG, &vae_log_csv(&log)?)?;
    out.json(NOVELTY, &novelty)?;

    let estimator = pipeline::fit_ambiguity_model(
        &loaded,
        &novelty,
        &split.validation,
        cfg.rejection.metric,
        cfg.error_model,
    )?;
    out.json(ERROR_MODEL, &estimator)?;
    out.finish("train", cfg, None)?;

    info!(
        "trained {:?} forecaster; VAE loss {:.4} -> {:.4}",
        f.kind,
        log.initial().unwrap_or(f64::NAN),
        log.last().unwrap_or(f64::NAN)
    );
    Ok(TrainSummary {
        vae_initial_loss: log.initial(),
        vae_final_loss: log.last(),
        forecaster: f.kind,
    })
}

/// Trained models plus the prepared split.
pub struct Models {
    pub prepared: PreparedData,
    pub split: DatasetSplit<f64>,
    pub forecaster: LoadedForecaster,
    pub novelty: NoveltyRejector<f64>,
    pub estimator: ErrorVarianceEstimator<f64>,
}

impl Models {
    pub fn load(cfg: &RunConfig) -> Result<Self, CliError> {
        let (prepared, split) = load_prepared(cfg)?;
        let forecaster = load_forecaster(cfg, &prepared)?;
        let novelty = read_json(&cfg.out_dir.join(NOVELTY), "train")?;
        let estimator = read_json(&cfg.out_dir.join(ERROR_MODEL), "train")?;
        Ok(Self {
            prepared,
            split,
            forecaster,
            novelty,
            estimator,
        })
    }

    /// Rejector with both thresholds uncalibrated.
    pub fn rejector(&self, cfg: &RunConfig) -> DualRejector<f64> {
        DualRejector::new(
            AmbiguityRejector::uncalibrated(self.estimator.clone()),
            self.novelty.clone(),
            cfg.rejection.mode,
        )
    }

    pub fn score(
        &self,
        rejector: &DualRejector<f64>,
        windows: &[WindowPair<f64>],
        cfg: &RunConfig,
    ) -> Result<Vec<ScoredWindow<f64>>, CliError> {
        Ok(pipeline::score_windows(rejector, windows, &self.forecaster, cfg.rejection.metric)?)
    }
}

/// Calibration target implied by the rejection section.
pub fn rejection_target(cfg: &RunConfig) -> RejectionTarget {
    let r = &cfg.rejection;
    match r.width {
        Some(width) => RejectionTarget::Interval {
            alpha: r.alpha,
            width,
            novelty_rate: pipeline::rate_budget(r.mode, r.target_rate).0.unwrap_or(0.0),
        },
        None => RejectionTarget::Rate { rate: r.target_rate },
    }
}

pub fn cmd_calibrate(cfg: &RunConfig) -> Result<DualCalibration<f64>, CliError> {
    let models = Models::load(cfg)?;
    let rejector = models.rejector(cfg);
    let val = models.score(&rejector, &models.split.validation, cfg)?;
    let (rejector, calibration) = pipeline::calibrate_dual(
        rejector,
        &val,
        cfg.rejection.mode,
        rejection_target(cfg),
        cfg.rejection.alpha,
    )?;
    let mut out = Outputs::new(&cfg.out_dir);
    out.json(REJECTOR, &rejector)?;
    out.json(CALIBRATION, &calibration)?;
    out.finish("calibrate", cfg, None)?;
    info!(
        "calibrated {:?}: validation rejection rate {:.4} over {} windows",
        cfg.rejection.mode, calibration.validation_rate, calibration.validation_windows
    );
    Ok(calibration)
}

fn load_rejector(cfg: &RunConfig) -> Result<DualRejector<f64>, CliError> {
    let path = cfg.out_dir.join(REJECTOR);
    let rejector: DualRejector<f64> = read_json(&path, "calibrate")?;
    if rejector.mode != cfg.rejection.mode {
        return Err(CliError::Stale {
            path,
            reason: format!(
                "calibrated for mode {:?} but the config asks for {:?}; rerun `dualrej calibrate`",
                rejector.mode, cfg.rejection.mode
            ),
        });
    }
    Ok(rejector)
}

/// Risk report plus the abstention-cost view of the same decisions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    #[serde(flatten)]
    pub report: RiskReport<f64>,
    pub var_threshold: Threshold<f64>,
    pub d_threshold: Threshold<f64>,
    pub cost: f64,
    /// Mean over windows of `cost` if rejected, else the window loss.
    pub mean_rejection_loss: f64,
}

pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvaluationSummary, CliError> {
    let models = Models::load(cfg)?;
    let rejector = load_rejector(cfg)?;
    let report = pipeline::evaluate(
        &rejector,
        &models.split.test,
        &models.forecaster,
        cfg.rejection.lambda,
        cfg.rejection.metric,
    )?;
    let cost = cfg.rejection.cost;
    let mean_rejection_loss = report
        .per_window
        .iter()
        .map(|o| if o.rejected { cost } else { o.loss })
        .sum::<f64>()
        / report.per_window.len() as f64;
    let th = rejector.thresholds();
    let per_window = csv_bytes(|buf| Ok(pipeline::write_per_window_csv(buf, &report)?))?;
    let summary = EvaluationSummary {
        report,
        var_threshold: th.variance,
        d_threshold: th.novelty,
        cost,
        mean_rejection_loss,
    };
    let mut out = Outputs::new(&cfg.out_dir);
    out.json(REPORT, &summary)?;
    out.bytes(PER_WINDOW, &per_window)?;
    out.finish("evaluate", cfg, None)?;
    info!(
        "test: epsilon {:.4}, risk {:.6}, ideal {:.6}, random {:.6}",
        summary.report.epsilon, summary.report.risk, summary.report.bound_ideal, summary.report.bound_random
    );
    Ok(summary)
}

type Scored = Vec<ScoredWindow<f64>>;

fn scored_splits(cfg: &RunConfig) -> Result<(Scored, Scored), CliError> {
    let models = Models::load(cfg)?;
    let rejector = models.rejector(cfg);
    let val = models.score(&rejector, &models.split.validation, cfg)?;
    let test = models.score(&rejector, &models.split.test, cfg)?;
    Ok((val, test))
}

pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRow<f64>>, CliError> {
    let (val, test) = scored_splits(cfg)?;
    let r = &cfg.rejection;
    let rows = pipeline::sweep(&val, &test, r.mode, r.lambda, r.metric, &r.sweep_rates)?;
    let mut out = Outputs::new(&cfg.out_dir);
    out.bytes(SWEEP, &csv_bytes(|buf| Ok(pipeline::write_sweep_csv(buf, &rows)?))?)?;
    out.finish("sweep", cfg, None)?;
    info!("sweep over {} rates written", rows.len());
    Ok(rows)
}

pub fn cmd_ablate(cfg: &RunConfig) -> Result<Vec<SweepRow<f64>>, CliError> {
    let (val, test) = scored_splits(cfg)?;
    let r = &cfg.rejection;
    let rows = pipeline::ablate(&val, &test, r.target_rate, r.lambda, r.metric)?;
    let mut out = Outputs::new(&cfg.out_dir);
    out.bytes(ABLATION, &csv_bytes(|buf| Ok(pipeline::write_ablation_csv(buf, &rows)?))?)?;
    out.finish("ablate", cfg, None)?;
    info!("ablation at target rate {} written", r.target_rate);
    Ok(rows)
}

/// Window to score with `predict`.
#[derive(Debug, Clone, PartialEq)]
pub enum PredictInput {
    /// Window starting at this row of the prepared series.
    Origin(usize),
    /// CSV in the raw data layout holding exactly `input_len` rows.
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub origin_index: Option<usize>,
    pub decision: u8,
    #[serde(flatten)]
    pub detail: TotalDecision<f64>,
    /// Forecast in the raw data scale, one row per step.
    pub forecast: Vec<Vec<f64>>,
    pub variables: Vec<String>,
}

pub fn cmd_predict(cfg: &RunConfig, input: &PredictInput) -> Result<Prediction, CliError> {
    let models = Models::load(cfg)?;
    let rejector = load_rejector(cfg)?;
    let prepared = &models.prepared;
    let w = prepared.layout.window;
    let (window, origin) = match input {
        PredictInput::Origin(origin) => {
            let span = w.input_len + w.horizon;
            if origin + span > prepared.series.len() {
                return Err(CliError::Data(format!(
                    "origin {origin} leaves fewer than {span} rows in a series of {}",
                    prepared.series.len()
                )));
            }
            let input = prepared.series.values.slice_rows(*origin, origin + w.input_len);
            let target = prepared.series.values.slice_rows(origin + w.input_len, origin + span);
            (
                WindowPair {
                    input,
                    target,
                    origin_index: *origin,
                },
                Some(*origin),
            )
        }
        PredictInput::File(path) => {
            let raw = tsio::load_csv::<f64>(path, cfg.data.has_header)?;
            if raw.len() != w.input_len || raw.n_vars() != prepared.series.n_vars() {
                return Err(CliError::Data(format!(
                    "{}: expected {} rows x {} variables, found {} x {}",
                    path.display(),
                    w.input_len,
                    prepared.series.n_vars(),
                    raw.len(),
                    raw.n_vars()
                )));
            }
            if matches!(models.forecaster, LoadedForecaster::External(_)) {
                return Err(CliError::Data(
                    "external forecasts are keyed by origin; use --origin".into(),
                ));
            }
            let input = prepared.norm_stats.normalize(&raw)?.values;
            let target = Matrix::zeros(w.horizon, prepared.series.n_vars());
            (
                WindowPair {
                    input,
                    target,
                    origin_index: usize::MAX,
                },
                None,
            )
        }
    };
    let detail = rejector.decide_total(window.flat_input())?;
    let mut forecast = match &models.forecaster {
        LoadedForecaster::Builtin(m) => m.predict(&window.input)?,
        LoadedForecaster::External(t) => t.predict_window(&window)?,
    };
    prepared.norm_stats.denormalize_matrix(&mut forecast);
    Ok(Prediction {
        origin_index: origin,
        decision: u8::from(detail.rejected),
        detail,
        forecast: (0..forecast.rows()).map(|r| forecast.row(r).to_vec()).collect(),
        variables: prepared.series.variable_names.clone(),
    })
}

/// Writes the bundled synthetic series as CSV.
pub fn cmd_synth(path: &Path, config: &SyntheticConfig, seed: u64) -> Result<(), CliError> {
    let s = synthetic::generate::<f64>(config, seed)?;
    let bytes = csv_bytes(|buf| Ok(synthetic::write_csv(&s.series, buf)?))?;
    write_bytes(path, &bytes)?;
    info!(
        "wrote {} rows to {} (shifted rows {:?})",
        s.series.len(),
        path.display(),
        s.ood_rows
    );
    Ok(())
}

/// Runs every stage in order.
pub fn cmd_all(cfg: &RunConfig) -> Result<EvaluationSummary, CliError> {
    cmd_prepare(cfg)?;
    cmd_train(cfg)?;
    cmd_calibrate(cfg)?;
    let summary = cmd_evaluate(cfg)?;
    cmd_sweep(cfg)?;
    cmd_ablate(cfg)?;
    Ok(summary)
}
