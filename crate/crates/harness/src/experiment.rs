//! Training, evaluation, threshold sweeps and consolidated reports.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use heteroinf::metrics::{
    evaluate_predictions, predict_testset, MetricsReport, Predictor, ScoreOptions, CSV_HEADER,
};
use heteroinf::models::{train, ModelConfig, ModelKind, TrainedModel};
use heteroinf::sampling::{synth_markov_border, TestSet};
use heteroinf::encoding::{build_layout, OneHotLayout};
use heteroinf::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::bundle::{io_err, Bundle, DataSpec, FileHashes};
use crate::catalog::NetworkSource;

pub const DEFAULT_THRESHOLDS: [f64; 7] = [0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

/// Share of the test cases held out for early stopping.
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Default model settings for a network source: the small architecture,
/// the problem's observation policy and its target on synthetic networks.
pub fn default_model_config(source: &NetworkSource, kind: ModelKind, seed: u64) -> ModelConfig {
    let mut c = match source {
        NetworkSource::Synth { kind: synth, seed: net_seed } => {
            let p = synth_markov_border(*synth, *net_seed);
            let mut c = ModelConfig::synthetic(kind);
            c.train_policy = p.policy;
            c.target = Some(p.target);
            c
        }
        NetworkSource::Bif { .. } => ModelConfig::new(kind),
    };
    c.seed = seed;
    c
}

impl ExperimentConfig {
    pub fn with_defaults(data: DataSpec, kinds: &[ModelKind], seed_model: u64, seed_predict: u64, output_dir: PathBuf) -> Self {
        let models = kinds.iter().map(|&k| default_model_config(&data.source, k, seed_model)).collect();
        Self {
            data,
            models,
            seed_predict,
            thresholds: DEFAULT_THRESHOLDS.to_vec(),
            score_all_variables: false,
            output_dir,
        }
    }
}

/// Validation and evaluation cases. Synthetic test sets hold only a few
/// distinct cases, so they are evaluated whole and train without early stopping.
pub fn split(bundle: &Bundle) -> (Option<TestSet>, TestSet) {
    if bundle.target.is_some() {
        (None, bundle.testset.clone())
    } else {
        let (v, t) = bundle.testset.split(VALIDATION_FRACTION);
        (Some(v), t)
    }
}

pub fn layout(bundle: &Bundle) -> OneHotLayout {
    build_layout(&bundle.network)
}

pub fn train_on(bundle: &Bundle, config: &ModelConfig) -> Result<TrainedModel> {
    let (validation, _) = split(bundle);
    train(&bundle.dataset, &layout(bundle), config, validation.as_ref())
}

/// Refuses a checkpoint trained on a different network.
pub fn check_compatible(bundle: &Bundle, model: &TrainedModel) -> Result<()> {
    if model.network.hash != bundle.dataset.network.hash {
        return Err(Error::Alignment(format!(
            "checkpoint network hash {} does not match data {}",
            model.network.hash, bundle.dataset.network.hash
        )));
    }
    Ok(())
}

/// Scores `model` on the evaluation part of the bundle at each threshold.
pub fn sweep(
    bundle: &Bundle,
    model: &dyn Predictor,
    seed: u64,
    thresholds: &[f64],
    score_all_variables: bool,
) -> Result<Vec<MetricsReport>> {
    let (_, test) = split(bundle);
    let layout = layout(bundle);
    let preds = predict_testset(model, &layout, &test, seed)?;
    thresholds
        .iter()
        .map(|&t| {
            let opts = ScoreOptions { score_all_variables, threshold: (t > 0.0).then_some(t) };
            let mut r = evaluate_predictions(&layout, &preds, &test, &opts)?;
            r.threshold = Some(t);
            Ok(r)
        })
        .collect()
}

pub fn evaluate(bundle: &Bundle, model: &dyn Predictor, seed: u64, score_all_variables: bool) -> Result<MetricsReport> {
    let mut r = sweep(bundle, model, seed, &[0.0], score_all_variables)?.remove(0);
    r.threshold = None;
    Ok(r)
}

pub fn metrics_header() -> Vec<String> {
    let mut h: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
    h.insert(1, "dataset_hash".into());
    h
}

pub fn metrics_row(dataset: &str, hash: &str, model: &str, seed: u64, r: &MetricsReport) -> Vec<String> {
    let mut row = r.csv_row(dataset, model, seed);
    row.insert(1, hash.to_string());
    row
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(err)?;
    for r in rows {
        w.write_record(r).map_err(err)?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Appends one row, writing the header first when the file is new.
pub fn append_csv(path: &Path, header: &[String], row: &[String]) -> Result<()> {
    let exists = path.exists();
    let file = fs::OpenOptions::new().create(true).append(true).open(path).map_err(|e| io_err(path, e))?;
    let mut w = csv::Writer::from_writer(file);
    let err = |e: csv::Error| Error::Config(format!("{}: {e}", path.display()));
    if !exists {
        w.write_record(header).map_err(err)?;
    }
    w.write_record(row).map_err(err)?;
    w.flush().map_err(|e| io_err(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
    }
    fs::write(path, serde_json::to_vec_pretty(value)?).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSpec,
    pub models: Vec<ModelConfig>,
    pub seed_predict: u64,
    pub thresholds: Vec<f64>,
    pub score_all_variables: bool,
    pub output_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.data.train_size == 0 || self.data.test_size == 0 {
            return Err(Error::Config("train and test sizes must be at least 1".into()));
        }
        if self.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("thresholds must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub model: ModelKind,
    pub seed: u64,
    pub report: MetricsReport,
    pub sweep: Vec<MetricsReport>,
    pub train_seconds: f64,
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub dataset: String,
    pub config: ExperimentConfig,
    pub hashes: FileHashes,
    pub results: Vec<ModelResult>,
    pub artifacts: Vec<PathBuf>,
}

/// Generates data, trains every configured model, evaluates and sweeps, and
/// writes all artifacts under `config.output_dir`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    config.validate()?;
    let out = &config.output_dir;
    let bundle = crate::bundle::generate(&config.data)?;
    let meta = bundle.write(&out.join("data"))?;
    let mut artifacts: Vec<PathBuf> = ["network.json", "train.csv", "test.csv", "bundle.json"]
        .iter()
        .map(|f| out.join("data").join(f))
        .collect();
    let mut results = Vec::new();
    let mut rows = Vec::new();
    for mc in &config.models {
        let start = Instant::now();
        let model = train(&bundle.dataset, &layout(&bundle), mc, split(&bundle).0.as_ref())?;
        let train_seconds = start.elapsed().as_secs_f64();
        let checkpoint = out.join("models").join(format!("{}.json", mc.kind.label().to_lowercase()));
        fs::create_dir_all(checkpoint.parent().unwrap()).map_err(|e| io_err(out, e))?;
        fs::write(&checkpoint, model.to_json()?).map_err(|e| io_err(&checkpoint, e))?;
        artifacts.push(checkpoint.clone());

        let sweep = sweep(&bundle, &model, config.seed_predict, &config.thresholds, config.score_all_variables)?;
        let report = evaluate(&bundle, &model, config.seed_predict, config.score_all_variables)?;
        rows.push(metrics_row(&bundle.name, &meta.hashes.network, mc.kind.label(), mc.seed, &report));
        let sweep_path = out.join("sweeps").join(format!("{}_{}.csv", bundle.name, mc.kind.label().to_lowercase()));
        write_sweep_csv(&sweep_path, &sweep)?;
        artifacts.push(sweep_path);
        results.push(ModelResult { model: mc.kind, seed: mc.seed, report, sweep, train_seconds, checkpoint });
    }
    let metrics = out.join("metrics.csv");
    write_csv(&metrics, &metrics_header(), &rows)?;
    artifacts.push(metrics);
    let record = RunRecord { dataset: bundle.name, config: config.clone(), hashes: meta.hashes, results, artifacts };
    write_json(&out.join("run.json"), &record)?;
    Ok(record)
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "null".into())
}

pub fn write_sweep_csv(path: &Path, sweep: &[MetricsReport]) -> Result<()> {
    let header: Vec<String> = ["threshold", "n_units", "AD", "KL", "ACC"].iter().map(|s| s.to_string()).collect();
    let rows: Vec<Vec<String>> = sweep
        .iter()
        .map(|r| {
            vec![
                r.threshold.unwrap_or(0.0).to_string(),
                r.n_units.to_string(),
                fmt_opt(r.ad),
                fmt_opt(r.kl),
                fmt_opt(r.acc),
            ]
        })
        .collect();
    write_csv(path, &header, &rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFiles {
    pub json: PathBuf,
    pub results_csv: PathBuf,
    pub table_csv: PathBuf,
    pub series: Vec<PathBuf>,
}

/// Consolidates run records into `report.json`, a long-form `results.csv`,
/// a dataset-by-model `table.csv`, and one threshold series per model.
pub fn emit_report(records: &[RunRecord], out: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut rows = Vec::new();
    let mut table: BTreeMap<String, BTreeMap<ModelKind, &MetricsReport>> = BTreeMap::new();
    let mut series = Vec::new();
    for rec in records {
        for r in &rec.results {
            rows.push(metrics_row(&rec.dataset, &rec.hashes.network, r.model.label(), r.seed, &r.report));
            table.entry(rec.dataset.clone()).or_default().insert(r.model, &r.report);
            if !r.sweep.is_empty() {
                let p = out.join("series").join(format!("{}_{}.csv", rec.dataset, r.model.label().to_lowercase()));
                write_sweep_csv(&p, &r.sweep)?;
                series.push(p);
            }
        }
    }
    let results_csv = out.join("results.csv");
    write_csv(&results_csv, &metrics_header(), &rows)?;

    let mut header = vec!["dataset".to_string()];
    for m in ModelKind::TABLE {
        for metric in ["AD", "KL", "ACC"] {
            header.push(format!("{}_{metric}", m.label()));
        }
    }
    let wide: Vec<Vec<String>> = table
        .iter()
        .map(|(dataset, models)| {
            let mut row = vec![dataset.clone()];
            for m in ModelKind::TABLE {
                match models.get(&m) {
                    Some(r) => row.extend([fmt_opt(r.ad), fmt_opt(r.kl), fmt_opt(r.acc)]),
                    None => row.extend(std::iter::repeat_n(String::new(), 3)),
                }
            }
            row
        })
        .collect();
    let table_csv = out.join("table.csv");
    write_csv(&table_csv, &header, &wide)?;

    let json = out.join("report.json");
    write_json(&json, &records)?;
    Ok(ReportFiles { json, results_csv, table_csv, series })
}
