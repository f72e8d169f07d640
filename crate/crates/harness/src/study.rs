//! Markov-border study on the synthetic networks and the EAR versus NC comparison.

use std::path::Path;

use heteroinf::metrics::MetricsReport;
use heteroinf::models::{ModelConfig, ModelKind};
use heteroinf::rng::derive_seed;
use heteroinf::sampling::{hyperprior_variance_report, HyperPrior, SynthKind, VarianceReport};
use heteroinf::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::bundle::{generate, DataSpec};
use crate::catalog::NetworkSource;
use crate::experiment::{default_model_config, evaluate, train_on, write_csv, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub seeds: Vec<u64>,
    pub models: Vec<ModelKind>,
    pub train_size: usize,
    pub test_size: usize,
    /// Overrides the default epoch count of every model.
    pub epochs: Option<usize>,
}

impl StudyConfig {
    pub fn new(seeds: Vec<u64>, models: Vec<ModelKind>) -> Self {
        Self { seeds, models, train_size: 10_000, test_size: 1_000, epochs: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub kind: SynthKind,
    pub model: ModelKind,
    pub seed: u64,
    pub dataset_hash: String,
    pub report: MetricsReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResult {
    pub rows: Vec<StudyRow>,
    pub variance: Vec<VarianceReport>,
}

/// The synthetic problem of `kind` for one seed: the same seed drives the
/// network's CPTs, the training data, the test cases and the model.
pub fn synth_spec(kind: SynthKind, seed: u64, config: &StudyConfig) -> DataSpec {
    let mut spec = DataSpec::new(NetworkSource::Synth { kind, seed }, derive_seed(seed, 10), derive_seed(seed, 11));
    spec.train_size = config.train_size;
    spec.test_size = config.test_size;
    spec
}

fn model_for(spec: &DataSpec, kind: ModelKind, seed: u64, config: &StudyConfig) -> ModelConfig {
    let mut c = default_model_config(&spec.source, kind, seed);
    if let Some(e) = config.epochs {
        c.epochs = e;
    }
    c
}

pub fn run_study(config: &StudyConfig) -> Result<Vec<StudyRow>> {
    if config.seeds.is_empty() || config.models.is_empty() {
        return Err(Error::Config("a study needs at least one seed and one model".into()));
    }
    let mut rows = Vec::new();
    for kind in SynthKind::ALL {
        for &seed in &config.seeds {
            let spec = synth_spec(kind, seed, config);
            let bundle = generate(&spec)?;
            for &model in &config.models {
                let mc = model_for(&spec, model, seed, config);
                let trained = train_on(&bundle, &mc)?;
                let report = evaluate(&bundle, &trained, derive_seed(seed, 12), false)?;
                rows.push(StudyRow { kind, model, seed, dataset_hash: bundle.dataset.network.hash.clone(), report });
            }
        }
    }
    Ok(rows)
}

/// Table-shaped Markov-border run plus the hyperprior variance reports.
pub fn markov_border(config: &StudyConfig) -> Result<StudyResult> {
    let rows = run_study(config)?;
    let variance = vec![
        hyperprior_variance_report(&HyperPrior::Uniform { low: 0.0, high: 1.0 }, 100_000, 1)?,
        hyperprior_variance_report(&HyperPrior::PointMass { value: 0.5 }, 1_000, 1)?,
    ];
    Ok(StudyResult { rows, variance })
}

/// EAR and NC on the same data.
pub fn compare_nc(config: &StudyConfig) -> Result<Vec<StudyRow>> {
    let mut c = config.clone();
    c.models = vec![ModelKind::Ear, ModelKind::Nc];
    run_study(&c)
}

pub fn median(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    Some(if n % 2 == 1 { xs[n / 2] } else { 0.5 * (xs[n / 2 - 1] + xs[n / 2]) })
}

/// Median AD, KL and ACC over seeds for one (kind, model) cell.
pub fn cell(rows: &[StudyRow], kind: SynthKind, model: ModelKind) -> Option<(f64, f64, f64)> {
    let sel: Vec<&MetricsReport> = rows.iter().filter(|r| r.kind == kind && r.model == model).map(|r| &r.report).collect();
    Some((
        median(sel.iter().filter_map(|r| r.ad).collect())?,
        median(sel.iter().filter_map(|r| r.kl).collect())?,
        median(sel.iter().filter_map(|r| r.acc).collect())?,
    ))
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "null".into())
}

/// `rows.csv` with one line per (kind, model, seed) and `table.csv` with seed medians.
pub fn write_study(rows: &[StudyRow], dir: &Path) -> Result<()> {
    let header: Vec<String> = ["kind", "model", "seed", "dataset_hash", "n_units", "AD", "KL", "ACC"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.kind.label().to_string(),
                r.model.label().to_string(),
                r.seed.to_string(),
                r.dataset_hash.clone(),
                r.report.n_units.to_string(),
                fmt_opt(r.report.ad),
                fmt_opt(r.report.kl),
                fmt_opt(r.report.acc),
            ]
        })
        .collect();
    write_csv(&dir.join("rows.csv"), &header, &body)?;

    let mut models: Vec<ModelKind> = rows.iter().map(|r| r.model).collect();
    models.sort();
    models.dedup();
    let header: Vec<String> = ["kind", "model", "AD", "KL", "ACC"].iter().map(|s| s.to_string()).collect();
    let mut table = Vec::new();
    for kind in SynthKind::ALL {
        for &m in &models {
            if let Some((ad, kl, acc)) = cell(rows, kind, m) {
                table.push(vec![
                    kind.label().to_string(),
                    m.label().to_string(),
                    format!("{ad:.6}"),
                    format!("{kl:.6}"),
                    format!("{acc:.6}"),
                ]);
            }
        }
    }
    write_csv(&dir.join("table.csv"), &header, &table)
}

pub fn write_markov_border(result: &StudyResult, dir: &Path) -> Result<()> {
    write_study(&result.rows, dir)?;
    write_json(&dir.join("variance.json"), &result.variance)
}
