//! AD, KL and ACC scores of predicted posterior marginals.
//!
//! A prediction is the raw length-D model output for one test case. Scores
//! are averaged over the scored variables of each case, then over cases.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bn::{BayesianNetwork, Evidence};
use crate::encoding::{argmax, encode_observations, OneHotLayout};
use crate::error::{Error, Result};
use crate::exact::posterior_marginals_ve;
use crate::rng::{seeded, SeededRng};
use crate::sampling::TestSet;

/// Lower clamp of predicted probabilities inside the KL logarithm.
pub const KL_FLOOR: f64 = 0.002_478_752_176_666_358_4;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    /// Score observed variables too (their truth is the observed point mass).
    pub score_all_variables: bool,
    /// Keep only units whose largest true probability is at least this.
    pub threshold: Option<f64>,
}

/// One scored (case, variable) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub case: usize,
    pub variable: usize,
    pub prediction: Vec<f64>,
    pub truth: Vec<f64>,
}

impl Unit {
    pub fn ad(&self) -> f64 {
        let k = self.truth.len() as f64;
        self.prediction
            .iter()
            .zip(&self.truth)
            .map(|(x, p)| (x.clamp(0.0, 1.0) - p).abs())
            .sum::<f64>()
            / k
    }

    pub fn kl(&self) -> f64 {
        -self
            .prediction
            .iter()
            .zip(&self.truth)
            .filter(|(_, &p)| p > 0.0)
            .map(|(x, &p)| p * (x.clamp(KL_FLOOR, 1.0) / p).ln())
            .sum::<f64>()
    }

    pub fn acc(&self) -> f64 {
        if argmax(&self.prediction) == argmax(&self.truth) {
            1.0
        } else {
            0.0
        }
    }

    pub fn max_truth(&self) -> f64 {
        self.truth.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Pairs every prediction row with its test case and extracts the scored units.
pub fn scoring_units(
    layout: &OneHotLayout,
    predictions: &Array2<f64>,
    testset: &TestSet,
    score_all_variables: bool,
) -> Result<Vec<Unit>> {
    if predictions.nrows() != testset.len() {
        return Err(Error::Alignment(format!(
            "{} predictions for {} test cases",
            predictions.nrows(),
            testset.len()
        )));
    }
    if predictions.ncols() != layout.total {
        return Err(Error::Alignment(format!("prediction width {} != {}", predictions.ncols(), layout.total)));
    }
    let mut units = Vec::new();
    for (i, case) in testset.cases.iter().enumerate() {
        let row = predictions.row(i);
        let row = row.as_slice().expect("standard layout");
        for v in 0..layout.len() {
            if let Some(t) = &testset.targets {
                if !t.contains(&v) {
                    continue;
                }
            }
            let truth = match case.evidence.get(v) {
                Some(s) if score_all_variables => {
                    let mut p = vec![0.0; layout.widths[v]];
                    p[s] = 1.0;
                    p
                }
                Some(_) => continue,
                None => case
                    .truth
                    .get(v)
                    .ok_or_else(|| Error::Alignment(format!("case {i} has no truth for variable {v}")))?
                    .to_vec(),
            };
            units.push(Unit { case: i, variable: v, prediction: row[layout.block(v)].to_vec(), truth });
        }
    }
    Ok(units)
}

/// Units whose true posterior has a dominant probability of at least `t`.
pub fn threshold_filter(units: Vec<Unit>, t: f64) -> Result<Vec<Unit>> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Config(format!("threshold {t} outside [0, 1]")));
    }
    // Truth rows are VE outputs; a point mass may carry rounding just below 1.
    Ok(units.into_iter().filter(|u| u.max_truth() >= t - 1e-12).collect())
}

/// Mean over cases of the per-case mean of `score` over its units.
fn aggregate(units: &[Unit], score: impl Fn(&Unit) -> f64) -> Option<f64> {
    let mut total = 0.0;
    let mut cases = 0usize;
    let mut i = 0;
    while i < units.len() {
        let case = units[i].case;
        let mut sum = 0.0;
        let mut n = 0usize;
        while i < units.len() && units[i].case == case {
            sum += score(&units[i]);
            n += 1;
            i += 1;
        }
        total += sum / n as f64;
        cases += 1;
    }
    (cases > 0).then(|| total / cases as f64)
}

pub fn absolute_deviation(units: &[Unit]) -> Option<f64> {
    aggregate(units, Unit::ad)
}

pub fn kl_divergence(units: &[Unit]) -> Option<f64> {
    aggregate(units, Unit::kl)
}

pub fn classification_accuracy(units: &[Unit]) -> Option<f64> {
    aggregate(units, Unit::acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseScore {
    pub case: usize,
    pub units: usize,
    pub ad: f64,
    pub kl: f64,
    pub acc: f64,
}

/// `None` metrics mean that no unit survived the filter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ad: Option<f64>,
    pub kl: Option<f64>,
    pub acc: Option<f64>,
    pub n_cases: usize,
    pub n_units: usize,
    pub threshold: Option<f64>,
    pub per_case: Vec<CaseScore>,
}

pub const CSV_HEADER: [&str; 8] = ["dataset", "model", "seed", "threshold", "n_units", "AD", "KL", "ACC"];

fn fmt_opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "null".into())
}

impl MetricsReport {
    pub fn from_units(units: &[Unit], threshold: Option<f64>) -> Self {
        let mut per_case = Vec::new();
        let mut i = 0;
        while i < units.len() {
            let case = units[i].case;
            let j = units[i..].iter().position(|u| u.case != case).map_or(units.len(), |p| i + p);
            let group = &units[i..j];
            let n = group.len() as f64;
            per_case.push(CaseScore {
                case,
                units: group.len(),
                ad: group.iter().map(Unit::ad).sum::<f64>() / n,
                kl: group.iter().map(Unit::kl).sum::<f64>() / n,
                acc: group.iter().map(Unit::acc).sum::<f64>() / n,
            });
            i = j;
        }
        Self {
            ad: absolute_deviation(units),
            kl: kl_divergence(units),
            acc: classification_accuracy(units),
            n_cases: per_case.len(),
            n_units: units.len(),
            threshold,
            per_case,
        }
    }

    /// `dataset, model, seed, threshold, n_units, AD, KL, ACC`
    pub fn csv_row(&self, dataset: &str, model: &str, seed: u64) -> Vec<String> {
        vec![
            dataset.to_string(),
            model.to_string(),
            seed.to_string(),
            self.threshold.map(|t| t.to_string()).unwrap_or_else(|| "0".into()),
            self.n_units.to_string(),
            fmt_opt(self.ad),
            fmt_opt(self.kl),
            fmt_opt(self.acc),
        ]
    }
}

pub fn evaluate_predictions(
    layout: &OneHotLayout,
    predictions: &Array2<f64>,
    testset: &TestSet,
    options: &ScoreOptions,
) -> Result<MetricsReport> {
    let mut units = scoring_units(layout, predictions, testset, options.score_all_variables)?;
    if let Some(t) = options.threshold {
        units = threshold_filter(units, t)?;
    }
    Ok(MetricsReport::from_units(&units, options.threshold))
}

/// Anything that maps a batch of observations to length-D outputs.
pub trait Predictor {
    fn predict_batch(&self, layout: &OneHotLayout, evidence: &[&Evidence], rng: &mut SeededRng) -> Result<Array2<f64>>;
}

/// Predicts every case of `testset` with a seeded stream.
pub fn predict_testset(
    model: &dyn Predictor,
    layout: &OneHotLayout,
    testset: &TestSet,
    seed: u64,
) -> Result<Array2<f64>> {
    let evidence: Vec<&Evidence> = testset.cases.iter().map(|c| &c.evidence).collect();
    model.predict_batch(layout, &evidence, &mut seeded(seed))
}

pub fn evaluate_model(
    model: &dyn Predictor,
    layout: &OneHotLayout,
    testset: &TestSet,
    seed: u64,
    options: &ScoreOptions,
) -> Result<MetricsReport> {
    let predictions = predict_testset(model, layout, testset, seed)?;
    evaluate_predictions(layout, &predictions, testset, options)
}

/// Exact posteriors as predictions; observed blocks are their one-hot values.
pub struct OraclePredictor<'a> {
    pub network: &'a BayesianNetwork,
}

impl Predictor for OraclePredictor<'_> {
    fn predict_batch(&self, layout: &OneHotLayout, evidence: &[&Evidence], _rng: &mut SeededRng) -> Result<Array2<f64>> {
        let (mut out, _) = encode_observations(layout, evidence);
        out = out.slice(ndarray::s![.., ..layout.total]).to_owned();
        for (i, ev) in evidence.iter().enumerate() {
            let post = posterior_marginals_ve(self.network, ev)?;
            for (&v, p) in &post.marginals {
                for (j, &x) in layout.block(v).zip(p) {
                    out[[i, j]] = x;
                }
            }
        }
        Ok(out)
    }
}

/// Uniform distribution on every block.
pub struct UniformPredictor;

impl Predictor for UniformPredictor {
    fn predict_batch(&self, layout: &OneHotLayout, evidence: &[&Evidence], _rng: &mut SeededRng) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((evidence.len(), layout.total));
        for v in 0..layout.len() {
            let k = layout.widths[v] as f64;
            out.slice_mut(ndarray::s![.., layout.block(v)]).fill(1.0 / k);
        }
        Ok(out)
    }
}
