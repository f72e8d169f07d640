use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;

use super::{EpochLog, ModelConfig, ModelKind, ModelParams, TrainLog, TrainedModel};
use crate::bn::Evidence;
use crate::encoding::{encode_assignment, write_observation, OneHotLayout};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_predictions, ScoreOptions};
use crate::rng::{stream, SeededRng};
use crate::sampling::{Dataset, TestSet};

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_DATA: u64 = 1;
pub(crate) const STREAM_NOISE: u64 = 2;
pub(crate) const STREAM_VALIDATION: u64 = 3;
pub(crate) const STREAM_INIT_AUX: u64 = 4;

/// One minibatch: targets, observations and latent masks.
pub(crate) struct Batch {
    pub x: Array2<f64>,
    pub o: Array2<f64>,
    pub mask: Array2<f64>,
}

pub(crate) trait Trainer {
    /// One optimization step; returns the minibatch loss.
    fn step(&mut self, batch: &Batch, rng: &mut SeededRng) -> Result<f64>;
    fn snapshot(&self) -> ModelParams;
    /// Called after every epoch; may return a note for the training log.
    fn end_epoch(&mut self, _epoch: usize) -> Option<String> {
        None
    }
}

fn make_batch(
    layout: &OneHotLayout,
    xs: &Array2<f64>,
    dataset: &Dataset,
    rows: &[usize],
    config: &ModelConfig,
    rng: &mut SeededRng,
) -> Batch {
    let x = xs.select(Axis(0), rows);
    let mut o = Array2::zeros((rows.len(), layout.input_width()));
    let mut mask = Array2::ones((rows.len(), layout.total));
    for (k, &r) in rows.iter().enumerate() {
        let ev = config.train_policy.draw(&dataset.samples[r], rng);
        let mut orow = o.row_mut(k);
        let mut mrow = mask.row_mut(k);
        write_observation(layout, &ev, orow.as_slice_mut().unwrap(), mrow.as_slice_mut().unwrap());
    }
    Batch { x, o, mask }
}

/// Minibatch training with shuffling, per-sample observation draws, and early
/// stopping on validation AD. Returns the best validated parameters, or the
/// final ones when there is no validation set.
pub(crate) fn fit(
    trainer: &mut dyn Trainer,
    kind: ModelKind,
    dataset: &Dataset,
    layout: &OneHotLayout,
    config: &ModelConfig,
    validation: Option<&TestSet>,
    mut log: TrainLog,
) -> Result<TrainedModel> {
    config.validate()?;
    if dataset.samples.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    if dataset.samples[0].0.len() != layout.len() {
        return Err(Error::Shape("training samples do not match the layout".into()));
    }
    let mut xs = Array2::zeros((dataset.samples.len(), layout.total));
    for (i, a) in dataset.samples.iter().enumerate() {
        xs.row_mut(i).assign(&encode_assignment(layout, a));
    }
    let validation = validation.filter(|v| !v.is_empty());
    let val_evidence: Vec<&Evidence> = validation.map(|v| v.cases.iter().map(|c| &c.evidence).collect()).unwrap_or_default();

    let mut data_rng = stream(config.seed, STREAM_DATA);
    let mut noise_rng = stream(config.seed, STREAM_NOISE);
    let mut order: Vec<usize> = (0..dataset.samples.len()).collect();
    let mut best: Option<(f64, ModelParams)> = None;
    let mut since_best = 0;

    for epoch in 0..config.epochs {
        order.shuffle(&mut data_rng);
        let mut total = 0.0;
        for rows in order.chunks(config.batch_size) {
            let batch = make_batch(layout, &xs, dataset, rows, config, &mut data_rng);
            let loss = trainer.step(&batch, &mut noise_rng).map_err(|e| match e {
                Error::NonFinite(m) => Error::Diverged { epoch, message: m },
                e => e,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, message: format!("{} loss is {loss}", kind.label()) });
            }
            total += loss * rows.len() as f64;
        }
        if let Some(note) = trainer.end_epoch(epoch) {
            log.notes.push(note);
        }
        let mut entry = EpochLog { epoch, loss: total / dataset.samples.len() as f64, validation_ad: None };
        let last = epoch + 1 == config.epochs;
        if let Some(v) = validation {
            if (epoch + 1) % config.validate_every == 0 || last {
                let snap = trainer.snapshot();
                let mut rng = stream(config.seed, STREAM_VALIDATION);
                let preds = snap.predict(layout, &val_evidence, config.samples, &mut rng)?;
                let ad = evaluate_predictions(layout, &preds, v, &ScoreOptions::default())?.ad.unwrap_or(0.0);
                entry.validation_ad = Some(ad);
                if best.as_ref().is_none_or(|(b, _)| ad < *b) {
                    best = Some((ad, snap));
                    log.best_epoch = Some(epoch);
                    log.best_validation_ad = Some(ad);
                    since_best = 0;
                } else {
                    since_best += config.validate_every;
                }
            }
        }
        log.epochs.push(entry);
        if validation.is_some() && since_best >= config.patience {
            log.stopped_early = !last;
            break;
        }
    }
    let params = match best {
        Some((_, p)) => p,
        None => trainer.snapshot(),
    };
    Ok(TrainedModel {
        kind,
        config: config.clone(),
        network: dataset.network.clone(),
        layout: layout.clone(),
        params,
        log,
    })
}
