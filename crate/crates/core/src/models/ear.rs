use std::ops::Range;

use super::fit::{fit, Batch, Trainer, STREAM_INIT, STREAM_INIT_AUX};
use super::losses::{discriminator_objective, ear_objective, eara_generator_objective, nc_objective, LossWeights};
use super::{ModelConfig, ModelKind, ModelParams, Net, TrainLog, TrainedModel};
use crate::encoding::OneHotLayout;
use crate::error::{Error, Result};
use crate::nn::{forward, init_params, sigmoid, Activation, NetSpec, OptState, Params};
use crate::rng::{stream, SeededRng};
use crate::sampling::{Dataset, TestSet};

pub(crate) fn regressor_spec(layout: &OneHotLayout, input: usize, hidden: &[usize]) -> Result<NetSpec> {
    NetSpec::mlp(input, hidden, layout.total, Activation::Relu, Activation::Linear)
}

/// Discriminator producing a logit; `D = sigmoid(logit)`.
pub(crate) fn discriminator_spec(input: usize, hidden: &[usize]) -> Result<NetSpec> {
    NetSpec::mlp(input, hidden, 1, Activation::Relu, Activation::Linear)
}

struct EarTrainer {
    spec: NetSpec,
    params: Params,
    opt: OptState,
    weights: LossWeights,
    /// NC: restrict the loss to this block.
    block: Option<Range<usize>>,
}

impl EarTrainer {
    fn new(layout: &OneHotLayout, config: &ModelConfig, block: Option<Range<usize>>) -> Result<Self> {
        let spec = regressor_spec(layout, layout.input_width(), &config.hidden)?;
        let params = init_params(&spec, &mut stream(config.seed, STREAM_INIT));
        let opt = OptState::new(config.optimizer, &params);
        Ok(Self { spec, params, opt, weights: config.weights, block })
    }

    fn net(&self) -> Net {
        Net { spec: self.spec.clone(), params: self.params.clone() }
    }
}

impl Trainer for EarTrainer {
    fn step(&mut self, batch: &Batch, _rng: &mut SeededRng) -> Result<f64> {
        let (loss, grads) = match &self.block {
            Some(b) => nc_objective(&self.spec, &self.params, &batch.o, &batch.x, b.clone(), self.weights.gamma)?,
            None => ear_objective(&self.spec, &self.params, &batch.o, &batch.x, &batch.mask, &self.weights)?,
        };
        self.opt.step(&mut self.params, &grads)?;
        Ok(loss)
    }

    fn snapshot(&self) -> ModelParams {
        ModelParams::Regressor { net: self.net(), discriminator: None }
    }
}

/// EAR: one network regressing every block from the observation vector.
pub fn train_ear(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    let mut t = EarTrainer::new(layout, config, None)?;
    fit(&mut t, ModelKind::Ear, dataset, layout, config, validation, TrainLog::default())
}

/// NC: the EAR network trained on the target variable's block only.
pub fn train_nc(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    let target = config.target.ok_or_else(|| Error::Config("NC needs a target variable".into()))?;
    if target >= layout.len() {
        return Err(Error::Config(format!("target {target} out of range")));
    }
    let mut t = EarTrainer::new(layout, config, Some(layout.block(target)))?;
    fit(&mut t, ModelKind::Nc, dataset, layout, config, validation, TrainLog::default())
}

struct EaraTrainer {
    ear: EarTrainer,
    disc_spec: NetSpec,
    disc: Params,
    disc_opt: OptState,
    adv_weight: f64,
    fake_score: f64,
    real_score: f64,
    steps: usize,
}

impl Trainer for EaraTrainer {
    fn step(&mut self, batch: &Batch, _rng: &mut SeededRng) -> Result<f64> {
        let e = &mut self.ear;
        let (xhat, _) = forward(&e.spec, &e.params, &batch.o)?;
        let (_, dgrads) = discriminator_objective(&self.disc_spec, &self.disc, &batch.x, &xhat)?;
        self.disc_opt.step(&mut self.disc, &dgrads)?;

        let (zr, _) = forward(&self.disc_spec, &self.disc, &batch.x)?;
        let (zf, _) = forward(&self.disc_spec, &self.disc, &xhat)?;
        self.real_score += zr.mapv(sigmoid).mean().unwrap_or(0.0);
        self.fake_score += zf.mapv(sigmoid).mean().unwrap_or(0.0);
        self.steps += 1;

        let (loss, grads) = eara_generator_objective(
            &e.spec, &e.params, &self.disc_spec, &self.disc, &batch.o, &batch.x, &batch.mask, &e.weights, self.adv_weight,
        )?;
        e.opt.step(&mut e.params, &grads)?;
        Ok(loss)
    }

    fn snapshot(&self) -> ModelParams {
        ModelParams::Regressor {
            net: self.ear.net(),
            discriminator: Some(Net { spec: self.disc_spec.clone(), params: self.disc.clone() }),
        }
    }

    fn end_epoch(&mut self, epoch: usize) -> Option<String> {
        let n = self.steps.max(1) as f64;
        let (real, fake) = (self.real_score / n, self.fake_score / n);
        self.real_score = 0.0;
        self.fake_score = 0.0;
        self.steps = 0;
        (real > 0.99 && fake < 0.01).then(|| format!("epoch {epoch}: discriminator saturated (D(X)={real:.4}, D(EAR(o))={fake:.4})"))
    }
}

/// EARA: alternating discriminator and EAR steps, one each per minibatch.
pub fn train_eara(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    let ear = EarTrainer::new(layout, config, None)?;
    let disc_spec = discriminator_spec(layout.total, &config.disc_hidden)?;
    let disc = init_params(&disc_spec, &mut stream(config.seed, STREAM_INIT_AUX));
    let disc_opt = OptState::new(config.disc_optimizer, &disc);
    let mut t = EaraTrainer {
        ear,
        disc_spec,
        disc,
        disc_opt,
        adv_weight: config.adv_weight,
        fake_score: 0.0,
        real_score: 0.0,
        steps: 0,
    };
    fit(&mut t, ModelKind::Eara, dataset, layout, config, validation, TrainLog::default())
}
