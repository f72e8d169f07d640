use ndarray::{s, Array2};

use super::fit::{fit, Batch, Trainer, STREAM_INIT, STREAM_INIT_AUX};
use super::gan::standard_normal;
use super::losses::{hcat, vae_objective};
use super::{ModelConfig, ModelKind, ModelParams, Net, TrainLog, TrainedModel};
use crate::encoding::OneHotLayout;
use crate::error::Result;
use crate::nn::{init_params, Activation, NetSpec, OptState, Params};
use crate::rng::{stream, SeededRng};
use crate::sampling::{Dataset, TestSet};

/// Decoder output at the posterior mean: `dec(mu(o))`.
pub(crate) fn predict_vae(encoder: &Net, decoder: &Net, latent_dim: usize, o: &Array2<f64>) -> Result<Array2<f64>> {
    let h = encoder.forward(o)?;
    decoder.forward(&h.slice(s![.., ..latent_dim]).to_owned())
}

/// One decoder output per row of `o` with `z` drawn from the prior.
pub(crate) fn sample_cvae(decoder: &Net, latent_dim: usize, o: &Array2<f64>, rng: &mut SeededRng) -> Result<Array2<f64>> {
    let z = standard_normal(o.nrows(), latent_dim, rng);
    decoder.forward(&hcat(&z, o))
}

struct VaeTrainer {
    conditional: bool,
    enc_spec: NetSpec,
    enc: Params,
    enc_opt: OptState,
    dec_spec: NetSpec,
    dec: Params,
    dec_opt: OptState,
    latent_dim: usize,
}

impl Trainer for VaeTrainer {
    fn step(&mut self, batch: &Batch, rng: &mut SeededRng) -> Result<f64> {
        let eps = standard_normal(batch.o.nrows(), self.latent_dim, rng);
        let (enc_input, cond) = if self.conditional { (hcat(&batch.x, &batch.o), Some(&batch.o)) } else { (batch.o.clone(), None) };
        let (loss, [ge, gd]) = vae_objective(&self.enc_spec, &self.enc, &self.dec_spec, &self.dec, &enc_input, cond, &batch.x, &eps)?;
        self.enc_opt.step(&mut self.enc, &ge)?;
        self.dec_opt.step(&mut self.dec, &gd)?;
        Ok(loss)
    }

    fn snapshot(&self) -> ModelParams {
        let encoder = Net { spec: self.enc_spec.clone(), params: self.enc.clone() };
        let decoder = Net { spec: self.dec_spec.clone(), params: self.dec.clone() };
        if self.conditional {
            ModelParams::Cvae { encoder, decoder, latent_dim: self.latent_dim }
        } else {
            ModelParams::Vae { encoder, decoder, latent_dim: self.latent_dim }
        }
    }
}

fn train(
    conditional: bool,
    dataset: &Dataset,
    layout: &OneHotLayout,
    config: &ModelConfig,
    validation: Option<&TestSet>,
) -> Result<TrainedModel> {
    let l = config.latent_dim;
    let (enc_in, dec_in) = if conditional {
        (layout.total + layout.input_width(), l + layout.input_width())
    } else {
        (layout.input_width(), l)
    };
    let enc_spec = NetSpec::mlp(enc_in, &config.hidden, 2 * l, Activation::Relu, Activation::Linear)?;
    let dec_spec = NetSpec::mlp(dec_in, &config.hidden, layout.total, Activation::Relu, Activation::Linear)?;
    let enc = init_params(&enc_spec, &mut stream(config.seed, STREAM_INIT));
    let dec = init_params(&dec_spec, &mut stream(config.seed, STREAM_INIT_AUX));
    let mut t = VaeTrainer {
        conditional,
        enc_opt: OptState::new(config.optimizer, &enc),
        dec_opt: OptState::new(config.optimizer, &dec),
        enc_spec,
        enc,
        dec_spec,
        dec,
        latent_dim: l,
    };
    let mut log = TrainLog::default();
    let kind = if conditional {
        log.notes.push("the log p(o) term of the conditional bound is constant in the parameters and omitted".into());
        ModelKind::Cvae
    } else {
        ModelKind::Vae
    };
    fit(&mut t, kind, dataset, layout, config, validation, log)
}

/// VAE with encoder input `o` and reconstruction target `X`.
pub fn train_vae(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    train(false, dataset, layout, config, validation)
}

/// CVAE with encoder input `[X, o]` and decoder input `[z, o]`.
pub fn train_cvae(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    train(true, dataset, layout, config, validation)
}
