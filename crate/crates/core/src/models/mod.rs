//! Generative models that map an observation vector to a length-D vector of
//! per-state scores: EAR, EARA, NC and the RBM, WGAN, CGAN, VAE and CVAE
//! baselines.

mod compose;
mod ear;
mod fit;
mod gan;
pub mod losses;
mod rbm;
mod vae;

use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bn::Evidence;
use crate::encoding::OneHotLayout;
use crate::error::{Error, Result};
use crate::metrics::Predictor;
use crate::nn::{NetSpec, OptimizerConfig, Params};
use crate::rng::SeededRng;
use crate::sampling::{Dataset, EvidencePolicy, NetworkRef, TestSet};

pub use compose::compose_block_diagonal;
pub use ear::{train_ear, train_eara, train_nc};
pub use gan::{train_cgan, train_wgan};
pub use losses::LossWeights;
pub use rbm::{cd_gradient, rbm_conditionals, train_rbm, Direction, RbmParams};
pub use vae::{train_cvae, train_vae};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ear,
    Eara,
    Nc,
    Rbm,
    Wgan,
    Cgan,
    Vae,
    Cvae,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::Ear,
        ModelKind::Eara,
        ModelKind::Nc,
        ModelKind::Rbm,
        ModelKind::Wgan,
        ModelKind::Cgan,
        ModelKind::Vae,
        ModelKind::Cvae,
    ];

    /// The seven models compared on the benchmark networks.
    pub const TABLE: [ModelKind; 7] = [
        ModelKind::Rbm,
        ModelKind::Wgan,
        ModelKind::Cgan,
        ModelKind::Vae,
        ModelKind::Cvae,
        ModelKind::Ear,
        ModelKind::Eara,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Ear => "EAR",
            ModelKind::Eara => "EARA",
            ModelKind::Nc => "NC",
            ModelKind::Rbm => "RBM",
            ModelKind::Wgan => "WGAN",
            ModelKind::Cgan => "CGAN",
            ModelKind::Vae => "VAE",
            ModelKind::Cvae => "CVAE",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(self, ModelKind::Rbm | ModelKind::Cgan | ModelKind::Cvae)
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown model `{s}`")))
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Hidden widths of the main network (EAR net, generator, or VAE encoder/decoder).
    pub hidden: Vec<usize>,
    pub weights: LossWeights,
    pub optimizer: OptimizerConfig,
    /// Optimizer of the discriminator or critic, when there is one.
    pub disc_optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    /// Noise width for CGAN, latent width for VAE and CVAE.
    pub latent_dim: usize,
    pub rbm_hidden: usize,
    pub cd_steps: usize,
    pub disc_hidden: Vec<usize>,
    /// Weight of the adversarial term in the EARA generator objective.
    pub adv_weight: f64,
    pub clip: f64,
    pub n_critic: usize,
    /// Samples averaged by stochastic predictors.
    pub samples: usize,
    pub seed: u64,
    pub patience: usize,
    pub validate_every: usize,
    /// Target variable for NC.
    pub target: Option<usize>,
    /// How observations are drawn from training samples for each minibatch.
    pub train_policy: EvidencePolicy,
}

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        let momentum = OptimizerConfig::momentum(0.01, 0.9);
        let rms = OptimizerConfig::rmsprop(0.001);
        let mut c = Self {
            kind,
            hidden: vec![64, 128, 128, 64],
            weights: LossWeights::default(),
            optimizer: momentum,
            disc_optimizer: momentum,
            epochs: 200,
            batch_size: 64,
            latent_dim: 32,
            rbm_hidden: 36,
            cd_steps: 10,
            disc_hidden: vec![128, 128],
            adv_weight: 1.0,
            clip: 0.01,
            n_critic: 5,
            samples: 100,
            seed: 0,
            patience: 20,
            validate_every: 1,
            target: None,
            train_policy: EvidencePolicy::UniformCount,
        };
        match kind {
            ModelKind::Wgan | ModelKind::Cgan => {
                c.optimizer = rms;
                c.disc_optimizer = rms;
            }
            ModelKind::Vae | ModelKind::Cvae => c.hidden = vec![128],
            _ => {}
        }
        c
    }

    /// Architecture used on the small synthetic networks.
    pub fn synthetic(kind: ModelKind) -> Self {
        let mut c = Self::new(kind);
        if !matches!(kind, ModelKind::Vae | ModelKind::Cvae) {
            c.hidden = vec![10, 10];
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let w = &self.weights;
        if w.alpha < 0.0 || w.beta < 0.0 || w.gamma < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if self.cd_steps == 0 || self.samples == 0 || self.batch_size == 0 || self.n_critic == 0 {
            return Err(Error::Config("cd_steps, samples, batch_size and n_critic must be at least 1".into()));
        }
        if self.validate_every == 0 {
            return Err(Error::Config("validate_every must be at least 1".into()));
        }
        Ok(())
    }
}

/// A network architecture with its weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Net {
    pub spec: NetSpec,
    pub params: Params,
}

impl Net {
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        crate::nn::predict(&self.spec, &self.params, x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum ModelParams {
    /// EAR, NC and the EARA generator: `o -> X̂`.
    Regressor { net: Net, discriminator: Option<Net> },
    Rbm { rbm: RbmParams },
    Wgan { generator: Net, critic: Net },
    Cgan { generator: Net, discriminator: Net, latent_dim: usize },
    Vae { encoder: Net, decoder: Net, latent_dim: usize },
    Cvae { encoder: Net, decoder: Net, latent_dim: usize },
}

/// Cases per chunk when stochastic predictors replicate rows.
const PREDICT_CHUNK: usize = 64;

impl ModelParams {
    pub fn predict(
        &self,
        layout: &OneHotLayout,
        evidence: &[&Evidence],
        samples: usize,
        rng: &mut SeededRng,
    ) -> Result<Array2<f64>> {
        let (o, _) = crate::encoding::encode_observations(layout, evidence);
        match self {
            ModelParams::Regressor { net, .. } => net.forward(&o),
            ModelParams::Wgan { generator, .. } => generator.forward(&o),
            ModelParams::Vae { encoder, decoder, latent_dim } => vae::predict_vae(encoder, decoder, *latent_dim, &o),
            ModelParams::Rbm { rbm } => averaged(&o, layout.total, samples, |rows| rbm.predict_rows(rows, rng)),
            ModelParams::Cgan { generator, latent_dim, .. } => {
                averaged(&o, layout.total, samples, |rows| gan::sample_cgan(generator, *latent_dim, rows, rng))
            }
            ModelParams::Cvae { decoder, latent_dim, .. } => {
                averaged(&o, layout.total, samples, |rows| vae::sample_cvae(decoder, *latent_dim, rows, rng))
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        let nets: Vec<&Net> = match self {
            ModelParams::Regressor { net, discriminator } => std::iter::once(net).chain(discriminator.as_ref()).collect(),
            ModelParams::Rbm { rbm } => return rbm.params.is_finite(),
            ModelParams::Wgan { generator, critic } => vec![generator, critic],
            ModelParams::Cgan { generator, discriminator, .. } => vec![generator, discriminator],
            ModelParams::Vae { encoder, decoder, .. } | ModelParams::Cvae { encoder, decoder, .. } => vec![encoder, decoder],
        };
        nets.iter().all(|n| n.params.is_finite())
    }
}

/// Mean over `samples` draws of `draw`, applied to each observation row
/// replicated `samples` times.
fn averaged(
    o: &Array2<f64>,
    width: usize,
    samples: usize,
    mut draw: impl FnMut(&Array2<f64>) -> Result<Array2<f64>>,
) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((o.nrows(), width));
    for start in (0..o.nrows()).step_by(PREDICT_CHUNK) {
        let end = (start + PREDICT_CHUNK).min(o.nrows());
        let rows: Vec<usize> = (start..end).flat_map(|i| std::iter::repeat_n(i, samples)).collect();
        let y = draw(&o.select(ndarray::Axis(0), &rows))?;
        for (k, i) in (start..end).enumerate() {
            let block = y.slice(ndarray::s![k * samples..(k + 1) * samples, ..]);
            out.row_mut(i).assign(&block.mean_axis(ndarray::Axis(0)).expect("samples >= 1"));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: f64,
    pub validation_ad: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_validation_ad: Option<f64>,
    pub stopped_early: bool,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub kind: ModelKind,
    pub config: ModelConfig,
    pub network: NetworkRef,
    pub layout: OneHotLayout,
    pub params: ModelParams,
    pub log: TrainLog,
}

impl TrainedModel {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if !m.params.is_finite() {
            return Err(Error::NonFinite("checkpoint parameters".into()));
        }
        Ok(m)
    }

    pub fn predict(&self, evidence: &[&Evidence], rng: &mut SeededRng) -> Result<Array2<f64>> {
        self.params.predict(&self.layout, evidence, self.config.samples, rng)
    }
}

impl Predictor for TrainedModel {
    fn predict_batch(&self, layout: &OneHotLayout, evidence: &[&Evidence], rng: &mut SeededRng) -> Result<Array2<f64>> {
        if layout != &self.layout {
            return Err(Error::Alignment("model layout does not match the test network".into()));
        }
        self.predict(evidence, rng)
    }
}

/// Trains the model selected by `config.kind`.
pub fn train(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    match config.kind {
        ModelKind::Ear => train_ear(dataset, layout, config, validation),
        ModelKind::Eara => train_eara(dataset, layout, config, validation),
        ModelKind::Nc => train_nc(dataset, layout, config, validation),
        ModelKind::Rbm => train_rbm(dataset, layout, config, validation),
        ModelKind::Wgan => train_wgan(dataset, layout, config, validation),
        ModelKind::Cgan => train_cgan(dataset, layout, config, validation),
        ModelKind::Vae => train_vae(dataset, layout, config, validation),
        ModelKind::Cvae => train_cvae(dataset, layout, config, validation),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_and_defaults() {
        for k in ModelKind::ALL {
            assert_eq!(k.label().to_lowercase().parse::<ModelKind>().unwrap(), k);
            ModelConfig::new(k).validate().unwrap();
        }
        assert!("gan".parse::<ModelKind>().is_err());
        assert_eq!(ModelConfig::new(ModelKind::Ear).hidden, vec![64, 128, 128, 64]);
        assert_eq!(ModelConfig::synthetic(ModelKind::Ear).hidden, vec![10, 10]);
        let mut c = ModelConfig::new(ModelKind::Rbm);
        c.cd_steps = 0;
        assert!(c.validate().is_err());
    }
}
