use ndarray::Array2;
use rand_distr::{Distribution, StandardNormal};

use super::ear::{discriminator_spec, regressor_spec};
use super::fit::{fit, Batch, Trainer, STREAM_INIT, STREAM_INIT_AUX};
use super::losses::{cgan_discriminator_objective, cgan_generator_objective, hcat, wgan_critic_objective, wgan_generator_objective};
use super::{ModelConfig, ModelKind, ModelParams, Net, TrainLog, TrainedModel};
use crate::encoding::OneHotLayout;
use crate::error::Result;
use crate::nn::{forward, init_params, NetSpec, OptState, Params};
use crate::rng::{stream, SeededRng};
use crate::sampling::{Dataset, TestSet};

pub(crate) fn standard_normal(rows: usize, cols: usize, rng: &mut SeededRng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
}

struct WganTrainer {
    gen_spec: NetSpec,
    gen: Params,
    gen_opt: OptState,
    critic_spec: NetSpec,
    critic: Params,
    critic_opt: OptState,
    clip: f64,
    n_critic: usize,
    steps: usize,
}

impl Trainer for WganTrainer {
    fn step(&mut self, batch: &Batch, _rng: &mut SeededRng) -> Result<f64> {
        let (fake, _) = forward(&self.gen_spec, &self.gen, &batch.o)?;
        let (value, g) = wgan_critic_objective(&self.critic_spec, &self.critic, &batch.x, &fake)?;
        self.critic_opt.step(&mut self.critic, &g)?;
        self.critic.clamp(self.clip);
        self.steps += 1;
        if self.steps % self.n_critic == 0 {
            let (_, g) = wgan_generator_objective(&self.gen_spec, &self.gen, &self.critic_spec, &self.critic, &batch.o)?;
            self.gen_opt.step(&mut self.gen, &g)?;
        }
        Ok(-value)
    }

    fn snapshot(&self) -> ModelParams {
        ModelParams::Wgan {
            generator: Net { spec: self.gen_spec.clone(), params: self.gen.clone() },
            critic: Net { spec: self.critic_spec.clone(), params: self.critic.clone() },
        }
    }
}

/// WGAN with a deterministic generator `o -> X̂` and a weight-clipped critic.
/// The reported loss is the critic's Wasserstein estimate.
pub fn train_wgan(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    let gen_spec = regressor_spec(layout, layout.input_width(), &config.hidden)?;
    let critic_spec = discriminator_spec(layout.total, &config.disc_hidden)?;
    let gen = init_params(&gen_spec, &mut stream(config.seed, STREAM_INIT));
    let mut critic = init_params(&critic_spec, &mut stream(config.seed, STREAM_INIT_AUX));
    critic.clamp(config.clip);
    let mut t = WganTrainer {
        gen_opt: OptState::new(config.optimizer, &gen),
        critic_opt: OptState::new(config.disc_optimizer, &critic),
        gen_spec,
        gen,
        critic_spec,
        critic,
        clip: config.clip,
        n_critic: config.n_critic,
        steps: 0,
    };
    fit(&mut t, ModelKind::Wgan, dataset, layout, config, validation, TrainLog::default())
}

/// One generator output per row of `o`, each with fresh noise.
pub(crate) fn sample_cgan(generator: &Net, latent_dim: usize, o: &Array2<f64>, rng: &mut SeededRng) -> Result<Array2<f64>> {
    let z = standard_normal(o.nrows(), latent_dim, rng);
    generator.forward(&hcat(&z, o))
}

struct CganTrainer {
    gen_spec: NetSpec,
    gen: Params,
    gen_opt: OptState,
    disc_spec: NetSpec,
    disc: Params,
    disc_opt: OptState,
    latent_dim: usize,
}

impl Trainer for CganTrainer {
    fn step(&mut self, batch: &Batch, rng: &mut SeededRng) -> Result<f64> {
        let n = batch.o.nrows();
        let z = standard_normal(n, self.latent_dim, rng);
        let (fake, _) = forward(&self.gen_spec, &self.gen, &hcat(&z, &batch.o))?;
        let (dloss, g) = cgan_discriminator_objective(&self.disc_spec, &self.disc, &batch.x, &fake, &batch.o)?;
        self.disc_opt.step(&mut self.disc, &g)?;
        let z = standard_normal(n, self.latent_dim, rng);
        let (_, g) = cgan_generator_objective(&self.gen_spec, &self.gen, &self.disc_spec, &self.disc, &z, &batch.o)?;
        self.gen_opt.step(&mut self.gen, &g)?;
        Ok(dloss)
    }

    fn snapshot(&self) -> ModelParams {
        ModelParams::Cgan {
            generator: Net { spec: self.gen_spec.clone(), params: self.gen.clone() },
            discriminator: Net { spec: self.disc_spec.clone(), params: self.disc.clone() },
            latent_dim: self.latent_dim,
        }
    }
}

/// Conditional GAN: generator `[z, o] -> X̂`, discriminator on `[X, o]`.
/// The reported loss is the discriminator's log-loss.
pub fn train_cgan(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    let gen_spec = regressor_spec(layout, config.latent_dim + layout.input_width(), &config.hidden)?;
    let disc_spec = discriminator_spec(layout.total + layout.input_width(), &config.disc_hidden)?;
    let gen = init_params(&gen_spec, &mut stream(config.seed, STREAM_INIT));
    let disc = init_params(&disc_spec, &mut stream(config.seed, STREAM_INIT_AUX));
    let mut t = CganTrainer {
        gen_opt: OptState::new(config.optimizer, &gen),
        disc_opt: OptState::new(config.disc_optimizer, &disc),
        gen_spec,
        gen,
        disc_spec,
        disc,
        latent_dim: config.latent_dim,
    };
    fit(&mut t, ModelKind::Cgan, dataset, layout, config, validation, TrainLog::default())
}
