use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::fit::{fit, Batch, Trainer, STREAM_INIT};
use super::{ModelConfig, ModelKind, ModelParams, TrainLog, TrainedModel};
use crate::encoding::{ObservationEncoding, OneHotLayout};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, Layer, OptState, Params};
use crate::rng::{stream, SeededRng};
use crate::sampling::{Dataset, TestSet};

/// Bernoulli RBM over the D one-hot visibles.
///
/// `params.layers[0]` holds `W` (visible x hidden) and the hidden bias;
/// `params.layers[1]` holds an empty weight and the visible bias, so the
/// whole model trains through [`OptState`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbmParams {
    pub params: Params,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `P(h | v) = sigmoid(b + v W)`
    HiddenGivenVisible,
    /// `P(v | h) = sigmoid(a + h W^T)`
    VisibleGivenHidden,
}

impl RbmParams {
    pub fn zeros(visible: usize, hidden: usize) -> Self {
        Self {
            params: Params {
                layers: vec![
                    Layer { weight: Array2::zeros((visible, hidden)), bias: Array1::zeros(hidden) },
                    Layer { weight: Array2::zeros((0, visible)), bias: Array1::zeros(visible) },
                ],
            },
        }
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.params.layers[0].weight
    }

    pub fn hidden_bias(&self) -> &Array1<f64> {
        &self.params.layers[0].bias
    }

    pub fn visible_bias(&self) -> &Array1<f64> {
        &self.params.layers[1].bias
    }

    pub fn visible(&self) -> usize {
        self.weight().nrows()
    }

    pub fn hidden(&self) -> usize {
        self.weight().ncols()
    }

    /// `P(v | h)` averaged over one hidden draw per row: callers replicate rows.
    pub(crate) fn predict_rows(&self, o: &Array2<f64>, rng: &mut SeededRng) -> Result<Array2<f64>> {
        let ph = rbm_conditionals(self, o, Direction::HiddenGivenVisible)?;
        let h = bernoulli(&ph, rng);
        rbm_conditionals(self, &h, Direction::VisibleGivenHidden)
    }
}

pub fn rbm_conditionals(rbm: &RbmParams, vectors: &Array2<f64>, direction: Direction) -> Result<Array2<f64>> {
    let mut z = match direction {
        Direction::HiddenGivenVisible => {
            if vectors.ncols() != rbm.visible() {
                return Err(Error::Shape(format!("visible width {} != {}", vectors.ncols(), rbm.visible())));
            }
            vectors.dot(rbm.weight()) + rbm.hidden_bias()
        }
        Direction::VisibleGivenHidden => {
            if vectors.ncols() != rbm.hidden() {
                return Err(Error::Shape(format!("hidden width {} != {}", vectors.ncols(), rbm.hidden())));
            }
            vectors.dot(&rbm.weight().t()) + rbm.visible_bias()
        }
    };
    z.mapv_inplace(sigmoid);
    Ok(z)
}

fn bernoulli(p: &Array2<f64>, rng: &mut SeededRng) -> Array2<f64> {
    p.mapv(|p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
}

/// Descent direction of one CD update, i.e. minus
/// `(<X h_data> - <v_model h_model>, X - v_model, h_data - h_model)` averaged over rows.
pub fn cd_gradient(
    rbm: &RbmParams,
    x: &Array2<f64>,
    h_data: &Array2<f64>,
    v_model: &Array2<f64>,
    h_model: &Array2<f64>,
) -> Params {
    let n = x.nrows().max(1) as f64;
    let mut g = rbm.params.zeros_like();
    g.layers[0].weight = (v_model.t().dot(h_model) - x.t().dot(h_data)) / n;
    g.layers[0].bias = (h_model - h_data).sum_axis(Axis(0)) / n;
    g.layers[1].bias = (v_model - x).sum_axis(Axis(0)) / n;
    g
}

struct RbmTrainer {
    rbm: RbmParams,
    opt: OptState,
    k: usize,
}

impl Trainer for RbmTrainer {
    fn step(&mut self, batch: &Batch, rng: &mut SeededRng) -> Result<f64> {
        let ph = rbm_conditionals(&self.rbm, &batch.o, Direction::HiddenGivenVisible)?;
        let h_data = bernoulli(&ph, rng);
        let recon = rbm_conditionals(&self.rbm, &h_data, Direction::VisibleGivenHidden)?;
        let mut v = bernoulli(&recon, rng);
        for _ in 1..self.k {
            let h = bernoulli(&rbm_conditionals(&self.rbm, &v, Direction::HiddenGivenVisible)?, rng);
            v = bernoulli(&rbm_conditionals(&self.rbm, &h, Direction::VisibleGivenHidden)?, rng);
        }
        let h_model = rbm_conditionals(&self.rbm, &v, Direction::HiddenGivenVisible)?;
        let g = cd_gradient(&self.rbm, &batch.x, &h_data, &v, &h_model);
        self.opt.step(&mut self.rbm.params, &g)?;
        let err = (&recon - &batch.x).mapv(|d| d * d).sum() / batch.x.nrows().max(1) as f64;
        Ok(err)
    }

    fn snapshot(&self) -> ModelParams {
        ModelParams::Rbm { rbm: self.rbm.clone() }
    }
}

/// CD-k with the observation vector in the visible layer and the full sample
/// in the positive statistics.
pub fn train_rbm(dataset: &Dataset, layout: &OneHotLayout, config: &ModelConfig, validation: Option<&TestSet>) -> Result<TrainedModel> {
    if layout.encoding != ObservationEncoding::ZeroBlock {
        return Err(Error::Config("the RBM needs the zero-block observation encoding".into()));
    }
    let mut rbm = RbmParams::zeros(layout.total, config.rbm_hidden);
    let normal = rand_distr::Normal::new(0.0, 0.01).expect("valid std");
    let mut rng = stream(config.seed, STREAM_INIT);
    rbm.params.layers[0].weight.mapv_inplace(|_| rand_distr::Distribution::sample(&normal, &mut rng));
    let opt = OptState::new(config.optimizer, &rbm.params);
    let mut t = RbmTrainer { rbm, opt, k: config.cd_steps };
    fit(&mut t, ModelKind::Rbm, dataset, layout, config, validation, TrainLog::default())
}
