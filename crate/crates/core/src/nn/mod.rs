//! Dense feed-forward networks with hand-written backpropagation.
//!
//! Batches are stored `(examples, features)`. Weights are `(inputs, outputs)`
//! so a layer computes `x.dot(W) + b`.

mod gradcheck;
mod optim;

use ndarray::{Array1, Array2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub use gradcheck::{gradient_check, GradCheckReport};
pub use optim::{OptState, OptimizerConfig, OptimizerKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Linear,
    Tanh,
}

impl Activation {
    fn apply(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|x| x.max(0.0)),
            Activation::Sigmoid => z.mapv_inplace(sigmoid),
            Activation::Linear => {}
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Multiplies `grad` by the derivative, expressed through the activation output.
    fn backprop(self, output: &Array2<f64>, grad: &mut Array2<f64>) {
        match self {
            Activation::Relu => grad.zip_mut_with(output, |g, &y| {
                if y <= 0.0 {
                    *g = 0.0
                }
            }),
            Activation::Sigmoid => grad.zip_mut_with(output, |g, &y| *g *= y * (1.0 - y)),
            Activation::Linear => {}
            Activation::Tanh => grad.zip_mut_with(output, |g, &y| *g *= 1.0 - y * y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetSpec {
    /// Input width, hidden widths, output width.
    pub widths: Vec<usize>,
    /// One activation per layer (`widths.len() - 1`).
    pub activations: Vec<Activation>,
}

impl NetSpec {
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Result<Self> {
        if widths.len() < 2 || activations.len() != widths.len() - 1 {
            return Err(Error::Shape("a net needs at least one layer and one activation per layer".into()));
        }
        if widths.contains(&0) {
            return Err(Error::Shape("layer widths must be positive".into()));
        }
        Ok(Self { widths, activations })
    }

    /// Fully connected net: `hidden_act` on every hidden layer, `output_act` last.
    pub fn mlp(input: usize, hidden: &[usize], output: usize, hidden_act: Activation, output_act: Activation) -> Result<Self> {
        let mut widths = vec![input];
        widths.extend_from_slice(hidden);
        widths.push(output);
        let mut activations = vec![hidden_act; hidden.len()];
        activations.push(output_act);
        Self::new(widths, activations)
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layer_count(&self) -> usize {
        self.activations.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "LayerRepr", try_from = "LayerRepr")]
pub struct Layer {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

/// Checkpoint form: shape plus row-major values.
#[derive(Serialize, Deserialize)]
struct LayerRepr {
    rows: usize,
    cols: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
}

impl From<Layer> for LayerRepr {
    fn from(l: Layer) -> Self {
        let (rows, cols) = l.weight.dim();
        Self { rows, cols, weight: l.weight.iter().copied().collect(), bias: l.bias.to_vec() }
    }
}

impl TryFrom<LayerRepr> for Layer {
    type Error = String;
    fn try_from(r: LayerRepr) -> std::result::Result<Self, String> {
        if r.bias.len() != r.cols {
            return Err(format!("bias length {} != {}", r.bias.len(), r.cols));
        }
        let weight = Array2::from_shape_vec((r.rows, r.cols), r.weight).map_err(|e| e.to_string())?;
        Ok(Self { weight, bias: Array1::from(r.bias) })
    }
}

/// Weights and biases of every layer. Gradients share this type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Layer>,
}

impl Params {
    pub fn zeros(spec: &NetSpec) -> Self {
        let layers = spec
            .widths
            .windows(2)
            .map(|w| Layer { weight: Array2::zeros((w[0], w[1])), bias: Array1::zeros(w[1]) })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer { weight: Array2::zeros(l.weight.raw_dim()), bias: Array1::zeros(l.bias.len()) })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat view in layer order: weights (row-major) then bias.
    pub fn get(&self, index: usize) -> f64 {
        let (l, i, is_bias) = self.locate(index);
        let layer = &self.layers[l];
        if is_bias {
            layer.bias[i]
        } else {
            let c = layer.weight.ncols();
            layer.weight[[i / c, i % c]]
        }
    }

    pub fn set(&mut self, index: usize, value: f64) {
        let (l, i, is_bias) = self.locate(index);
        let layer = &mut self.layers[l];
        if is_bias {
            layer.bias[i] = value;
        } else {
            let c = layer.weight.ncols();
            layer.weight[[i / c, i % c]] = value;
        }
    }

    fn locate(&self, mut index: usize) -> (usize, usize, bool) {
        for (l, layer) in self.layers.iter().enumerate() {
            if index < layer.weight.len() {
                return (l, index, false);
            }
            index -= layer.weight.len();
            if index < layer.bias.len() {
                return (l, index, true);
            }
            index -= layer.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    pub fn same_shape(&self, other: &Params) -> bool {
        self.layers.len() == other.layers.len()
            && self
                .layers
                .iter()
                .zip(&other.layers)
                .all(|(a, b)| a.weight.dim() == b.weight.dim() && a.bias.len() == b.bias.len())
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Params, scale: f64) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight.scaled_add(scale, &b.weight);
            a.bias.scaled_add(scale, &b.bias);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weight *= factor;
            l.bias *= factor;
        }
    }

    /// Sum of absolute weights (biases are not regularized).
    pub fn weight_l1(&self) -> f64 {
        self.layers.iter().map(|l| l.weight.iter().map(|w| w.abs()).sum::<f64>()).sum()
    }

    /// Adds `scale * sign(W)` to the weight gradients, with `sign(0) = 0`.
    pub fn add_weight_l1_subgradient(&mut self, params: &Params, scale: f64) {
        for (g, p) in self.layers.iter_mut().zip(&params.layers) {
            g.weight.zip_mut_with(&p.weight, |g, &w| {
                if w > 0.0 {
                    *g += scale
                } else if w < 0.0 {
                    *g -= scale
                }
            });
        }
    }

    /// Clips every weight and bias into `[-c, c]`.
    pub fn clamp(&mut self, c: f64) {
        for l in &mut self.layers {
            l.weight.mapv_inplace(|x| x.clamp(-c, c));
            l.bias.mapv_inplace(|x| x.clamp(-c, c));
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weight.iter().all(|x| x.is_finite()) && l.bias.iter().all(|x| x.is_finite()))
    }
}

/// Activations kept from a forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    /// `inputs[l]` is the input of layer `l`.
    inputs: Vec<Array2<f64>>,
    /// Output of the last layer.
    output: Array2<f64>,
}

impl Cache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

pub struct Gradients {
    pub params: Params,
    /// Gradient with respect to the network input.
    pub input: Array2<f64>,
}

fn check_shapes(spec: &NetSpec, params: &Params) -> Result<()> {
    if params.layers.len() != spec.layer_count() {
        return Err(Error::Shape(format!("{} layers vs spec {}", params.layers.len(), spec.layer_count())));
    }
    for (l, (layer, w)) in params.layers.iter().zip(spec.widths.windows(2)).enumerate() {
        if layer.weight.dim() != (w[0], w[1]) || layer.bias.len() != w[1] {
            return Err(Error::Shape(format!("layer {l} does not match spec")));
        }
    }
    Ok(())
}

pub fn forward(spec: &NetSpec, params: &Params, x: &Array2<f64>) -> Result<(Array2<f64>, Cache)> {
    check_shapes(spec, params)?;
    if x.ncols() != spec.input_width() {
        return Err(Error::Shape(format!("input width {} != {}", x.ncols(), spec.input_width())));
    }
    let mut inputs = Vec::with_capacity(spec.layer_count());
    let mut a = x.clone();
    for (layer, act) in params.layers.iter().zip(&spec.activations) {
        let mut z = a.dot(&layer.weight);
        z += &layer.bias;
        act.apply(&mut z);
        inputs.push(a);
        a = z;
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("network output".into()));
    }
    Ok((a.clone(), Cache { inputs, output: a }))
}

/// Output only, without keeping a cache.
pub fn predict(spec: &NetSpec, params: &Params, x: &Array2<f64>) -> Result<Array2<f64>> {
    forward(spec, params, x).map(|(y, _)| y)
}

/// Backpropagates `grad_out` (dLoss/dOutput) through the cached pass.
pub fn backward(spec: &NetSpec, params: &Params, cache: &Cache, grad_out: &Array2<f64>) -> Result<Gradients> {
    check_shapes(spec, params)?;
    if grad_out.dim() != cache.output.dim() {
        return Err(Error::Shape(format!("output gradient {:?} vs output {:?}", grad_out.dim(), cache.output.dim())));
    }
    let mut grads = params.zeros_like();
    let mut g = grad_out.clone();
    for l in (0..spec.layer_count()).rev() {
        let out = if l + 1 < spec.layer_count() { &cache.inputs[l + 1] } else { &cache.output };
        spec.activations[l].backprop(out, &mut g);
        let input = &cache.inputs[l];
        grads.layers[l].weight = input.t().dot(&g);
        grads.layers[l].bias = g.sum_axis(Axis(0));
        g = g.dot(&params.layers[l].weight.t());
    }
    Ok(Gradients { params: grads, input: g })
}

/// He scaling (std sqrt(2/fan_in)) for relu layers, sqrt(1/fan_in) otherwise; zero biases.
pub fn init_params(spec: &NetSpec, rng: &mut SeededRng) -> Params {
    let mut params = Params::zeros(spec);
    for (layer, act) in params.layers.iter_mut().zip(&spec.activations) {
        let fan_in = layer.weight.nrows() as f64;
        let std = match act {
            Activation::Relu => (2.0 / fan_in).sqrt(),
            _ => (1.0 / fan_in).sqrt(),
        };
        let normal = Normal::new(0.0, std).expect("positive std");
        layer.weight.iter_mut().for_each(|w| *w = normal.sample(rng));
    }
    params
}
