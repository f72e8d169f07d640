use serde::{Deserialize, Serialize};

use super::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// `v <- mu v - lr g; theta <- theta + v`
    Momentum { momentum: f64 },
    /// `s <- rho s + (1 - rho) g^2; theta <- theta - lr g / sqrt(s + eps)`
    RmsProp { decay: f64, epsilon: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
}

impl OptimizerConfig {
    pub fn momentum(learning_rate: f64, momentum: f64) -> Self {
        Self { kind: OptimizerKind::Momentum { momentum }, learning_rate }
    }

    pub fn rmsprop(learning_rate: f64) -> Self {
        Self { kind: OptimizerKind::RmsProp { decay: 0.9, epsilon: 1e-8 }, learning_rate }
    }
}

/// Optimizer plus its per-parameter accumulator.
#[derive(Debug, Clone)]
pub struct OptState {
    pub config: OptimizerConfig,
    accum: Params,
}

impl OptState {
    pub fn new(config: OptimizerConfig, params: &Params) -> Self {
        Self { config, accum: params.zeros_like() }
    }

    pub fn step(&mut self, params: &mut Params, grads: &Params) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.accum) {
            return Err(Error::Shape("optimizer state, params and grads differ in shape".into()));
        }
        let lr = self.config.learning_rate;
        match self.config.kind {
            OptimizerKind::Momentum { momentum } => {
                for ((p, g), v) in params.layers.iter_mut().zip(&grads.layers).zip(self.accum.layers.iter_mut()) {
                    v.weight.zip_mut_with(&g.weight, |v, &g| *v = momentum * *v - lr * g);
                    v.bias.zip_mut_with(&g.bias, |v, &g| *v = momentum * *v - lr * g);
                    p.weight += &v.weight;
                    p.bias += &v.bias;
                }
            }
            OptimizerKind::RmsProp { decay, epsilon } => {
                for ((p, g), s) in params.layers.iter_mut().zip(&grads.layers).zip(self.accum.layers.iter_mut()) {
                    s.weight.zip_mut_with(&g.weight, |s, &g| *s = decay * *s + (1.0 - decay) * g * g);
                    s.bias.zip_mut_with(&g.bias, |s, &g| *s = decay * *s + (1.0 - decay) * g * g);
                    ndarray::Zip::from(&mut p.weight)
                        .and(&g.weight)
                        .and(&s.weight)
                        .for_each(|p, &g, &s| *p -= lr * g / (s + epsilon).sqrt());
                    ndarray::Zip::from(&mut p.bias)
                        .and(&g.bias)
                        .and(&s.bias)
                        .for_each(|p, &g, &s| *p -= lr * g / (s + epsilon).sqrt());
                }
            }
        }
        if !params.is_finite() {
            return Err(Error::NonFinite("parameters after optimizer step".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_params, Activation, NetSpec};
    use crate::rng::seeded;

    fn setup() -> (Params, Params) {
        let spec = NetSpec::mlp(2, &[3], 1, Activation::Relu, Activation::Linear).unwrap();
        let p = init_params(&spec, &mut seeded(1));
        let mut g = p.zeros_like();
        for i in 0..g.len() {
            g.set(i, 0.1 * (i as f64 + 1.0));
        }
        (p, g)
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let (p, g) = setup();
        for cfg in [OptimizerConfig::momentum(0.1, 0.9), OptimizerConfig::rmsprop(0.1)] {
            let mut q = p.clone();
            OptState::new(cfg, &q).step(&mut q, &g.zeros_like()).unwrap();
            assert_eq!(q, p);
        }
    }

    #[test]
    fn zero_learning_rate_is_identity() {
        let (p, g) = setup();
        for cfg in [OptimizerConfig::momentum(0.0, 0.9), OptimizerConfig::rmsprop(0.0)] {
            let mut q = p.clone();
            let mut st = OptState::new(cfg, &q);
            st.step(&mut q, &g).unwrap();
            st.step(&mut q, &g).unwrap();
            assert_eq!(q, p);
        }
    }

    #[test]
    fn momentum_zero_is_sgd() {
        let (p, g) = setup();
        let mut q = p.clone();
        OptState::new(OptimizerConfig::momentum(0.5, 0.0), &q).step(&mut q, &g).unwrap();
        for i in 0..p.len() {
            assert!((q.get(i) - (p.get(i) - 0.5 * g.get(i))).abs() < 1e-15);
        }
    }

    #[test]
    fn two_momentum_steps() {
        // v1 = -lr g, v2 = -mu lr g - lr g: displacement -lr g (1 + (1 + mu))
        let (p, g) = setup();
        let (lr, mu) = (0.05, 0.9);
        let mut q = p.clone();
        let mut st = OptState::new(OptimizerConfig::momentum(lr, mu), &q);
        st.step(&mut q, &g).unwrap();
        st.step(&mut q, &g).unwrap();
        for i in 0..p.len() {
            let want = p.get(i) - lr * g.get(i) * (1.0 + (1.0 + mu));
            assert!((q.get(i) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn rmsprop_first_step() {
        let (p, g) = setup();
        let mut q = p.clone();
        let cfg = OptimizerConfig { kind: OptimizerKind::RmsProp { decay: 0.9, epsilon: 1e-8 }, learning_rate: 0.01 };
        OptState::new(cfg, &q).step(&mut q, &g).unwrap();
        for i in 0..p.len() {
            let s = 0.1 * g.get(i) * g.get(i);
            let want = p.get(i) - 0.01 * g.get(i) / (s + 1e-8).sqrt();
            assert!((q.get(i) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn non_finite_update_is_an_error() {
        let (mut p, mut g) = setup();
        g.set(0, f64::NAN);
        assert!(OptState::new(OptimizerConfig::momentum(0.1, 0.9), &p).step(&mut p, &g).is_err());
    }
}
