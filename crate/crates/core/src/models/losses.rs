//! Training objectives with their analytic gradients.
//!
//! Every objective is averaged over the batch. Discriminators produce a logit
//! `z` and `D = sigmoid(z)`, so `log D = -softplus(-z)` and
//! `log(1 - D) = -softplus(z)`.

use std::ops::Range;

use ndarray::{concatenate, s, Array2, Axis};

use crate::error::{Error, Result};
use crate::nn::{backward, forward, sigmoid, softplus, NetSpec, Params};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossWeights {
    /// Weight of the latent-block error.
    pub alpha: f64,
    /// Weight of the observed-block (stability) error.
    pub beta: f64,
    /// Weight of the L1 penalty on network weights.
    pub gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0, gamma: 0.005 }
    }
}

pub struct EarLoss {
    pub value: f64,
    /// dL/dX̂.
    pub grad_output: Array2<f64>,
    /// Gradient of the L1 term (weights only).
    pub grad_params: Params,
}

fn same_dim(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("{what}: {:?} vs {:?}", a.dim(), b.dim())));
    }
    Ok(())
}

/// `alpha |mask (X - X̂)|^2 + beta |(1 - mask)(X - X̂)|^2 + gamma |W|_1`.
pub fn ear_loss(
    x: &Array2<f64>,
    xhat: &Array2<f64>,
    mask: &Array2<f64>,
    params: &Params,
    w: &LossWeights,
) -> Result<EarLoss> {
    same_dim(x, xhat, "target vs prediction")?;
    same_dim(x, mask, "target vs mask")?;
    let n = x.nrows().max(1) as f64;
    let mut value = 0.0;
    let mut grad = Array2::zeros(x.raw_dim());
    ndarray::Zip::from(&mut grad).and(x).and(xhat).and(mask).for_each(|g, &x, &y, &m| {
        let c = w.alpha * m + w.beta * (1.0 - m);
        let d = y - x;
        value += c * d * d;
        *g = 2.0 * c * d / n;
    });
    let mut grad_params = params.zeros_like();
    grad_params.add_weight_l1_subgradient(params, w.gamma);
    Ok(EarLoss { value: value / n + w.gamma * params.weight_l1(), grad_output: grad, grad_params })
}

/// Squared error on one block only, plus the L1 term.
pub fn nc_loss(x: &Array2<f64>, xhat: &Array2<f64>, block: Range<usize>, params: &Params, gamma: f64) -> Result<EarLoss> {
    same_dim(x, xhat, "target vs prediction")?;
    let n = x.nrows().max(1) as f64;
    let mut grad = Array2::zeros(x.raw_dim());
    let d = &xhat.slice(s![.., block.clone()]) - &x.slice(s![.., block.clone()]);
    let value = d.mapv(|v| v * v).sum() / n;
    grad.slice_mut(s![.., block]).assign(&(d * (2.0 / n)));
    let mut grad_params = params.zeros_like();
    grad_params.add_weight_l1_subgradient(params, gamma);
    Ok(EarLoss { value: value + gamma * params.weight_l1(), grad_output: grad, grad_params })
}

pub fn ear_objective(
    spec: &NetSpec,
    params: &Params,
    o: &Array2<f64>,
    x: &Array2<f64>,
    mask: &Array2<f64>,
    w: &LossWeights,
) -> Result<(f64, Params)> {
    let (xhat, cache) = forward(spec, params, o)?;
    let loss = ear_loss(x, &xhat, mask, params, w)?;
    let mut g = backward(spec, params, &cache, &loss.grad_output)?.params;
    g.add_scaled(&loss.grad_params, 1.0);
    Ok((loss.value, g))
}

pub fn nc_objective(
    spec: &NetSpec,
    params: &Params,
    o: &Array2<f64>,
    x: &Array2<f64>,
    block: Range<usize>,
    gamma: f64,
) -> Result<(f64, Params)> {
    let (xhat, cache) = forward(spec, params, o)?;
    let loss = nc_loss(x, &xhat, block, params, gamma)?;
    let mut g = backward(spec, params, &cache, &loss.grad_output)?.params;
    g.add_scaled(&loss.grad_params, 1.0);
    Ok((loss.value, g))
}

/// `-mean log D(real) - mean log(1 - D(fake))`, the negated discriminator ascent objective.
pub fn discriminator_objective(
    spec: &NetSpec,
    params: &Params,
    real: &Array2<f64>,
    fake: &Array2<f64>,
) -> Result<(f64, Params)> {
    let (zr, cr) = forward(spec, params, real)?;
    let (zf, cf) = forward(spec, params, fake)?;
    let nr = zr.nrows().max(1) as f64;
    let nf = zf.nrows().max(1) as f64;
    let value = zr.iter().map(|&z| softplus(-z)).sum::<f64>() / nr + zf.iter().map(|&z| softplus(z)).sum::<f64>() / nf;
    let gr = zr.mapv(|z| (sigmoid(z) - 1.0) / nr);
    let gf = zf.mapv(|z| sigmoid(z) / nf);
    let mut g = backward(spec, params, &cr, &gr)?.params;
    g.add_scaled(&backward(spec, params, &cf, &gf)?.params, 1.0);
    Ok((value, g))
}

/// Value and input gradient of `scale * mean f(D-logit)` for a fixed critic.
fn through_critic(
    spec: &NetSpec,
    params: &Params,
    input: &Array2<f64>,
    f: impl Fn(f64) -> (f64, f64),
    scale: f64,
) -> Result<(f64, Array2<f64>)> {
    let (z, cache) = forward(spec, params, input)?;
    let n = z.nrows().max(1) as f64;
    let mut value = 0.0;
    let grad = z.mapv(|z| {
        let (v, d) = f(z);
        value += v;
        scale * d / n
    });
    let g = backward(spec, params, &cache, &grad)?;
    Ok((scale * value / n, g.input))
}

/// EAR loss plus `adv_weight * mean log(1 - D(EAR(o)))`, gradient for the EAR net.
#[allow(clippy::too_many_arguments)]
pub fn eara_generator_objective(
    spec: &NetSpec,
    params: &Params,
    disc_spec: &NetSpec,
    disc: &Params,
    o: &Array2<f64>,
    x: &Array2<f64>,
    mask: &Array2<f64>,
    w: &LossWeights,
    adv_weight: f64,
) -> Result<(f64, Params)> {
    let (xhat, cache) = forward(spec, params, o)?;
    let loss = ear_loss(x, &xhat, mask, params, w)?;
    let mut value = loss.value;
    let mut grad_out = loss.grad_output;
    if adv_weight != 0.0 {
        let (adv, gin) = through_critic(disc_spec, disc, &xhat, |z| (-softplus(z), -sigmoid(z)), adv_weight)?;
        value += adv;
        grad_out += &gin;
    }
    let mut g = backward(spec, params, &cache, &grad_out)?.params;
    g.add_scaled(&loss.grad_params, 1.0);
    Ok((value, g))
}

pub fn hcat(a: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a.view(), b.view()]).expect("equal row counts")
}

/// Conditional discriminator loss on `[X, o]` versus `[G, o]`.
pub fn cgan_discriminator_objective(
    spec: &NetSpec,
    params: &Params,
    x: &Array2<f64>,
    generated: &Array2<f64>,
    o: &Array2<f64>,
) -> Result<(f64, Params)> {
    discriminator_objective(spec, params, &hcat(x, o), &hcat(generated, o))
}

/// Non-saturating generator loss `-mean log D([G([z, o]), o])`.
pub fn cgan_generator_objective(
    spec: &NetSpec,
    params: &Params,
    disc_spec: &NetSpec,
    disc: &Params,
    z: &Array2<f64>,
    o: &Array2<f64>,
) -> Result<(f64, Params)> {
    let (g, cache) = forward(spec, params, &hcat(z, o))?;
    let d = g.ncols();
    let (value, gin) = through_critic(disc_spec, disc, &hcat(&g, o), |z| (softplus(-z), sigmoid(z) - 1.0), 1.0)?;
    let grad_out = gin.slice(s![.., ..d]).to_owned();
    Ok((value, backward(spec, params, &cache, &grad_out)?.params))
}

/// `mean c(fake) - mean c(real)`; minimizing it maximizes the critic's estimate.
pub fn wgan_critic_objective(spec: &NetSpec, params: &Params, real: &Array2<f64>, fake: &Array2<f64>) -> Result<(f64, Params)> {
    let (cr, kr) = forward(spec, params, real)?;
    let (cf, kf) = forward(spec, params, fake)?;
    let nr = cr.nrows().max(1) as f64;
    let nf = cf.nrows().max(1) as f64;
    let value = cf.sum() / nf - cr.sum() / nr;
    let mut g = backward(spec, params, &kf, &Array2::from_elem(cf.raw_dim(), 1.0 / nf))?.params;
    g.add_scaled(&backward(spec, params, &kr, &Array2::from_elem(cr.raw_dim(), -1.0 / nr))?.params, 1.0);
    Ok((value, g))
}

/// `-mean c(G(o))`.
pub fn wgan_generator_objective(
    spec: &NetSpec,
    params: &Params,
    critic_spec: &NetSpec,
    critic: &Params,
    o: &Array2<f64>,
) -> Result<(f64, Params)> {
    let (g, cache) = forward(spec, params, o)?;
    let (value, gin) = through_critic(critic_spec, critic, &g, |z| (-z, -1.0), 1.0)?;
    Ok((value, backward(spec, params, &cache, &gin)?.params))
}

/// `0.5 * sum(mu^2 + exp(lv) - 1 - lv)` per row, averaged.
pub fn gaussian_kl(mu: &Array2<f64>, logvar: &Array2<f64>) -> f64 {
    let n = mu.nrows().max(1) as f64;
    ndarray::Zip::from(mu)
        .and(logvar)
        .fold(0.0, |acc, &m, &lv| acc + 0.5 * (m * m + lv.exp() - 1.0 - lv))
        / n
}

/// Reparameterized bound: squared reconstruction error plus KL to N(0, I).
///
/// The encoder maps `enc_input` to `[mu, logvar]`. The decoder sees
/// `z = mu + exp(logvar / 2) * eps`, concatenated with `cond` when given.
#[allow(clippy::too_many_arguments)]
pub fn vae_objective(
    enc_spec: &NetSpec,
    enc: &Params,
    dec_spec: &NetSpec,
    dec: &Params,
    enc_input: &Array2<f64>,
    cond: Option<&Array2<f64>>,
    x: &Array2<f64>,
    eps: &Array2<f64>,
) -> Result<(f64, [Params; 2])> {
    let latent = eps.ncols();
    let (h, enc_cache) = forward(enc_spec, enc, enc_input)?;
    if h.ncols() != 2 * latent {
        return Err(Error::Shape(format!("encoder width {} != 2 x latent {}", h.ncols(), latent)));
    }
    let mu = h.slice(s![.., ..latent]).to_owned();
    let logvar = h.slice(s![.., latent..]).to_owned();
    let std = logvar.mapv(|lv| (0.5 * lv).exp());
    let z = &mu + &(&std * eps);
    let dec_input = match cond {
        Some(c) => hcat(&z, c),
        None => z,
    };
    let (xhat, dec_cache) = forward(dec_spec, dec, &dec_input)?;
    same_dim(x, &xhat, "target vs reconstruction")?;
    let n = x.nrows().max(1) as f64;
    let diff = &xhat - x;
    let value = diff.mapv(|d| d * d).sum() / n + gaussian_kl(&mu, &logvar);
    let gd = backward(dec_spec, dec, &dec_cache, &(diff * (2.0 / n)))?;
    let gz = gd.input.slice(s![.., ..latent]).to_owned();
    let mut gh = Array2::zeros(h.raw_dim());
    let gmu = &gz + &(&mu / n);
    let glv = &gz * &std * eps * 0.5 + logvar.mapv(|lv| 0.5 * (lv.exp() - 1.0) / n);
    gh.slice_mut(s![.., ..latent]).assign(&gmu);
    gh.slice_mut(s![.., latent..]).assign(&glv);
    let ge = backward(enc_spec, enc, &enc_cache, &gh)?;
    Ok((value, [ge.params, gd.params]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{gradient_check, init_params, Activation, Layer};
    use crate::rng::seeded;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn no_params() -> Params {
        Params { layers: vec![] }
    }

    #[test]
    fn ear_loss_examples() {
        let x = array![[1.0, 0.0, 0.0, 1.0]];
        let l = ear_loss(&x, &x, &array![[1.0, 1.0, 0.0, 0.0]], &no_params(), &LossWeights { gamma: 0.0, ..Default::default() }).unwrap();
        assert_eq!(l.value, 0.0);

        let w = LossWeights { alpha: 1.0, beta: 0.0, gamma: 0.0 };
        let l = ear_loss(&x, &Array2::zeros((1, 4)), &Array2::ones((1, 4)), &no_params(), &w).unwrap();
        assert_eq!(l.value, 2.0);

        let p = Params { layers: vec![Layer { weight: array![[-2.0, 3.0]], bias: array![7.0, 7.0] }] };
        let w = LossWeights { alpha: 1.0, beta: 1.0, gamma: 0.1 };
        let l = ear_loss(&array![[0.0]], &array![[0.0]], &array![[1.0]], &p, &w).unwrap();
        assert!((l.value - 0.5).abs() < 1e-12);
        assert_eq!(l.grad_params.layers[0].weight, array![[-0.1, 0.1]]);
        assert!(ear_loss(&x, &array![[1.0]], &x, &p, &w).is_err());
    }

    #[test]
    fn nc_loss_ignores_other_blocks() {
        let x = array![[1.0, 0.0, 0.0, 1.0]];
        let a = nc_loss(&x, &array![[0.5, 0.5, 0.0, 1.0]], 0..2, &no_params(), 0.0).unwrap();
        let b = nc_loss(&x, &array![[0.5, 0.5, 9.0, -3.0]], 0..2, &no_params(), 0.0).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.value, 0.5);
        assert_eq!(b.grad_output.slice(s![.., 2..]).sum(), 0.0);
    }

    #[test]
    fn kl_examples() {
        assert_eq!(gaussian_kl(&array![[0.0, 0.0]], &array![[0.0, 0.0]]), 0.0);
        assert!((gaussian_kl(&array![[1.0, 0.0]], &array![[0.0, 0.0]]) - 0.5).abs() < 1e-15);
    }

    fn normal(rows: usize, cols: usize, rng: &mut crate::rng::SeededRng) -> Array2<f64> {
        Array2::from_shape_fn((rows, cols), |_| StandardNormal.sample(rng))
    }

    fn one_hot_rows(rows: usize, rng: &mut crate::rng::SeededRng) -> Array2<f64> {
        use rand::Rng;
        let mut x = Array2::zeros((rows, 5));
        for i in 0..rows {
            x[[i, rng.random_range(0..2)]] = 1.0;
            x[[i, 2 + rng.random_range(0..3)]] = 1.0;
        }
        x
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..3 {
            let mut rng = seeded(100 + seed);
            let g_spec = NetSpec::mlp(5, &[8, 6], 5, Activation::Tanh, Activation::Linear).unwrap();
            let d_spec = NetSpec::mlp(5, &[7], 1, Activation::Tanh, Activation::Linear).unwrap();
            let x = one_hot_rows(6, &mut rng);
            let mask = array![[1.0, 1.0, 0.0, 0.0, 0.0]].broadcast((6, 5)).unwrap().to_owned();
            let o = &x * &mask.mapv(|m| 1.0 - m);
            let g = init_params(&g_spec, &mut rng);
            let d = init_params(&d_spec, &mut rng);
            let w = LossWeights::default();

            let mut p = vec![g.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = ear_objective(&g_spec, &q[0], &o, &x, &mask, &w).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "ear {r:?}");

            let fake = normal(6, 5, &mut rng);
            let mut p = vec![d.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = discriminator_objective(&d_spec, &q[0], &x, &fake).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "disc {r:?}");

            let mut p = vec![g.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = eara_generator_objective(&g_spec, &q[0], &d_spec, &d, &o, &x, &mask, &w, 1.0).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "eara gen {r:?}");

            let cg_spec = NetSpec::mlp(3 + 5, &[8], 5, Activation::Tanh, Activation::Linear).unwrap();
            let cd_spec = NetSpec::mlp(5 + 5, &[7], 1, Activation::Tanh, Activation::Linear).unwrap();
            let cg = init_params(&cg_spec, &mut rng);
            let cd = init_params(&cd_spec, &mut rng);
            let z = normal(6, 3, &mut rng);
            let gen = forward(&cg_spec, &cg, &hcat(&z, &o)).unwrap().0;
            let mut p = vec![cd.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = cgan_discriminator_objective(&cd_spec, &q[0], &x, &gen, &o).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "cgan disc {r:?}");
            let mut p = vec![cg.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = cgan_generator_objective(&cg_spec, &q[0], &cd_spec, &cd, &z, &o).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "cgan gen {r:?}");

            let e_spec = NetSpec::mlp(5, &[8], 6, Activation::Tanh, Activation::Linear).unwrap();
            let v_spec = NetSpec::mlp(3, &[8], 5, Activation::Tanh, Activation::Linear).unwrap();
            let eps = normal(6, 3, &mut rng);
            let mut p = vec![init_params(&e_spec, &mut rng), init_params(&v_spec, &mut rng)];
            let r = gradient_check(&mut p, |q| { let (v, g) = vae_objective(&e_spec, &q[0], &v_spec, &q[1], &o, None, &x, &eps).unwrap(); (v, g.to_vec()) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "vae {r:?}");

            let ce_spec = NetSpec::mlp(10, &[8], 6, Activation::Tanh, Activation::Linear).unwrap();
            let cv_spec = NetSpec::mlp(8, &[8], 5, Activation::Tanh, Activation::Linear).unwrap();
            let enc_in = hcat(&x, &o);
            let mut p = vec![init_params(&ce_spec, &mut rng), init_params(&cv_spec, &mut rng)];
            let r = gradient_check(&mut p, |q| { let (v, g) = vae_objective(&ce_spec, &q[0], &cv_spec, &q[1], &enc_in, Some(&o), &x, &eps).unwrap(); (v, g.to_vec()) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "cvae {r:?}");

            let mut p = vec![d.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = wgan_critic_objective(&d_spec, &q[0], &x, &fake).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "critic {r:?}");
            let mut p = vec![g.clone()];
            let r = gradient_check(&mut p, |q| { let (v, g) = wgan_generator_objective(&g_spec, &q[0], &d_spec, &d, &o).unwrap(); (v, vec![g]) }, 60, 1e-4, &mut rng);
            assert!(r.passed(), "wgan gen {r:?}");
        }
    }

    #[test]
    fn constant_critic_gives_zero_generator_gradient() {
        let g_spec = NetSpec::mlp(3, &[4], 3, Activation::Relu, Activation::Linear).unwrap();
        let c_spec = NetSpec::mlp(3, &[4], 1, Activation::Relu, Activation::Linear).unwrap();
        let g = init_params(&g_spec, &mut seeded(1));
        let mut c = Params::zeros(&c_spec);
        c.layers[1].bias[0] = 0.7;
        let (_, grads) = wgan_generator_objective(&g_spec, &g, &c_spec, &c, &array![[1.0, 0.0, 0.0]]).unwrap();
        assert!(grads.to_flat().iter().all(|&v| v == 0.0));
    }
}
