use super::activation::{gelu_backward_cached, gelu_forward_cached};
use super::{Grads, Linear, Parameters, Tensor3};
use crate::numerics::Rng;
use crate::Result;

/// Two-layer perceptron `gelu(x W₁ + b₁) W₂ + b₂`.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub fc1: Linear,
    pub fc2: Linear,
}

#[derive(Clone, Debug)]
pub struct MlpCache {
    pub(crate) x: Tensor3,
    pub(crate) pre: Tensor3,
    pub(crate) cdf: Vec<f64>,
    pub(crate) act: Tensor3,
}

impl Mlp {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, d_in: usize, d_hidden: usize, d_out: usize) -> Result<Self> {
        Ok(Mlp {
            fc1: Linear::new(params, rng, &format!("{name}.fc1"), d_in, d_hidden)?,
            fc2: Linear::new(params, rng, &format!("{name}.fc2"), d_hidden, d_out)?,
        })
    }

    pub fn num_params(d_in: usize, d_hidden: usize, d_out: usize) -> usize {
        Linear::num_params(d_in, d_hidden) + Linear::num_params(d_hidden, d_out)
    }

    pub fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<(Tensor3, MlpCache)> {
        let pre = self.fc1.forward(p, x)?;
        let (act, cdf) = gelu_forward_cached(&pre);
        let y = self.fc2.forward(p, &act)?;
        Ok((
            y,
            MlpCache {
                x: x.clone(),
                pre,
                cdf,
                act,
            },
        ))
    }

    /// Parameter gradients only; for inputs that are constants of the graph.
    pub fn backward_params(&self, p: &Parameters, cache: &MlpCache, dy: &Tensor3, g: &mut Grads) {
        let dact = self.fc2.backward(p, &cache.act, dy, g);
        let dpre = gelu_backward_cached(&cache.pre, &cache.cdf, &dact);
        self.fc1.backward_params(&cache.x, &dpre, g);
    }

    pub fn backward(&self, p: &Parameters, cache: &MlpCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let dact = self.fc2.backward(p, &cache.act, dy, g);
        let dpre = gelu_backward_cached(&cache.pre, &cache.cdf, &dact);
        self.fc1.backward(p, &cache.x, &dpre, g)
    }
}
