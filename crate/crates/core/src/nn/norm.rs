use super::{Grads, ParamId, Parameters, Tensor3};
use crate::{Error, Result};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Layer normalization over the channel axis with population variance.
#[derive(Clone, Debug)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub dim: usize,
    pub eps: f64,
}

#[derive(Clone, Debug)]
pub struct LayerNormCache {
    xhat: Tensor3,
    rstd: Vec<f64>,
}

impl LayerNorm {
    pub fn new(params: &mut Parameters, name: &str, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Parameter("layer norm over zero channels".into()));
        }
        Ok(LayerNorm {
            gamma: params.register_constant(format!("{name}.gamma"), &[dim], 1.0)?,
            beta: params.register_constant(format!("{name}.beta"), &[dim], 0.0)?,
            dim,
            eps: LAYER_NORM_EPS,
        })
    }

    pub fn num_params(dim: usize) -> usize {
        2 * dim
    }

    pub fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<(Tensor3, LayerNormCache)> {
        if x.channels() != self.dim {
            return Err(Error::shape("layer_norm", x.shape_string(), format!("{} channels", self.dim)));
        }
        let gamma = p.value(self.gamma);
        let beta = p.value(self.beta);
        let n = self.dim as f64;
        let mut xhat = x.clone();
        let mut y = Tensor3::zeros(x.batch(), x.tokens(), self.dim);
        let mut rstd = Vec::with_capacity(x.rows());
        for r in 0..x.rows() {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
            let rs = 1.0 / (var + self.eps).sqrt();
            rstd.push(rs);
            let xh = xhat.row_mut(r);
            for v in xh.iter_mut() {
                *v = (*v - mean) * rs;
            }
            for (((o, &h), &g), &b) in y.row_mut(r).iter_mut().zip(xhat.row(r)).zip(gamma).zip(beta) {
                *o = h * g + b;
            }
        }
        Ok((y, LayerNormCache { xhat, rstd }))
    }

    pub fn backward(&self, p: &Parameters, cache: &LayerNormCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let gamma = p.value(self.gamma);
        let n = self.dim as f64;
        {
            let dgamma = g.get_mut(self.gamma);
            for r in 0..dy.rows() {
                for ((acc, &d), &h) in dgamma.iter_mut().zip(dy.row(r)).zip(cache.xhat.row(r)) {
                    *acc += d * h;
                }
            }
        }
        {
            let dbeta = g.get_mut(self.beta);
            for r in 0..dy.rows() {
                for (acc, &d) in dbeta.iter_mut().zip(dy.row(r)) {
                    *acc += d;
                }
            }
        }
        let mut dx = Tensor3::zeros(dy.batch(), dy.tokens(), self.dim);
        let mut dxhat = vec![0.0; self.dim];
        for r in 0..dy.rows() {
            for ((o, &d), &gm) in dxhat.iter_mut().zip(dy.row(r)).zip(gamma) {
                *o = d * gm;
            }
            let xh = cache.xhat.row(r);
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / n;
            let rs = cache.rstd[r];
            for ((o, &d), &h) in dx.row_mut(r).iter_mut().zip(&dxhat).zip(xh) {
                *o = rs * (d - mean_d - h * mean_dx);
            }
        }
        dx
    }
}
