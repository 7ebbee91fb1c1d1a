use super::{Grads, ParamId, Parameters, Tensor3};
use crate::numerics::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::numerics::Rng;
use crate::{Error, Result};

/// Affine map `y = x W + b` over the channel axis; `W` is `d_in × d_out`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub d_in: usize,
    pub d_out: usize,
}

impl Linear {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, d_in: usize, d_out: usize) -> Result<Self> {
        let weight = params.register_uniform(format!("{name}.weight"), &[d_in, d_out], d_in, rng)?;
        let bias = params.register_constant(format!("{name}.bias"), &[d_out], 0.0)?;
        Ok(Linear {
            weight,
            bias,
            d_in,
            d_out,
        })
    }

    pub fn num_params(d_in: usize, d_out: usize) -> usize {
        d_in * d_out + d_out
    }

    fn check(&self, x: &Tensor3) -> Result<()> {
        if x.channels() != self.d_in {
            return Err(Error::shape(
                "linear",
                x.shape_string(),
                format!("{} input channels", self.d_in),
            ));
        }
        Ok(())
    }

    pub fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<Tensor3> {
        self.check(x)?;
        let rows = x.rows();
        let bias = p.value(self.bias);
        let mut out = Vec::with_capacity(rows * self.d_out);
        for _ in 0..rows {
            out.extend_from_slice(bias);
        }
        gemm_acc(x.data(), p.value(self.weight), &mut out, rows, self.d_in, self.d_out);
        Tensor3::from_vec(x.batch(), x.tokens(), self.d_out, out)
    }

    /// Accumulates `dW = xᵀ dy` and `db = Σ dy` without forming the input gradient.
    pub fn backward_params(&self, x: &Tensor3, dy: &Tensor3, g: &mut Grads) {
        let rows = x.rows();
        gemm_tn_acc(x.data(), dy.data(), g.get_mut(self.weight), rows, self.d_in, self.d_out);
        let db = g.get_mut(self.bias);
        for r in 0..rows {
            for (b, d) in db.iter_mut().zip(dy.row(r)) {
                *b += d;
            }
        }
    }

    /// Parameter gradients plus `dx = dy Wᵀ`.
    pub fn backward(&self, p: &Parameters, x: &Tensor3, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        self.backward_params(x, dy, g);
        self.input_grad(p, dy)
    }

    pub fn input_grad(&self, p: &Parameters, dy: &Tensor3) -> Tensor3 {
        let rows = dy.rows();
        let mut dx = Tensor3::zeros(dy.batch(), dy.tokens(), self.d_in);
        gemm_nt_acc(dy.data(), p.value(self.weight), dx.data_mut(), rows, self.d_out, self.d_in);
        dx
    }
}
