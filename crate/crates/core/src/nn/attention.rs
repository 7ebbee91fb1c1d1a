use serde::{Deserialize, Serialize};

use super::{softmax_backward_in_place, softmax_in_place, Grads, Linear, Parameters, Tensor3};
use crate::numerics::kernels::{gemm_acc, gemm_nt_acc, gemm_tn_acc};
use crate::numerics::Rng;
use crate::{Error, Result};

/// Width `d`, head count `h` and MLP hidden width `d_m` of an attention block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttentionConfig {
    pub d: usize,
    pub h: usize,
    pub d_m: usize,
}

impl AttentionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 || self.d == 0 || self.d % self.h != 0 {
            return Err(Error::Parameter(format!(
                "model width {} is not divisible by head count {}",
                self.d, self.h
            )));
        }
        if self.d_m < self.d {
            return Err(Error::Parameter(format!(
                "MLP width {} is smaller than model width {}",
                self.d_m, self.d
            )));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.h
    }
}

/// Multi-head scaled dot-product self-attention over the token axis of each batch item,
/// with query/key/value/output projections.
#[derive(Clone, Debug)]
pub struct MultiHeadAttention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
    pub d: usize,
    pub heads: usize,
}

#[derive(Clone, Debug)]
pub struct AttentionCache {
    x: Tensor3,
    q: Tensor3,
    k: Tensor3,
    v: Tensor3,
    /// `batch × heads × tokens × tokens` attention weights.
    probs: Vec<f64>,
    ctx: Tensor3,
}

impl AttentionCache {
    /// Attention weights of one (batch item, head) pair, row-major `tokens × tokens`.
    pub fn weights(&self, b: usize, h: usize, heads: usize) -> &[f64] {
        let t = self.x.tokens();
        let off = (b * heads + h) * t * t;
        &self.probs[off..off + t * t]
    }
}

fn gather_head(x: &Tensor3, b: usize, h: usize, dh: usize) -> Vec<f64> {
    let t = x.tokens();
    let mut out = Vec::with_capacity(t * dh);
    for i in 0..t {
        out.extend_from_slice(&x.row(b * t + i)[h * dh..(h + 1) * dh]);
    }
    out
}

fn scatter_head(x: &mut Tensor3, b: usize, h: usize, dh: usize, src: &[f64]) {
    let t = x.tokens();
    for i in 0..t {
        x.row_mut(b * t + i)[h * dh..(h + 1) * dh].copy_from_slice(&src[i * dh..(i + 1) * dh]);
    }
}

impl MultiHeadAttention {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.d;
        Ok(MultiHeadAttention {
            q: Linear::new(params, rng, &format!("{name}.q"), d, d)?,
            k: Linear::new(params, rng, &format!("{name}.k"), d, d)?,
            v: Linear::new(params, rng, &format!("{name}.v"), d, d)?,
            o: Linear::new(params, rng, &format!("{name}.o"), d, d)?,
            d,
            heads: cfg.h,
        })
    }

    pub fn num_params(d: usize) -> usize {
        4 * Linear::num_params(d, d)
    }

    fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<(Tensor3, AttentionCache)> {
        if x.channels() != self.d {
            return Err(Error::shape("attention", x.shape_string(), format!("{} channels", self.d)));
        }
        let q = self.q.forward(p, x)?;
        let k = self.k.forward(p, x)?;
        let v = self.v.forward(p, x)?;
        let (nb, t) = (x.batch(), x.tokens());
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut probs = vec![0.0; nb * self.heads * t * t];
        let mut ctx = Tensor3::zeros(nb, t, self.d);
        for b in 0..nb {
            for h in 0..self.heads {
                let qh = gather_head(&q, b, h, dh);
                let kh = gather_head(&k, b, h, dh);
                let vh = gather_head(&v, b, h, dh);
                let off = (b * self.heads + h) * t * t;
                let s = &mut probs[off..off + t * t];
                gemm_nt_acc(&qh, &kh, s, t, dh, t);
                for row in s.chunks_exact_mut(t) {
                    row.iter_mut().for_each(|v| *v *= scale);
                    softmax_in_place(row);
                }
                let mut out = vec![0.0; t * dh];
                gemm_acc(s, &vh, &mut out, t, t, dh);
                scatter_head(&mut ctx, b, h, dh, &out);
            }
        }
        let y = self.o.forward(p, &ctx)?;
        Ok((
            y,
            AttentionCache {
                x: x.clone(),
                q,
                k,
                v,
                probs,
                ctx,
            },
        ))
    }

    pub fn backward(&self, p: &Parameters, cache: &AttentionCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let dctx = self.o.backward(p, &cache.ctx, dy, g);
        let (nb, t) = (cache.x.batch(), cache.x.tokens());
        let dh = self.head_dim();
        let scale = 1.0 / (dh as f64).sqrt();
        let mut dq = Tensor3::zeros(nb, t, self.d);
        let mut dk = Tensor3::zeros(nb, t, self.d);
        let mut dv = Tensor3::zeros(nb, t, self.d);
        for b in 0..nb {
            for h in 0..self.heads {
                let qh = gather_head(&cache.q, b, h, dh);
                let kh = gather_head(&cache.k, b, h, dh);
                let vh = gather_head(&cache.v, b, h, dh);
                let dout = gather_head(&dctx, b, h, dh);
                let off = (b * self.heads + h) * t * t;
                let a = &cache.probs[off..off + t * t];

                let mut dvh = vec![0.0; t * dh];
                gemm_tn_acc(a, &dout, &mut dvh, t, t, dh);
                let mut da = vec![0.0; t * t];
                gemm_nt_acc(&dout, &vh, &mut da, t, dh, t);
                for (ds_row, a_row) in da.chunks_exact_mut(t).zip(a.chunks_exact(t)) {
                    softmax_backward_in_place(a_row, ds_row);
                    ds_row.iter_mut().for_each(|d| *d *= scale);
                }
                let ds = da;
                let mut dqh = vec![0.0; t * dh];
                gemm_acc(&ds, &kh, &mut dqh, t, t, dh);
                let mut dkh = vec![0.0; t * dh];
                gemm_tn_acc(&ds, &qh, &mut dkh, t, t, dh);
                scatter_head(&mut dq, b, h, dh, &dqh);
                scatter_head(&mut dk, b, h, dh, &dkh);
                scatter_head(&mut dv, b, h, dh, &dvh);
            }
        }
        let mut dx = self.q.backward(p, &cache.x, &dq, g);
        dx.add_assign(&self.k.backward(p, &cache.x, &dk, g)).expect("same shape");
        dx.add_assign(&self.v.backward(p, &cache.x, &dv, g)).expect("same shape");
        dx
    }
}
