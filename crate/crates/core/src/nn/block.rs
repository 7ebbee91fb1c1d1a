use super::{AttentionCache, AttentionConfig, Grads, LayerNorm, LayerNormCache, Mlp, MlpCache, MultiHeadAttention, Parameters, Tensor3};
use crate::numerics::Rng;
use crate::Result;

/// Pre-norm transformer block:
/// `x' = Attn(LN(x)) + x`, `out = MLP(LN(x')) + x'`.
#[derive(Clone, Debug)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct TransformerBlockCache {
    ln1: LayerNormCache,
    attn: AttentionCache,
    ln2: LayerNormCache,
    mlp: MlpCache,
}

impl TransformerBlock {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, cfg: &AttentionConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(TransformerBlock {
            ln1: LayerNorm::new(params, &format!("{name}.ln1"), cfg.d)?,
            attn: MultiHeadAttention::new(params, rng, &format!("{name}.attn"), cfg)?,
            ln2: LayerNorm::new(params, &format!("{name}.ln2"), cfg.d)?,
            mlp: Mlp::new(params, rng, &format!("{name}.mlp"), cfg.d, cfg.d_m, cfg.d)?,
        })
    }

    pub fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<(Tensor3, TransformerBlockCache)> {
        let (n1, ln1) = self.ln1.forward(p, x)?;
        let (a, attn) = self.attn.forward(p, &n1)?;
        let mut mid = a;
        mid.add_assign(x)?;
        let (n2, ln2) = self.ln2.forward(p, &mid)?;
        let (m, mlp) = self.mlp.forward(p, &n2)?;
        let mut out = m;
        out.add_assign(&mid)?;
        Ok((out, TransformerBlockCache { ln1, attn, ln2, mlp }))
    }

    pub fn backward(&self, p: &Parameters, cache: &TransformerBlockCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let dn2 = self.mlp.backward(p, &cache.mlp, dy, g);
        let mut dmid = self.ln2.backward(p, &cache.ln2, &dn2, g);
        dmid.add_assign(dy).expect("same shape");
        let dn1 = self.attn.backward(p, &cache.attn, &dmid, g);
        let mut dx = self.ln1.backward(p, &cache.ln1, &dn1, g);
        dx.add_assign(&dmid).expect("same shape");
        dx
    }
}
