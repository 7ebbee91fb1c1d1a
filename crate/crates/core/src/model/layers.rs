use super::ModelConfig;
use crate::nn::{
    AttentionCache, Grads, LayerNorm, LayerNormCache, Mlp, MlpCache, MultiHeadAttention, Parameters, Tensor3,
};
use crate::numerics::Rng;
use crate::spectral::Band;
use crate::{Error, Result};

/// One token tensor per band, all of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct BandTokens {
    bands: [Tensor3; 3],
}

impl BandTokens {
    pub fn new(low: Tensor3, mid: Tensor3, high: Tensor3) -> Result<Self> {
        if !low.same_shape(&mid) || !low.same_shape(&high) {
            return Err(Error::shape(
                "BandTokens",
                low.shape_string(),
                format!("{} / {}", mid.shape_string(), high.shape_string()),
            ));
        }
        Ok(BandTokens { bands: [low, mid, high] })
    }

    pub fn get(&self, band: Band) -> &Tensor3 {
        &self.bands[band.index()]
    }

    pub fn get_mut(&mut self, band: Band) -> &mut Tensor3 {
        &mut self.bands[band.index()]
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.bands[0].shape()
    }

    /// Channel-wise `[low | mid | high]`.
    pub fn concat(&self) -> Tensor3 {
        Tensor3::concat_channels(&[&self.bands[0], &self.bands[1], &self.bands[2]]).expect("same shapes")
    }

    /// Inverse of [`BandTokens::concat`]: three equal channel chunks in band order.
    pub fn split(x: &Tensor3) -> Result<Self> {
        if x.channels() % 3 != 0 {
            return Err(Error::shape("BandTokens::split", "3C channels", x.channels()));
        }
        let mut parts = x.split_channels(3)?.into_iter();
        let (l, m, h) = (parts.next().unwrap(), parts.next().unwrap(), parts.next().unwrap());
        BandTokens::new(l, m, h)
    }

    pub fn is_finite(&self) -> bool {
        self.bands.iter().all(Tensor3::is_finite)
    }
}

#[derive(Clone, Debug)]
enum Mixer {
    Attention(MultiHeadAttention),
    Mlp(Mlp),
}

#[derive(Clone, Debug)]
enum MixerCache {
    Attention(AttentionCache),
    Mlp(MlpCache),
}

/// Per-band residual branch `X + f(LN(X))`; `f` is self-attention over all tokens of
/// the band or, when attention is disabled, a token-wise MLP.
#[derive(Clone, Debug)]
pub struct BandBranch {
    pub norm: LayerNorm,
    mixer: Mixer,
}

#[derive(Clone, Debug)]
pub struct BandBranchCache {
    norm: LayerNormCache,
    mixer: MixerCache,
}

impl BandBranch {
    fn new(params: &mut Parameters, rng: &mut Rng, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let c = cfg.channels;
        let norm = LayerNorm::new(params, &format!("{name}.norm"), c)?;
        let mixer = if cfg.disable_fa_attention {
            Mixer::Mlp(Mlp::new(params, rng, &format!("{name}.mlp"), c, cfg.mlp_ratio * c, c)?)
        } else {
            Mixer::Attention(MultiHeadAttention::new(params, rng, &format!("{name}.attn"), &cfg.attention())?)
        };
        Ok(BandBranch { norm, mixer })
    }

    pub fn attention(&self) -> Option<&MultiHeadAttention> {
        match &self.mixer {
            Mixer::Attention(a) => Some(a),
            Mixer::Mlp(_) => None,
        }
    }

    fn forward(&self, p: &Parameters, x: &Tensor3) -> Result<(Tensor3, BandBranchCache)> {
        let (n, norm) = self.norm.forward(p, x)?;
        let (mut y, mixer) = match &self.mixer {
            Mixer::Attention(a) => {
                let (y, c) = a.forward(p, &n)?;
                (y, MixerCache::Attention(c))
            }
            Mixer::Mlp(m) => {
                let (y, c) = m.forward(p, &n)?;
                (y, MixerCache::Mlp(c))
            }
        };
        y.add_assign(x)?;
        Ok((y, BandBranchCache { norm, mixer }))
    }

    fn backward(&self, p: &Parameters, cache: &BandBranchCache, dy: &Tensor3, g: &mut Grads) -> Tensor3 {
        let dn = match (&self.mixer, &cache.mixer) {
            (Mixer::Attention(a), MixerCache::Attention(c)) => a.backward(p, c, dy, g),
            (Mixer::Mlp(m), MixerCache::Mlp(c)) => m.backward(p, c, dy, g),
            _ => unreachable!("cache built by the same branch"),
        };
        let mut dx = self.norm.backward(p, &cache.norm, &dn, g);
        dx.add_assign(dy).expect("same shape");
        dx
    }
}

/// Frequency-aware attention: three independent branches, one per band, with no
/// information flowing between bands.
#[derive(Clone, Debug)]
pub struct FaAttention {
    pub branches: [BandBranch; 3],
}

#[derive(Clone, Debug)]
pub struct FaCache {
    branches: Vec<BandBranchCache>,
}

impl FaAttention {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let mut make = |b: Band| BandBranch::new(params, rng, &format!("{name}.{}", b.name()), cfg);
        Ok(FaAttention {
            branches: [make(Band::Low)?, make(Band::Mid)?, make(Band::High)?],
        })
    }

    pub fn forward(&self, p: &Parameters, x: &BandTokens) -> Result<(BandTokens, FaCache)> {
        let mut outs = Vec::with_capacity(3);
        let mut caches = Vec::with_capacity(3);
        for band in Band::ALL {
            let (y, c) = self.branches[band.index()].forward(p, x.get(band))?;
            outs.push(y);
            caches.push(c);
        }
        let mut it = outs.into_iter();
        let y = BandTokens::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())?;
        Ok((y, FaCache { branches: caches }))
    }

    pub fn backward(&self, p: &Parameters, cache: &FaCache, dy: &BandTokens, g: &mut Grads) -> BandTokens {
        let d: Vec<Tensor3> = Band::ALL
            .iter()
            .map(|b| self.branches[b.index()].backward(p, &cache.branches[b.index()], dy.get(*b), g))
            .collect();
        let mut it = d.into_iter();
        BandTokens::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap()).expect("same shapes")
    }
}

/// Frequency-mixing MLP: `Y = X + MLP(LN(X))` on the channel concatenation of the
/// bands, split back into three equal chunks.
#[derive(Clone, Debug)]
pub struct FmMlp {
    pub norm: LayerNorm,
    pub mlp: Mlp,
}

#[derive(Clone, Debug)]
pub struct FmCache {
    norm: LayerNormCache,
    mlp: MlpCache,
}

impl FmMlp {
    pub fn new(params: &mut Parameters, rng: &mut Rng, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let wide = 3 * cfg.channels;
        Ok(FmMlp {
            norm: LayerNorm::new(params, &format!("{name}.norm"), wide)?,
            mlp: Mlp::new(params, rng, &format!("{name}.mlp"), wide, cfg.mlp_ratio * wide, wide)?,
        })
    }

    pub fn forward(&self, p: &Parameters, x: &BandTokens) -> Result<(BandTokens, FmCache)> {
        let cat = x.concat();
        let (n, norm) = self.norm.forward(p, &cat)?;
        let (mut y, mlp) = self.mlp.forward(p, &n)?;
        y.add_assign(&cat)?;
        Ok((BandTokens::split(&y)?, FmCache { norm, mlp }))
    }

    pub fn backward(&self, p: &Parameters, cache: &FmCache, dy: &BandTokens, g: &mut Grads) -> BandTokens {
        let dcat = dy.concat();
        let dn = self.mlp.backward(p, &cache.mlp, &dcat, g);
        let mut dx = self.norm.backward(p, &cache.norm, &dn, g);
        dx.add_assign(&dcat).expect("same shape");
        BandTokens::split(&dx).expect("3C channels")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{check_layer, FD_EPS};

    fn cfg() -> ModelConfig {
        ModelConfig {
            channels: 8,
            heads: 2,
            ..ModelConfig::default()
        }
    }

    fn random_bands(rng: &mut Rng, tokens: usize, c: usize) -> BandTokens {
        let mut t = || Tensor3::from_vec(1, tokens, c, (0..tokens * c).map(|_| rng.normal()).collect()).unwrap();
        BandTokens::new(t(), t(), t()).unwrap()
    }

    fn zero_weights(p: &mut Parameters) {
        let ids: Vec<_> = p.ids().collect();
        for id in ids {
            if p.param(id).name.ends_with(".weight") {
                p.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
            }
        }
    }

    #[test]
    fn zero_branches_are_identity() {
        let mut rng = Rng::new(1);
        let mut p = Parameters::new();
        let fa = FaAttention::new(&mut p, &mut rng, "fa", &cfg()).unwrap();
        let fm = FmMlp::new(&mut p, &mut rng, "fm", &cfg()).unwrap();
        zero_weights(&mut p);
        let ids: Vec<_> = p.ids().collect();
        for id in ids {
            if p.param(id).name.ends_with(".bias") {
                p.value_mut(id).iter_mut().for_each(|v| *v = 0.0);
            }
        }
        let x = random_bands(&mut rng, 8, 8);
        assert_eq!(fa.forward(&p, &x).unwrap().0, x);
        assert_eq!(fm.forward(&p, &x).unwrap().0, x);
    }

    #[test]
    fn concat_split_round_trip() {
        let x = random_bands(&mut Rng::new(2), 5, 4);
        assert_eq!(BandTokens::split(&x.concat()).unwrap(), x);
        assert!(BandTokens::split(&Tensor3::zeros(1, 2, 4)).is_err());
    }

    #[test]
    fn fa_isolates_bands() {
        let mut rng = Rng::new(3);
        let mut p = Parameters::new();
        let fa = FaAttention::new(&mut p, &mut rng, "fa", &cfg()).unwrap();
        let x = random_bands(&mut rng, 8, 8);
        let (y, _) = fa.forward(&p, &x).unwrap();
        let mut x2 = x.clone();
        x2.get_mut(Band::High).data_mut().iter_mut().for_each(|v| *v += 0.5);
        let (y2, _) = fa.forward(&p, &x2).unwrap();
        assert_eq!(y.get(Band::Low), y2.get(Band::Low));
        assert_eq!(y.get(Band::Mid), y2.get(Band::Mid));
        assert_ne!(y.get(Band::High), y2.get(Band::High));
    }

    #[test]
    fn fm_mixes_bands() {
        let mut rng = Rng::new(4);
        let mut p = Parameters::new();
        let fm = FmMlp::new(&mut p, &mut rng, "fm", &cfg()).unwrap();
        let x = random_bands(&mut rng, 8, 8);
        let (y, _) = fm.forward(&p, &x).unwrap();
        let mut x2 = x.clone();
        x2.get_mut(Band::Low).data_mut()[0] += 0.5;
        let (y2, _) = fm.forward(&p, &x2).unwrap();
        for b in [Band::Mid, Band::High] {
            let mut d = y2.get(b).clone();
            d.data_mut().iter_mut().zip(y.get(b).data()).for_each(|(a, b)| *a -= b);
            assert!(d.norm() > 0.0);
        }
    }

    fn check(fa_mode: bool, disable_attention: bool) -> f64 {
        let mut rng = Rng::new(5);
        let mut p = Parameters::new();
        let cfg = ModelConfig {
            disable_fa_attention: disable_attention,
            ..cfg()
        };
        let fa = FaAttention::new(&mut p, &mut rng, "fa", &cfg).unwrap();
        let fm = FmMlp::new(&mut p, &mut rng, "fm", &cfg).unwrap();
        let x = random_bands(&mut rng, 8, 8).concat();
        let report = check_layer(
            &mut p,
            &x,
            &mut rng,
            |p, x| {
                let b = BandTokens::split(x).unwrap();
                if fa_mode { fa.forward(p, &b).unwrap().0 } else { fm.forward(p, &b).unwrap().0 }.concat()
            },
            |p, x, dy, g| {
                let b = BandTokens::split(x).unwrap();
                let dyb = BandTokens::split(dy).unwrap();
                if fa_mode {
                    let (_, c) = fa.forward(p, &b).unwrap();
                    fa.backward(p, &c, &dyb, g).concat()
                } else {
                    let (_, c) = fm.forward(p, &b).unwrap();
                    fm.backward(p, &c, &dyb, g).concat()
                }
            },
            FD_EPS,
        );
        report.worst()
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(check(true, false) < 1e-5);
        assert!(check(true, true) < 1e-5);
        assert!(check(false, false) < 1e-5);
    }
}
