use super::encoder::{Point4dCache, Point4dConv, PreparedClip};
use super::layers::{BandTokens, FaAttention, FaCache, FmCache, FmMlp};
use super::{HeadConfig, ModelConfig};
use crate::nn::{Grads, Linear, Mlp, MlpCache, Parameters, Tensor3};
use crate::numerics::Rng;
use crate::spectral::Band;
use crate::{Error, Result};

/// One mixer block: per-band attention followed by the cross-band MLP.
#[derive(Clone, Debug)]
pub struct MixerBlock {
    pub fa: FaAttention,
    pub fm: Option<FmMlp>,
}

/// The full network: point 4D convolution, band tokens, `L` mixer blocks and a head.
#[derive(Clone, Debug)]
pub struct StsMixer {
    cfg: ModelConfig,
    pub encoder: Point4dConv,
    pub pos_embed: Linear,
    pub blocks: Vec<MixerBlock>,
    pub head: Mlp,
}

#[derive(Clone, Debug)]
pub struct ForwardCache {
    encoder: Point4dCache,
    blocks: Vec<(FaCache, Option<FmCache>)>,
    head: MlpCache,
    tokens: usize,
}

/// Stream of the seed used for weight initialization.
const INIT_STREAM: u64 = 0x1417;

impl StsMixer {
    /// Builds the network and registers its parameters, initialized from `seed`.
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<(StsMixer, Parameters)> {
        cfg.validate()?;
        let mut params = Parameters::new();
        let mut rng = Rng::derive(seed, INIT_STREAM);
        let c = cfg.channels;
        let encoder = Point4dConv::new(&mut params, &mut rng, "encoder", c)?;
        let pos_embed = Linear::new(&mut params, &mut rng, "pos_embed", 4, c)?;
        let blocks = (0..cfg.blocks)
            .map(|i| {
                let fa = FaAttention::new(&mut params, &mut rng, &format!("blocks.{i}.fa"), cfg)?;
                let fm = if cfg.disable_fm_mlp {
                    None
                } else {
                    Some(FmMlp::new(&mut params, &mut rng, &format!("blocks.{i}.fm"), cfg)?)
                };
                Ok(MixerBlock { fa, fm })
            })
            .collect::<Result<_>>()?;
        let head = Mlp::new(&mut params, &mut rng, "head", 3 * c, c, cfg.head.outputs())?;
        Ok((
            StsMixer {
                cfg: cfg.clone(),
                encoder,
                pos_embed,
                blocks,
                head,
            },
            params,
        ))
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    fn check_clip(&self, clip: &PreparedClip) -> Result<()> {
        if clip.anchors_per_frame != self.cfg.anchors {
            return Err(Error::shape("StsMixer input", self.cfg.anchors, clip.anchors_per_frame));
        }
        Ok(())
    }

    /// Encoder features `F′`, `(1, T′·N′, C)`.
    pub fn encode(&self, p: &Parameters, clip: &PreparedClip) -> Result<(Tensor3, Point4dCache)> {
        self.check_clip(clip)?;
        self.encoder.forward(p, &clip.displacements, &clip.group_offsets)
    }

    /// Band tokens `F′ + pos_embed(band coordinates, t)`; disabled bands are all zero.
    pub fn band_tokens(&self, p: &Parameters, clip: &PreparedClip, features: &Tensor3) -> Result<BandTokens> {
        let mut out = Vec::with_capacity(3);
        for band in Band::ALL {
            if self.cfg.band_enabled(band) {
                let mut t = self.pos_embed.forward(p, &clip.band_inputs[band.index()])?;
                t.add_assign(features)?;
                out.push(t);
            } else {
                let (b, n, c) = features.shape();
                out.push(Tensor3::zeros(b, n, c));
            }
        }
        let mut it = out.into_iter();
        BandTokens::new(it.next().unwrap(), it.next().unwrap(), it.next().unwrap())
    }

    /// Logits `(1, 1, classes)` for classification or `(1, T′·N′, labels)` for
    /// segmentation.
    pub fn forward(&self, p: &Parameters, clip: &PreparedClip) -> Result<(Tensor3, ForwardCache)> {
        let (features, encoder) = self.encode(p, clip)?;
        let mut x = self.band_tokens(p, clip, &features)?;
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (y, fa) = blk.fa.forward(p, &x)?;
            x = y;
            let fm = match &blk.fm {
                Some(fm) => {
                    let (y, c) = fm.forward(p, &x)?;
                    x = y;
                    Some(c)
                }
                None => None,
            };
            blocks.push((fa, fm));
        }
        let cat = x.concat();
        let tokens = cat.tokens();
        let head_in = match self.cfg.head {
            HeadConfig::Classification { .. } => mean_tokens(&cat),
            HeadConfig::Segmentation { .. } => cat,
        };
        let (logits, head) = self.head.forward(p, &head_in)?;
        Ok((
            logits,
            ForwardCache {
                encoder,
                blocks,
                head,
                tokens,
            },
        ))
    }

    /// Accumulates parameter gradients of a loss whose gradient w.r.t. the logits is
    /// `dlogits` into `g`.
    pub fn backward(&self, p: &Parameters, clip: &PreparedClip, cache: &ForwardCache, dlogits: &Tensor3, g: &mut Grads) {
        let dhead = self.head.backward(p, &cache.head, dlogits, g);
        let dcat = match self.cfg.head {
            HeadConfig::Classification { .. } => {
                let scale = 1.0 / cache.tokens as f64;
                let mut d = Tensor3::zeros(1, cache.tokens, dhead.channels());
                for r in 0..cache.tokens {
                    d.row_mut(r).iter_mut().zip(dhead.row(0)).for_each(|(o, &v)| *o = v * scale);
                }
                d
            }
            HeadConfig::Segmentation { .. } => dhead,
        };
        let mut dx = BandTokens::split(&dcat).expect("3C channels");
        for (blk, (fa, fm)) in self.blocks.iter().zip(&cache.blocks).rev() {
            if let (Some(layer), Some(c)) = (&blk.fm, fm) {
                dx = layer.backward(p, c, &dx, g);
            }
            dx = blk.fa.backward(p, fa, &dx, g);
        }
        let (_, n, c) = dx.shape();
        let mut dfeat = Tensor3::zeros(1, n, c);
        for band in Band::ALL {
            if self.cfg.band_enabled(band) {
                let d = dx.get(band);
                self.pos_embed.backward_params(&clip.band_inputs[band.index()], d, g);
                dfeat.add_assign(d).expect("same shape");
            }
        }
        self.encoder.backward_params(p, &cache.encoder, &dfeat, g);
    }

    /// Stacked logits for several clips: `(batch, 1, classes)` or
    /// `(batch, T′·N′, labels)`.
    pub fn forward_batch(&self, p: &Parameters, clips: &[&PreparedClip]) -> Result<Tensor3> {
        let mut rows = Vec::new();
        let mut shape = (0, 0);
        for clip in clips {
            let (l, _) = self.forward(p, clip)?;
            shape = (l.tokens(), l.channels());
            rows.extend_from_slice(l.data());
        }
        Tensor3::from_vec(clips.len(), shape.0, shape.1, rows)
    }
}

fn mean_tokens(x: &Tensor3) -> Tensor3 {
    let (_, n, c) = x.shape();
    let mut out = Tensor3::zeros(1, 1, c);
    for r in 0..n {
        out.row_mut(0).iter_mut().zip(x.row(r)).for_each(|(o, &v)| *o += v);
    }
    out.data_mut().iter_mut().for_each(|v| *v /= n as f64);
    out
}
