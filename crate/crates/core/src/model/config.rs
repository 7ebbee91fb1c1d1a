use serde::{Deserialize, Serialize};

use crate::nn::{AttentionConfig, LayerNorm, Linear, Mlp, MultiHeadAttention};
use crate::spectral::Band;
use crate::{Error, Result};

/// Output head of the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeadConfig {
    /// Mean-pool all tokens, then an MLP to `num_classes` logits per clip.
    Classification { num_classes: usize },
    /// Per-token MLP to `num_labels` logits per anchor.
    Segmentation { num_labels: usize },
}

impl HeadConfig {
    pub fn outputs(&self) -> usize {
        match *self {
            HeadConfig::Classification { num_classes } => num_classes,
            HeadConfig::Segmentation { num_labels } => num_labels,
        }
    }

    pub fn task_name(&self) -> &'static str {
        match self {
            HeadConfig::Classification { .. } => "classification",
            HeadConfig::Segmentation { .. } => "segmentation",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Number of stacked mixer blocks.
    pub blocks: usize,
    /// Feature width of every band.
    pub channels: usize,
    pub heads: usize,
    /// Hidden width of every MLP as a multiple of its input width.
    pub mlp_ratio: usize,
    /// Neighbors per anchor in the per-frame graph.
    pub k: usize,
    pub f_low: usize,
    pub f_high: usize,
    /// Anchors sampled per output frame.
    pub anchors: usize,
    /// Input frames per output frame.
    pub frame_stride: usize,
    /// Grouping radius in normalized units.
    pub spatial_radius: f64,
    /// Frames on each side of the center frame searched during grouping.
    pub temporal_radius: usize,
    pub group_size: usize,
    pub head: HeadConfig,
    /// Bands whose tokens are replaced by zeros before the first block.
    pub disabled_bands: Vec<Band>,
    /// Drops the cross-band MLP from every block.
    pub disable_fm_mlp: bool,
    /// Replaces per-band attention with a per-band MLP.
    pub disable_fa_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            blocks: 3,
            channels: 128,
            heads: 4,
            mlp_ratio: 2,
            k: 10,
            f_low: 6,
            f_high: 10,
            anchors: 32,
            frame_stride: 2,
            spatial_radius: 0.25,
            temporal_radius: 1,
            group_size: 32,
            head: HeadConfig::Classification { num_classes: 4 },
            disabled_bands: Vec::new(),
            disable_fm_mlp: false,
            disable_fa_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.blocks == 0 {
            return bad("at least one block is required".into());
        }
        if self.channels == 0 || self.heads == 0 || self.channels % self.heads != 0 {
            return bad(format!("channels ({}) must be a positive multiple of heads ({})", self.channels, self.heads));
        }
        if self.mlp_ratio == 0 {
            return bad("mlp_ratio must be positive".into());
        }
        if self.k == 0 || self.anchors < self.k + 1 {
            return bad(format!("need 1 <= k < anchors, got k={} anchors={}", self.k, self.anchors));
        }
        if self.f_low > self.f_high || self.f_high > self.anchors {
            return bad(format!(
                "band thresholds must satisfy 0 <= f_low <= f_high <= anchors, got ({}, {}) with {} anchors",
                self.f_low, self.f_high, self.anchors
            ));
        }
        if self.frame_stride == 0 || self.group_size == 0 {
            return bad("frame_stride and group_size must be positive".into());
        }
        if !(self.spatial_radius.is_finite() && self.spatial_radius > 0.0) {
            return bad(format!("spatial_radius must be finite and positive, got {}", self.spatial_radius));
        }
        if self.head.outputs() == 0 {
            return bad("the head needs at least one output".into());
        }
        Ok(())
    }

    pub fn attention(&self) -> AttentionConfig {
        AttentionConfig {
            d: self.channels,
            h: self.heads,
            d_m: self.mlp_ratio * self.channels,
        }
    }

    pub fn band_enabled(&self, band: Band) -> bool {
        !self.disabled_bands.contains(&band)
    }

    /// Number of trainable scalars implied by this configuration.
    pub fn param_count(&self) -> usize {
        let c = self.channels;
        let wide = 3 * c;
        let branch = if self.disable_fa_attention {
            Mlp::num_params(c, self.mlp_ratio * c, c)
        } else {
            MultiHeadAttention::num_params(c)
        };
        let fa = 3 * (LayerNorm::num_params(c) + branch);
        let fm = if self.disable_fm_mlp {
            0
        } else {
            LayerNorm::num_params(wide) + Mlp::num_params(wide, self.mlp_ratio * wide, wide)
        };
        let encoder = Mlp::num_params(4, c, c);
        let pos = Linear::num_params(4, c);
        let head = Mlp::num_params(wide, c, self.head.outputs());
        encoder + pos + self.blocks * (fa + fm) + head
    }
}
