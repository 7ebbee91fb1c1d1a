//! The mixer network: point 4D convolution encoder, spectral band tokens,
//! frequency-aware attention, frequency-mixing MLP, and output heads.

mod checkpoint;
mod config;
mod encoder;
mod fps;
mod layers;
mod network;

pub use checkpoint::{canonical_json, Checkpoint, StoredTensor, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{HeadConfig, ModelConfig};
pub use encoder::{prepare_clip, Point4dCache, Point4dConv, PreparedClip};
pub use fps::{farthest_from_centroid, farthest_point_sample};
pub use layers::{BandBranch, BandTokens, FaAttention, FaCache, FmCache, FmMlp};
pub use network::{ForwardCache, MixerBlock, StsMixer};
