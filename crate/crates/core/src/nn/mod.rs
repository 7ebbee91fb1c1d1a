//! Neural-network primitives with hand-written backward passes.
//!
//! Every layer follows the same pattern: `forward` returns the output together with
//! whatever it needs to differentiate later, and `backward` takes that cache plus the
//! upstream gradient, accumulates parameter gradients into a [`Grads`] buffer and returns
//! the gradient with respect to its input. Parameter values live in [`Parameters`];
//! gradients are accumulated in a separate buffer so a backward pass only needs shared
//! access to the values.

mod activation;
pub(crate) use activation::gelu_grad_with_cdf;
mod attention;
mod block;
mod linear;
mod mlp;
mod norm;
mod optim;
mod params;
mod tensor;

pub use activation::{
    gelu, gelu_backward, gelu_backward_cached, gelu_forward, gelu_forward_cached, gelu_grad, softmax_backward_in_place, softmax_in_place,
    softmax_rows,
};
pub use attention::{AttentionCache, AttentionConfig, MultiHeadAttention};
pub use block::{TransformerBlock, TransformerBlockCache};
pub use linear::Linear;
pub use mlp::{Mlp, MlpCache};
pub use norm::{LayerNorm, LayerNormCache, LAYER_NORM_EPS};
pub use optim::{clip_grad_norm, sgd_step, sgd_step_with_decay};
pub use params::{Grads, Param, ParamId, Parameters};
pub use tensor::Tensor3;
