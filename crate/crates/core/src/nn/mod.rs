//! Classical building blocks with hand-written backward passes.

pub mod activation;
pub mod adam;
pub mod attention;
pub mod conv;
pub mod linear;
pub mod loss;
pub mod norm;
pub mod tensor;

pub use activation::{gelu, gelu_grad, relu, relu_grad};
pub use adam::AdamState;
pub use attention::{classical_attention, classical_attention_backward, softmax_rows};
pub use conv::{conv2d, conv2d_backward, pool, pool_backward, ConvSpec, PoolKind, PoolSpec};
pub use linear::{ffn, FFNParams, Linear};
pub use loss::{cross_entropy, cross_entropy_with_grad, softmax};
pub use norm::{layer_norm, LayerNorm};
pub use tensor::Tensor;
