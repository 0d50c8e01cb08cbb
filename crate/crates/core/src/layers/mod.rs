//! Desk-scale numeric layers. Every layer reads parameters and calls its
//! children through the invocation context, so any child can be swapped by
//! config without touching the parent.

mod attention;
mod common;
mod feed_forward;
mod linear;
mod lm;
mod moe;
mod norm;
pub mod ops;
mod pos_emb;
mod registry;
mod trainer;
mod transformer;

pub use attention::{Attention, KERNELS};
pub use common::REMAT_FIELD;
pub use feed_forward::{scaled_hidden_dim, FeedForward};
pub use linear::Linear;
pub use lm::{CausalLm, Decoder, Embedding, LmHead};
pub use moe::MoE;
pub use norm::RmsNorm;
pub use pos_emb::{NoPos, RoPE, DEFAULT_THETA};
pub use registry::{
    adamw_config, empty_mapping, scaled_hidden_dim_spec, standard_registry, AdamW, ADAMW,
    SCALED_HIDDEN_DIM,
};
pub use trainer::{mesh_axis_names, mesh_shape, Trainer, DEFAULT_MESH_AXES};
pub use transformer::{StackedTransformer, TransformerLayer};
