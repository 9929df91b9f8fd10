//! Minimal differentiable building blocks with reverse-mode autodiff.

pub mod checkpoint;
pub mod graph;
pub mod init;
pub mod layers;
pub mod store;

pub use checkpoint::{load_params, save_params};
pub use graph::{Gradients, Graph, NodeId};
pub use layers::{
    bi_gru_layer, dense, gru_sequence, gru_step, multi_head_attention, sinusoidal_pe,
    transformer_layer, DenseParams, GruCellParams, TransformerLayerParams,
};
pub use store::{Binding, ParamEntry, ParamId, ParamStore};
