//! The marginal velocity-field model.
//!
//! Pipeline for history `H` (S×C), path state `G_t` (L×C) and time `t`:
//! instance-normalize `H` and `G_t` with the history statistics, split the
//! normalized history into top-K season and trend, embed each branch to
//! length `L` with a shared per-channel MLP, stack `[G; E; t]`, lift with
//! `W_e`, apply a truncated spectral kernel, project back to `C` channels,
//! sum the branches and denormalize.

mod checkpoint;
mod config;
mod decompose;
mod layers;
mod model;
mod norm;

pub use checkpoint::{Checkpoint, FORMAT_VERSION};
pub use config::{Architecture, Head, OperatorHyper};
pub use decompose::spectral_decompose;
pub use layers::{
    assemble_graph, assemble_input, dimension_expand, embed_history, embed_history_graph, expand_graph, project,
    project_graph, spectral_graph, spectral_layer,
};
pub use model::{init_params, Bound, Conditioned, EmbeddingVars, Operator, OutputKind};
pub use norm::{denormalize, instance_normalize, NormStats};
