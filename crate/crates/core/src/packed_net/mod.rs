//! Packed-Ensemble MLPs: architecture planning, parameters, forward pass and
//! exact gradients.

mod model_file;
mod network;
mod params;
mod spec;

pub use model_file::{decode_model, encode_model, load_model, save_model, FORMAT_VERSION, MAGIC};
pub use network::{
    grouped_affine, grouped_affine_backward, Mode, PackedMlp, PerEstimatorOutput, CHUNK_ROWS,
};
pub use params::{init_params, LayerParams, Params};
pub use spec::{
    hidden_weight_count, param_count, plan_layers, widened_width, LayerPlan, LayerRole,
    PackedSpec, DEFAULT_DROPOUT, FLOW_IN_FEATURES, FLOW_OUT_FEATURES,
};
