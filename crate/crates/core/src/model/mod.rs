//! The motion generator: input projection, stacked U-net blocks with
//! relative-position attention at the bottleneck, a position-wise FFN, and
//! LSTM decoders for the body and the bowing arm.

mod config;
pub mod container;
mod forward;
mod weights;

pub use config::ModelConfig;
pub use forward::{
    attention, ffn, forward, generate, linear, update_running_stats, AttentionParams, AttentionTrace,
    ForwardMode, ForwardOutput, Params,
};
pub use weights::{param_specs, Init, ModelWeights, ParamSpec, WEIGHTS_MAGIC};
