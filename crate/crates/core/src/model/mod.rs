//! The K-block decoder: projector, pre-norm blocks with rotated masked
//! attention and a gated MLP, output head, training, and greedy decoding.

pub mod config;
pub mod decode;
pub mod forward;
pub mod params;
pub mod train;
pub mod verify;

pub use config::{default_mlp_hidden, ModelConfig};
pub use decode::greedy_decode;
pub use forward::{forward, supervision, ForwardPass};
pub use params::{BlockParams, ModelParams};
pub use train::{train_step, AdamState, TrainConfig, TrainExample};
pub use verify::{grad_check_config, model_gradient_check};
