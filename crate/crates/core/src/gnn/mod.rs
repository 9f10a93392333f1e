//! Two-layer graph neural networks: forward/backward passes, loss,
//! optimizer and the training loop.

mod adam;
mod checkpoint;
mod config;
mod loss;
mod model;
mod params;
mod train;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{Architecture, ModelConfig, TrainConfig};
pub use loss::{cross_entropy_loss, cross_entropy_with_grad, gradients};
pub use model::{
    backward, dropout_mask, forward_cached, gat_attention, gat_forward, gat_layer_backward,
    gat_layer_forward, gcn_forward, predict_logits, predict_prepared, ForwardCache,
    GatLayerCache, GatLayerGrads, Mode, PreparedGraph, LEAKY_SLOPE,
};
pub use params::ModelParams;
pub use train::{train, train_with_predictor, TrainReport, ValPredictor};
