//! Decoder-only transformer: forward with capture, loss, training,
//! evaluation and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod eval;
pub mod forward;
pub mod loss;
pub mod optim;
pub mod params;
pub mod train;

pub use config::{LayerNormPlacement, ModelConfig, TrainConfig};
pub use eval::{closing_bracket_accuracy, AccuracyReport, OracleRunner, Runner, UniformRunner};
pub use forward::{forward, forward_with, AttentionTrace, HeadAblation, HeadTrace, Intervention};
pub use loss::{loss, loss_and_grad};
pub use params::{init_model, ModelParameters, ParamLayout};
pub use train::{train, train_from, CurvePoint, NoopObserver, TrainObserver, TrainOutcome};
