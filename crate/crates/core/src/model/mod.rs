//! The convolutional auto-encoder used as an unsupervised feature extractor.

mod cae;
mod checkpoint;
mod config;
mod train;

pub use cae::{build_cae, embedding_rows, CaeModel, CaeParams, ForwardCache};
pub use checkpoint::{
    load_checkpoint, save_checkpoint, Checkpoint, CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{
    CaeConfig, ConfigMode, PUBLISHED_BOTTLENECK_CHANNELS, PUBLISHED_DECODER_CHANNELS, PUBLISHED_EMBEDDING_DIM,
    PUBLISHED_ENCODER_CHANNELS, PUBLISHED_EPOCHS, PUBLISHED_LEARNING_RATE,
};
pub use train::{epoch_order, train, train_step, TrainState};

use thiserror::Error;

use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("input batch has shape {found}, model expects {expected}")]
    InputShape { expected: String, found: String },
    #[error("training split is empty")]
    EmptyTrainingSet,
    #[error("training diverged: non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}
