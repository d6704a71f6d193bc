//! Three-branch recurrent classifier, trained with Adam.

pub mod adam;
pub mod checkpoint;
pub mod lstm;
pub mod model;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
pub use lstm::{lstm_backward, lstm_forward, Direction, LstmShape, LstmTrace};
pub use model::{argmax, loss, Batch, BranchConfig, Gradients, Mode, NetworkConfig, NetworkModel, Standardizer};
pub use train::{train, EpochLog, TrainConfig, TrainSample};

#[derive(Debug, thiserror::Error)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask must be a non-empty prefix of valid steps")]
    InvalidMask,
    #[error("label {label} outside 0..{classes}")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("training set is empty")]
    EmptyDataset,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
