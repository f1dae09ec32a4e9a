//! Neural-network engine: datasets, models, training, quantized inference.

pub mod checkpoint;
pub mod dataset;
pub mod infer;
pub mod model;
pub mod train;

use thiserror::Error;

use crate::quantnum::QuantError;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use dataset::{load_idx, synthetic, LabeledDataset, SyntheticSpec};
pub use infer::{evaluate, forward_hooked, FnHook, IdentityHook, MacHook, MacSite, NumericMode, PreparedModel};
pub use model::{Layer, Model, Shape, DEFAULT_MLP};
pub use train::{train_sgd, train_sgd_hooked, FaultContext, TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("i/o error: {0}")]
    Io(String),
    #[error("wrong magic: expected {expected:#010x}, found {found:#010x}")]
    WrongMagic { expected: u32, found: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("label {0} outside 0..10")]
    BadLabel(u8),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Quant(#[from] QuantError),
}
