//! Stacked-LSTM sequence regressor with three scalar heads.
//!
//! Every LSTM layer is followed by inverted dropout on its outputs. The
//! last layer feeds three dense heads (arousal, valence, liking), each
//! producing one value per frame. Training minimises the weighted
//! multitask CCC loss with exact backpropagation through time and RMSprop.
//!
//! Padded frames are never run through the network; their outputs are
//! zero and take no part in the loss, so appending padding to a batch
//! leaves loss and gradients bit-identical.

mod checkpoint;
mod network;
mod optim;
mod params;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{MetricsError, MtlWeights};

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use network::{forward, loss_and_gradients, ForwardOutput, LossReport, Pass, SeqBatch};
pub use optim::{rmsprop_step, RmsPropState};
pub use params::ParamSet;
pub use train::{
    evaluate, predict, train, train_with_observer, EpochRecord, Sequence, SequenceSet, TrainOutcome,
};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("sequence {index}: {source}")]
    Loss {
        index: usize,
        #[source]
        source: MetricsError,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("empty {0} split")]
    EmptySplit(&'static str),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type ModelResult<T> = std::result::Result<T, ModelError>;

/// Network topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub lstm_units: Vec<usize>,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Three LSTM layers of 256, 128 and 64 units with dropout 0.4.
    pub fn new(input_dim: usize) -> Self {
        Self {
            input_dim,
            lstm_units: vec![256, 128, 64],
            dropout_rate: 0.4,
        }
    }

    /// Two small layers (16, 8) for desk-scale runs.
    pub fn desk(input_dim: usize) -> Self {
        Self {
            input_dim,
            lstm_units: vec![16, 8],
            dropout_rate: 0.4,
        }
    }

    pub fn validate(&self) -> ModelResult<()> {
        if self.input_dim == 0 {
            return Err(ModelError::Config("input_dim must be positive".into()));
        }
        if self.lstm_units.is_empty() || self.lstm_units.contains(&0) {
            return Err(ModelError::Config(
                "need at least one LSTM layer of positive width".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config("dropout_rate must be in [0, 1)".into()));
        }
        Ok(())
    }

    pub fn last_units(&self) -> usize {
        *self
            .lstm_units
            .last()
            .expect("validated: at least one layer")
    }
}

/// Optimisation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub rmsprop_decay: f64,
    pub rmsprop_epsilon: f64,
    pub weights: MtlWeights,
    pub rng_seed: u64,
    /// Heads whose parameters are held fixed (arousal, valence, liking).
    #[serde(default)]
    pub frozen_heads: [bool; 3],
}

impl Default for TrainConfig {
    /// Learning rate 0.0005, batch 34, 50 epochs.
    fn default() -> Self {
        Self {
            learning_rate: 0.0005,
            batch_size: 34,
            epochs: 50,
            rmsprop_decay: 0.9,
            rmsprop_epsilon: 1e-7,
            weights: MtlWeights::default(),
            rng_seed: 0,
            frozen_heads: [false; 3],
        }
    }
}

impl TrainConfig {
    /// Settings that make 30 epochs meaningful on corpora of a few dozen
    /// short sequences.
    pub fn desk() -> Self {
        Self {
            learning_rate: 0.01,
            batch_size: 4,
            epochs: 30,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> ModelResult<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(ModelError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Config("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.rmsprop_decay) {
            return Err(ModelError::Config("rmsprop_decay must be in [0, 1)".into()));
        }
        if !(self.rmsprop_epsilon.is_finite() && self.rmsprop_epsilon > 0.0) {
            return Err(ModelError::Config(
                "rmsprop_epsilon must be positive".into(),
            ));
        }
        MtlWeights::new(self.weights.alpha, self.weights.beta, self.weights.gamma)?;
        Ok(())
    }
}
