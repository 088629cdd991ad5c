//! LSTM memory cell, stacked network, BPTT gradients and full-batch training.
//!
//! Gate pre-activations are `W_g · [h_{t-1}, x_t] + b_g` for
//! `g ∈ {forget, input, candidate, output}`, with the previous hidden state
//! first in the concatenation. The top layer's final hidden state feeds a
//! single affine readout producing a scalar prediction.

mod cell;
mod features;
mod network;
mod params;
mod train;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cell::{cell_step, CellState, GateCache};
pub use features::{extract_features, feature_names};
pub use network::{
    backward, batch_loss_and_gradient, forward, loss_mse, predict, LayerTrace, Trace,
};
pub use params::{Gate, LayerShape, LayerView, LstmParameters, TensorRef};
pub use train::{train, train_on, TrainOutcome, GRADIENT_CLIP_NORM};

/// Hyperparameters of one LSTM fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub input_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            num_layers: 1,
            input_size: 1,
            learning_rate: 0.005,
            epochs: 100,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.num_layers == 0 || self.input_size == 0 {
            return Err(Error::config(
                "lstm hidden_size, num_layers and input_size must be at least 1",
            ));
        }
        if self.epochs == 0 {
            return Err(Error::config("lstm epochs must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config(format!(
                "lstm learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
