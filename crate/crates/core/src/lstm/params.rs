use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::LstmConfig;
use crate::error::{Error, Result};

/// Gate order inside each layer's stacked weight and bias blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];

    pub fn suffix(self) -> &'static str {
        match self {
            Gate::Forget => "f",
            Gate::Input => "i",
            Gate::Candidate => "c",
            Gate::Output => "o",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub input_size: usize,
    pub hidden_size: usize,
}

impl LayerShape {
    /// Width of the `[h_{t-1}, x_t]` concatenation.
    pub fn concat_width(&self) -> usize {
        self.hidden_size + self.input_size
    }

    fn weight_len(&self) -> usize {
        4 * self.hidden_size * self.concat_width()
    }

    fn len(&self) -> usize {
        self.weight_len() + 4 * self.hidden_size
    }
}

/// Borrowed parameters of one layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerView<'a> {
    pub shape: LayerShape,
    /// `4H x (H + in)` row-major, gate blocks in [`Gate`] order.
    pub weights: &'a [f64],
    /// `4H`, gate blocks in [`Gate`] order.
    pub biases: &'a [f64],
}

impl<'a> LayerView<'a> {
    pub fn new(shape: LayerShape, weights: &'a [f64], biases: &'a [f64]) -> Result<Self> {
        if weights.len() != shape.weight_len() || biases.len() != 4 * shape.hidden_size {
            return Err(Error::shape("layer weights do not match layer shape"));
        }
        Ok(Self {
            shape,
            weights,
            biases,
        })
    }
}

/// A named tensor slice of the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorRef {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

/// All network parameters stored in one flat vector.
///
/// Layout: for each layer its stacked gate weights then gate biases, then the
/// readout weights (`H`) and the readout bias. Gradients use the same type.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmParameters {
    layers: Vec<LayerShape>,
    values: Vec<f64>,
}

impl LstmParameters {
    pub fn zeros(input_size: usize, hidden_size: usize, num_layers: usize) -> Self {
        let layers: Vec<LayerShape> = (0..num_layers)
            .map(|k| LayerShape {
                input_size: if k == 0 { input_size } else { hidden_size },
                hidden_size,
            })
            .collect();
        let len = layers.iter().map(LayerShape::len).sum::<usize>() + hidden_size + 1;
        Self {
            layers,
            values: vec![0.0; len],
        }
    }

    pub fn zeros_like(other: &Self) -> Self {
        Self {
            layers: other.layers.clone(),
            values: vec![0.0; other.values.len()],
        }
    }

    pub fn for_config(config: &LstmConfig) -> Self {
        Self::zeros(config.input_size, config.hidden_size, config.num_layers)
    }

    /// Seeded initialization: weights uniform in `±1/sqrt(fan_in)`, biases
    /// zero except the forget gate at 1.
    pub fn init(config: &LstmConfig) -> Self {
        let mut params = Self::for_config(config);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let h = config.hidden_size;
        for k in 0..params.layers.len() {
            let shape = params.layers[k];
            let bound = 1.0 / (shape.concat_width() as f64).sqrt();
            let (w, b) = params.layer_mut(k);
            for v in w.iter_mut() {
                *v = rng.random_range(-bound..=bound);
            }
            b.fill(0.0);
            b[..h].fill(1.0);
        }
        let bound = 1.0 / (h as f64).sqrt();
        for v in params.readout_weights_mut() {
            *v = rng.random_range(-bound..=bound);
        }
        params
    }

    pub fn from_values(
        input_size: usize,
        hidden_size: usize,
        num_layers: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(input_size, hidden_size, num_layers);
        if values.len() != p.values.len() {
            return Err(Error::shape(format!(
                "expected {} parameters, got {}",
                p.values.len(),
                values.len()
            )));
        }
        p.values = values;
        Ok(p)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.layers[0].hidden_size
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size
    }

    pub fn layer_shapes(&self) -> &[LayerShape] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn layer_offset(&self, k: usize) -> usize {
        self.layers[..k].iter().map(LayerShape::len).sum()
    }

    fn readout_offset(&self) -> usize {
        self.layer_offset(self.layers.len())
    }

    pub fn layer(&self, k: usize) -> LayerView<'_> {
        let shape = self.layers[k];
        let start = self.layer_offset(k);
        let mid = start + shape.weight_len();
        LayerView {
            shape,
            weights: &self.values[start..mid],
            biases: &self.values[mid..mid + 4 * shape.hidden_size],
        }
    }

    pub fn layer_mut(&mut self, k: usize) -> (&mut [f64], &mut [f64]) {
        let shape = self.layers[k];
        let start = self.layer_offset(k);
        let mid = start + shape.weight_len();
        let (w, rest) = self.values[start..].split_at_mut(mid - start);
        (w, &mut rest[..4 * shape.hidden_size])
    }

    pub fn readout_weights(&self) -> &[f64] {
        let o = self.readout_offset();
        &self.values[o..o + self.hidden_size()]
    }

    pub fn readout_weights_mut(&mut self) -> &mut [f64] {
        let o = self.readout_offset();
        let h = self.hidden_size();
        &mut self.values[o..o + h]
    }

    pub fn readout_bias(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    pub fn set_readout_bias(&mut self, b: f64) {
        let n = self.values.len();
        self.values[n - 1] = b;
    }

    /// Bias of one gate in one layer.
    pub fn gate_bias_mut(&mut self, layer: usize, gate: Gate) -> &mut [f64] {
        let h = self.layers[layer].hidden_size;
        let (_, b) = self.layer_mut(layer);
        &mut b[gate as usize * h..(gate as usize + 1) * h]
    }

    /// Named tensor views in layout order, e.g. `layer0.w_f`, `out.b`.
    pub fn tensors(&self) -> Vec<TensorRef> {
        let mut out = Vec::new();
        let mut offset = 0;
        for (k, shape) in self.layers.iter().enumerate() {
            let h = shape.hidden_size;
            let block = h * shape.concat_width();
            for g in Gate::ALL {
                out.push(TensorRef {
                    name: format!("layer{k}.w_{}", g.suffix()),
                    shape: vec![h, shape.concat_width()],
                    offset: offset + g as usize * block,
                    len: block,
                });
            }
            offset += 4 * block;
            for g in Gate::ALL {
                out.push(TensorRef {
                    name: format!("layer{k}.b_{}", g.suffix()),
                    shape: vec![h],
                    offset: offset + g as usize * h,
                    len: h,
                });
            }
            offset += 4 * h;
        }
        let h = self.hidden_size();
        out.push(TensorRef {
            name: "out.w".into(),
            shape: vec![h],
            offset,
            len: h,
        });
        out.push(TensorRef {
            name: "out.b".into(),
            shape: vec![],
            offset: offset + h,
            len: 1,
        });
        out
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
