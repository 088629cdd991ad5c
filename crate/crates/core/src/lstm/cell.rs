use super::params::LayerView;
use crate::error::{Error, Result};
use crate::numeric::sigmoid;

/// Hidden and cell vectors of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct CellState {
    pub hidden: Vec<f64>,
    pub cell: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden_size: usize) -> Self {
        Self {
            hidden: vec![0.0; hidden_size],
            cell: vec![0.0; hidden_size],
        }
    }
}

/// Post-activation gate values of one step, kept for backpropagation.
#[derive(Clone, Debug, PartialEq)]
pub struct GateCache {
    pub forget: Vec<f64>,
    pub input: Vec<f64>,
    pub candidate: Vec<f64>,
    pub output: Vec<f64>,
    pub tanh_cell: Vec<f64>,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One step written into caller-provided buffers.
///
/// `gates` receives the activated `[f, i, c̃, o]` blocks (length `4H`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn step_into(
    layer: LayerView<'_>,
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    gates: &mut [f64],
    cell: &mut [f64],
    tanh_cell: &mut [f64],
    hidden: &mut [f64],
) {
    let h = layer.shape.hidden_size;
    let width = layer.shape.concat_width();
    for (r, (g, b)) in gates.iter_mut().zip(layer.biases).enumerate() {
        let row = &layer.weights[r * width..(r + 1) * width];
        let z = b + dot(&row[..h], h_prev) + dot(&row[h..], x);
        *g = if (2 * h..3 * h).contains(&r) {
            z.tanh()
        } else {
            sigmoid(z)
        };
    }
    let (f, rest) = gates.split_at(h);
    let (i, rest) = rest.split_at(h);
    let (g, o) = rest.split_at(h);
    for j in 0..h {
        cell[j] = f[j] * c_prev[j] + i[j] * g[j];
        tanh_cell[j] = cell[j].tanh();
        hidden[j] = o[j] * tanh_cell[j];
    }
}

/// Advance one layer by one time step.
pub fn cell_step(
    layer: LayerView<'_>,
    x: &[f64],
    prev: &CellState,
) -> Result<(CellState, GateCache)> {
    let h = layer.shape.hidden_size;
    if x.len() != layer.shape.input_size || prev.hidden.len() != h || prev.cell.len() != h {
        return Err(Error::shape(format!(
            "cell step expects input {} and state {h}, got input {} and state {}/{}",
            layer.shape.input_size,
            x.len(),
            prev.hidden.len(),
            prev.cell.len()
        )));
    }
    if x.iter().chain(&prev.hidden).chain(&prev.cell).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm cell input"));
    }
    let mut gates = vec![0.0; 4 * h];
    let mut next = CellState::zeros(h);
    let mut tanh_cell = vec![0.0; h];
    step_into(
        layer,
        x,
        &prev.hidden,
        &prev.cell,
        &mut gates,
        &mut next.cell,
        &mut tanh_cell,
        &mut next.hidden,
    );
    if gates.iter().chain(&next.cell).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("lstm cell state"));
    }
    let cache = GateCache {
        forget: gates[..h].to_vec(),
        input: gates[h..2 * h].to_vec(),
        candidate: gates[2 * h..3 * h].to_vec(),
        output: gates[3 * h..].to_vec(),
        tanh_cell,
    };
    Ok((next, cache))
}
