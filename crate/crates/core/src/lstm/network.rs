use super::cell::step_into;
use super::params::LstmParameters;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, pairwise_sum, Execution};
use crate::matrix::Matrix;
use crate::numeric::compensated_sum;

/// Per-step cache of one layer over a whole sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub steps: usize,
    pub input_size: usize,
    pub hidden_size: usize,
    /// `steps x input_size` layer inputs.
    pub inputs: Vec<f64>,
    /// `(steps + 1) x H`; row 0 is the zero initial state.
    pub hidden: Vec<f64>,
    /// `(steps + 1) x H`; row 0 is the zero initial state.
    pub cell: Vec<f64>,
    /// `steps x 4H` activated gates.
    pub gates: Vec<f64>,
    /// `steps x H`.
    pub tanh_cell: Vec<f64>,
}

impl LayerTrace {
    pub fn hidden_at(&self, t: usize) -> &[f64] {
        &self.hidden[(t + 1) * self.hidden_size..(t + 2) * self.hidden_size]
    }

    fn hidden_sequence(&self) -> &[f64] {
        &self.hidden[self.hidden_size..]
    }
}

/// Everything needed to backpropagate one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub layers: Vec<LayerTrace>,
    pub prediction: f64,
}

impl Trace {
    /// Final hidden state of the top layer.
    pub fn final_hidden(&self) -> &[f64] {
        let top = self.layers.last().expect("at least one layer");
        top.hidden_at(top.steps - 1)
    }
}

/// Run the stacked network over `sequence` (`steps x input_size`, row
/// major) starting from zero state.
pub fn forward(params: &LstmParameters, sequence: &[f64]) -> Result<(f64, Trace)> {
    let input_size = params.input_size();
    if sequence.is_empty() || sequence.len() % input_size != 0 {
        return Err(Error::shape(format!(
            "sequence of {} values is not a whole number of {input_size}-wide steps",
            sequence.len()
        )));
    }
    let steps = sequence.len() / input_size;
    let mut layers: Vec<LayerTrace> = Vec::with_capacity(params.num_layers());
    for k in 0..params.num_layers() {
        let view = params.layer(k);
        let h = view.shape.hidden_size;
        let inputs = match layers.last() {
            None => sequence.to_vec(),
            Some(below) => below.hidden_sequence().to_vec(),
        };
        let mut lt = LayerTrace {
            steps,
            input_size: view.shape.input_size,
            hidden_size: h,
            inputs,
            hidden: vec![0.0; (steps + 1) * h],
            cell: vec![0.0; (steps + 1) * h],
            gates: vec![0.0; steps * 4 * h],
            tanh_cell: vec![0.0; steps * h],
        };
        let w_in = lt.input_size;
        for t in 0..steps {
            let (h_done, h_rest) = lt.hidden.split_at_mut((t + 1) * h);
            let (c_done, c_rest) = lt.cell.split_at_mut((t + 1) * h);
            step_into(
                view,
                &lt.inputs[t * w_in..(t + 1) * w_in],
                &h_done[t * h..],
                &c_done[t * h..],
                &mut lt.gates[t * 4 * h..(t + 1) * 4 * h],
                &mut c_rest[..h],
                &mut lt.tanh_cell[t * h..(t + 1) * h],
                &mut h_rest[..h],
            );
        }
        if lt.cell.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm cell state"));
        }
        layers.push(lt);
    }
    let top = layers.last().expect("at least one layer");
    let h_final = top.hidden_at(steps - 1);
    let prediction = params.readout_bias()
        + params
            .readout_weights()
            .iter()
            .zip(h_final)
            .map(|(w, h)| w * h)
            .sum::<f64>();
    if !prediction.is_finite() {
        return Err(Error::NonFinite("lstm prediction"));
    }
    Ok((prediction, Trace { layers, prediction }))
}

pub fn predict(params: &LstmParameters, sequence: &[f64]) -> Result<f64> {
    forward(params, sequence).map(|(p, _)| p)
}

/// Mean squared error `(1/N) Σ (ŷ - y)²`.
pub fn loss_mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::shape(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::config("mse of an empty batch"));
    }
    let sse = compensated_sum(predictions.iter().zip(targets).map(|(p, y)| (p - y) * (p - y)));
    Ok(sse / predictions.len() as f64)
}

/// Add `dL/dθ` for one sample into `grad`, given `dL/dŷ`.
fn accumulate(params: &LstmParameters, trace: &Trace, d_pred: f64, grad: &mut LstmParameters) {
    let top = trace.layers.last().expect("at least one layer");
    let steps = top.steps;
    let h = top.hidden_size;

    for (g, hv) in grad.readout_weights_mut().iter_mut().zip(trace.final_hidden()) {
        *g += d_pred * hv;
    }
    let b = grad.readout_bias() + d_pred;
    grad.set_readout_bias(b);

    // gradient arriving at each h_t of the current layer from above
    let mut dh_ext = vec![0.0; steps * h];
    for (d, w) in dh_ext[(steps - 1) * h..].iter_mut().zip(params.readout_weights()) {
        *d = d_pred * w;
    }

    let mut dz = vec![0.0; 4 * h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    for k in (0..params.num_layers()).rev() {
        let lt = &trace.layers[k];
        let view = params.layer(k);
        let w_in = lt.input_size;
        let width = view.shape.concat_width();
        let (gw, gb) = grad.layer_mut(k);
        let mut dx_all = if k > 0 { vec![0.0; steps * w_in] } else { Vec::new() };
        dh_next.fill(0.0);
        dc_next.fill(0.0);

        for t in (0..steps).rev() {
            let gates = &lt.gates[t * 4 * h..(t + 1) * 4 * h];
            let (f, rest) = gates.split_at(h);
            let (i, rest) = rest.split_at(h);
            let (g, o) = rest.split_at(h);
            let c_prev = &lt.cell[t * h..(t + 1) * h];
            let h_prev = &lt.hidden[t * h..(t + 1) * h];
            let tc = &lt.tanh_cell[t * h..(t + 1) * h];
            let x = &lt.inputs[t * w_in..(t + 1) * w_in];

            for j in 0..h {
                let dh = dh_ext[t * h + j] + dh_next[j];
                let d_o = dh * tc[j];
                let dc = dc_next[j] + dh * o[j] * (1.0 - tc[j] * tc[j]);
                dz[j] = dc * c_prev[j] * f[j] * (1.0 - f[j]);
                dz[h + j] = dc * g[j] * i[j] * (1.0 - i[j]);
                dz[2 * h + j] = dc * i[j] * (1.0 - g[j] * g[j]);
                dz[3 * h + j] = d_o * o[j] * (1.0 - o[j]);
                dc_next[j] = dc * f[j];
            }

            dh_next.fill(0.0);
            let dx = if k > 0 {
                Some(&mut dx_all[t * w_in..(t + 1) * w_in])
            } else {
                None
            };
            let mut dx = dx;
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[r] += d;
                let wrow = &view.weights[r * width..(r + 1) * width];
                let grow = &mut gw[r * width..(r + 1) * width];
                for j in 0..h {
                    grow[j] += d * h_prev[j];
                    dh_next[j] += d * wrow[j];
                }
                for j in 0..w_in {
                    grow[h + j] += d * x[j];
                }
                if let Some(dx) = dx.as_deref_mut() {
                    for j in 0..w_in {
                        dx[j] += d * wrow[h + j];
                    }
                }
            }
        }
        if k > 0 {
            dh_ext = dx_all;
        }
    }
}

/// Exact gradient of the batch-mean MSE from precomputed traces.
pub fn backward(
    params: &LstmParameters,
    traces: &[Trace],
    targets: &[f64],
) -> Result<LstmParameters> {
    if traces.len() != targets.len() || traces.is_empty() {
        return Err(Error::shape(format!(
            "{} traces for {} targets",
            traces.len(),
            targets.len()
        )));
    }
    let n = traces.len() as f64;
    let mut grad = LstmParameters::zeros_like(params);
    for (trace, &y) in traces.iter().zip(targets) {
        accumulate(params, trace, 2.0 * (trace.prediction - y) / n, &mut grad);
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("lstm gradient"));
    }
    Ok(grad)
}

/// Samples per work item in the batched gradient. Fixed so the reduction
/// tree, and therefore the floating-point result, does not depend on the
/// thread count.
const GRADIENT_CHUNK: usize = 16;

/// Batch-mean MSE and its gradient over the rows of `inputs`.
pub fn batch_loss_and_gradient(
    params: &LstmParameters,
    inputs: &Matrix,
    targets: &[f64],
    exec: Execution,
) -> Result<(f64, LstmParameters)> {
    let n = inputs.rows();
    if n == 0 || targets.len() != n {
        return Err(Error::shape(format!("{n} windows for {} targets", targets.len())));
    }
    let scale = 2.0 / n as f64;
    let chunks = n.div_ceil(GRADIENT_CHUNK);
    let parts = map_indexed(exec, chunks, |c| -> Result<Vec<f64>> {
        let mut grad = LstmParameters::zeros_like(params);
        let mut sse = 0.0;
        for s in c * GRADIENT_CHUNK..((c + 1) * GRADIENT_CHUNK).min(n) {
            let (pred, trace) = forward(params, inputs.row(s))?;
            let r = pred - targets[s];
            sse += r * r;
            accumulate(params, &trace, scale * r, &mut grad);
        }
        let mut flat = grad.as_slice().to_vec();
        flat.push(sse);
        Ok(flat)
    });
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let mut total = pairwise_sum(parts).expect("non-empty batch");
    let sse = total.pop().expect("loss slot");
    let grad = LstmParameters::from_values(
        params.input_size(),
        params.hidden_size(),
        params.num_layers(),
        total,
    )?;
    if !grad.is_finite() {
        return Err(Error::NonFinite("lstm gradient"));
    }
    Ok((sse / n as f64, grad))
}
