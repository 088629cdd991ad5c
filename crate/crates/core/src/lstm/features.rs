use super::network::forward;
use super::params::LstmParameters;
use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::hybrid::{FeatureMode, FusionMode};
use crate::matrix::Matrix;

/// Column labels matching [`extract_features`] output.
pub fn feature_names(
    fusion: &FusionMode,
    window_len: usize,
    hidden_size: usize,
    exo_names: &[String],
) -> Vec<String> {
    let mut names: Vec<String> = match fusion.mode {
        FeatureMode::Pred => vec!["lstm_pred".into()],
        FeatureMode::Hidden => (0..hidden_size).map(|j| format!("h{j}")).collect(),
        FeatureMode::Splice => (0..window_len)
            .map(|j| format!("w{j}"))
            .chain((0..hidden_size).map(|j| format!("h{j}")))
            .collect(),
    };
    if fusion.include_exogenous {
        names.extend(exo_names.iter().cloned());
    }
    names
}

/// Turn each window into the forest's input row.
///
/// `Pred` yields the normalized LSTM prediction, `Hidden` the top layer's
/// final hidden state, `Splice` the window followed by that hidden state.
/// Exogenous values at the label's row are appended when requested.
pub fn extract_features(
    params: &LstmParameters,
    windows: &WindowedDataset,
    fusion: &FusionMode,
    exec: Execution,
) -> Result<Matrix> {
    if params.input_size() != 1 {
        return Err(Error::shape("feature extraction expects a univariate lstm"));
    }
    let exo = if fusion.include_exogenous {
        Some(windows.exo_rows().ok_or_else(|| {
            Error::config("include_exogenous requires exogenous columns in the dataset")
        })?)
    } else {
        None
    };
    let l = windows.window_len();
    let h = params.hidden_size();
    let base = fusion.mode.base_width(l, h);
    let width = base + exo.map_or(0, Matrix::cols);
    let rows = map_indexed(exec, windows.len(), |i| -> Result<Vec<f64>> {
        let window = windows.window(i);
        let (pred, trace) = forward(params, window)?;
        let mut row = Vec::with_capacity(width);
        match fusion.mode {
            FeatureMode::Pred => row.push(pred),
            FeatureMode::Hidden => row.extend_from_slice(trace.final_hidden()),
            FeatureMode::Splice => {
                row.extend_from_slice(window);
                row.extend_from_slice(trace.final_hidden());
            }
        }
        if let Some(exo) = exo {
            row.extend_from_slice(exo.row(i));
        }
        Ok(row)
    });
    let mut data = Vec::with_capacity(windows.len() * width);
    for row in rows {
        data.extend(row?);
    }
    Matrix::from_vec(windows.len(), width, data)
}
