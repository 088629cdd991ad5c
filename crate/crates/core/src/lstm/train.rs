use super::network::batch_loss_and_gradient;
use super::params::LstmParameters;
use super::LstmConfig;
use crate::dataio::WindowedDataset;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::matrix::Matrix;

/// Global gradient norm above which an update is rescaled.
pub const GRADIENT_CLIP_NORM: f64 = 5.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub params: LstmParameters,
    /// Batch loss evaluated before each epoch's update.
    pub loss_history: Vec<f64>,
    /// Number of updates whose gradient was clipped.
    pub clip_events: usize,
}

/// Full-batch gradient descent on `(window, labels_norm)` pairs.
pub fn train(config: &LstmConfig, train_set: &WindowedDataset, exec: Execution) -> Result<TrainOutcome> {
    if config.input_size != 1 {
        return Err(Error::config("windowed datasets are univariate; input_size must be 1"));
    }
    train_on(config, train_set.inputs(), train_set.labels_norm(), exec)
}

/// Train on raw rows: each row of `inputs` is one flattened sequence.
pub fn train_on(
    config: &LstmConfig,
    inputs: &Matrix,
    targets: &[f64],
    exec: Execution,
) -> Result<TrainOutcome> {
    config.validate()?;
    if inputs.rows() == 0 {
        return Err(Error::config("cannot train on an empty dataset"));
    }
    let mut params = LstmParameters::init(config);
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut clip_events = 0;
    for epoch in 0..config.epochs {
        let (loss, mut grad) = match batch_loss_and_gradient(&params, inputs, targets, exec) {
            Ok(v) => v,
            Err(Error::NonFinite(_)) => return Err(Error::Divergence { epoch, loss: f64::NAN }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
        loss_history.push(loss);
        let norm = grad.norm();
        if norm > GRADIENT_CLIP_NORM {
            let s = GRADIENT_CLIP_NORM / norm;
            grad.as_mut_slice().iter_mut().for_each(|g| *g *= s);
            clip_events += 1;
        }
        let lr = config.learning_rate;
        for (p, g) in params.as_mut_slice().iter_mut().zip(grad.as_slice()) {
            *p -= lr * g;
        }
        if !params.is_finite() {
            return Err(Error::Divergence { epoch, loss });
        }
    }
    Ok(TrainOutcome {
        params,
        loss_history,
        clip_events,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{make_windows, Normalizer, TimeSeries};

    fn toy_windows() -> WindowedDataset {
        let s = TimeSeries::from_values(
            "sine",
            (0..80).map(|i| (i as f64 * 0.4).sin()).collect(),
        )
        .unwrap();
        make_windows(&s, 6, &Normalizer::fit(&s).unwrap()).unwrap()
    }

    #[test]
    fn one_epoch_is_one_update() {
        let cfg = LstmConfig {
            hidden_size: 4,
            epochs: 1,
            ..LstmConfig::default()
        };
        let w = toy_windows();
        let out = train(&cfg, &w, Execution::Sequential).unwrap();
        assert_eq!(out.loss_history.len(), 1);
        assert_ne!(out.params, LstmParameters::init(&cfg));
    }

    #[test]
    fn loss_falls_on_learnable_series() {
        let cfg = LstmConfig {
            hidden_size: 8,
            epochs: 150,
            learning_rate: 0.1,
            seed: 4,
            ..LstmConfig::default()
        };
        let out = train(&cfg, &toy_windows(), Execution::Sequential).unwrap();
        let first = out.loss_history[0];
        let last = *out.loss_history.last().unwrap();
        assert!(last < 0.5 * first, "first {first} last {last}");
    }

    #[test]
    fn constant_labels_are_learnable() {
        let cfg = LstmConfig {
            hidden_size: 3,
            epochs: 40,
            learning_rate: 0.05,
            ..LstmConfig::default()
        };
        let w = toy_windows();
        let labels = vec![0.3; w.len()];
        let out = train_on(&cfg, w.inputs(), &labels, Execution::Sequential).unwrap();
        assert!(out.loss_history.last().unwrap() < &out.loss_history[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let cfg = LstmConfig {
            hidden_size: 5,
            num_layers: 2,
            epochs: 5,
            seed: 77,
            ..LstmConfig::default()
        };
        let w = toy_windows();
        let a = train(&cfg, &w, Execution::Sequential).unwrap();
        let b = train(&cfg, &w, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.loss_history), bits(&b.loss_history));
    }

    #[test]
    fn huge_rate_diverges_with_epoch() {
        let cfg = LstmConfig {
            hidden_size: 2,
            epochs: 3,
            learning_rate: f64::MAX,
            ..LstmConfig::default()
        };
        let err = train(&cfg, &toy_windows(), Execution::Sequential).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0 | 1, .. }), "{err}");
    }

    #[test]
    fn invalid_configs() {
        let w = toy_windows();
        for cfg in [
            LstmConfig { hidden_size: 0, ..LstmConfig::default() },
            LstmConfig { epochs: 0, ..LstmConfig::default() },
            LstmConfig { learning_rate: 0.0, ..LstmConfig::default() },
        ] {
            assert!(matches!(train(&cfg, &w, Execution::Sequential), Err(Error::InvalidConfig(_))));
        }
    }
}
