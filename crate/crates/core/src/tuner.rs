//! Exhaustive grid search over LSTM and forest hyperparameters on a single
//! ordered split.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::dataio::TimeSeries;
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::forest::{fit_forest_with, ForestConfig, MaxFeatures, TreeDepth};
use crate::hybrid::{prepare, HybridConfig};
use crate::lstm::{self, LstmConfig};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalReport};
use crate::numeric::mix64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Objective {
    Pearson,
    R2,
}

impl Objective {
    pub fn score(self, report: &EvalReport) -> Option<f64> {
        match self {
            Objective::Pearson => report.pearson,
            Objective::R2 => report.r2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmGrid {
    pub hidden_size: Vec<usize>,
    pub num_layers: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub sequence_len: Vec<usize>,
}

impl Default for LstmGrid {
    fn default() -> Self {
        Self {
            hidden_size: vec![32, 50],
            num_layers: vec![1, 2],
            learning_rate: vec![0.001, 0.005],
            sequence_len: vec![20, 30],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RfGrid {
    pub n_estimators: Vec<usize>,
    pub max_depth: Vec<TreeDepth>,
    pub min_samples_split: Vec<usize>,
}

impl Default for RfGrid {
    fn default() -> Self {
        Self {
            n_estimators: vec![50, 100],
            max_depth: vec![TreeDepth::Unbounded, TreeDepth::Limited(10)],
            min_samples_split: vec![2, 5],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub lstm: LstmGrid,
    pub rf: RfGrid,
    pub lstm_objective: Objective,
    pub rf_objective: Objective,
    /// Training epochs for every LSTM combination.
    pub epochs: usize,
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            lstm: LstmGrid::default(),
            rf: RfGrid::default(),
            lstm_objective: Objective::Pearson,
            rf_objective: Objective::R2,
            epochs: 100,
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

impl GridSpec {
    /// The value sets of the published protocol: 16 LSTM and 8 forest
    /// combinations.
    pub fn paper() -> Self {
        Self::default()
    }

    pub fn validate(&self) -> Result<()> {
        let sets = [
            ("lstm.hidden_size", self.lstm.hidden_size.len()),
            ("lstm.num_layers", self.lstm.num_layers.len()),
            ("lstm.learning_rate", self.lstm.learning_rate.len()),
            ("lstm.sequence_len", self.lstm.sequence_len.len()),
            ("rf.n_estimators", self.rf.n_estimators.len()),
            ("rf.max_depth", self.rf.max_depth.len()),
            ("rf.min_samples_split", self.rf.min_samples_split.len()),
        ];
        if let Some((name, _)) = sets.iter().find(|(_, n)| *n == 0) {
            return Err(Error::config(format!("grid value set `{name}` is empty")));
        }
        if self.epochs == 0 {
            return Err(Error::config("grid epochs must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::config("train_fraction must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn lstm_combinations(&self) -> Vec<LstmCombo> {
        let g = &self.lstm;
        let mut out = Vec::new();
        for &hidden_size in &g.hidden_size {
            for &num_layers in &g.num_layers {
                for &learning_rate in &g.learning_rate {
                    for &sequence_len in &g.sequence_len {
                        out.push(LstmCombo {
                            hidden_size,
                            num_layers,
                            learning_rate,
                            sequence_len,
                        });
                    }
                }
            }
        }
        out
    }

    pub fn rf_combinations(&self) -> Vec<RfCombo> {
        let g = &self.rf;
        let mut out = Vec::new();
        for &n_estimators in &g.n_estimators {
            for &max_depth in &g.max_depth {
                for &min_samples_split in &g.min_samples_split {
                    out.push(RfCombo {
                        n_estimators,
                        max_depth,
                        min_samples_split,
                    });
                }
            }
        }
        out
    }
}

/// Fold parameter values into a sub-seed. It depends on the values, not on
/// the combination's position, so growing a grid leaves existing rows alone.
pub fn sub_seed(master: u64, values: &[u64]) -> u64 {
    values.iter().fold(mix64(master), |acc, &v| mix64(acc ^ v))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCombo {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub learning_rate: f64,
    pub sequence_len: usize,
}

impl LstmCombo {
    pub fn seed(&self, master: u64) -> u64 {
        sub_seed(
            master,
            &[
                self.hidden_size as u64,
                self.num_layers as u64,
                self.learning_rate.to_bits(),
                self.sequence_len as u64,
            ],
        )
    }

    fn cmp_params(&self, other: &Self) -> Ordering {
        (self.hidden_size, self.num_layers)
            .cmp(&(other.hidden_size, other.num_layers))
            .then(self.learning_rate.total_cmp(&other.learning_rate))
            .then(self.sequence_len.cmp(&other.sequence_len))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RfCombo {
    pub n_estimators: usize,
    pub max_depth: TreeDepth,
    pub min_samples_split: usize,
}

impl RfCombo {
    pub fn seed(&self, master: u64) -> u64 {
        let depth = match self.max_depth {
            TreeDepth::Unbounded => u64::MAX,
            TreeDepth::Limited(d) => d as u64,
        };
        sub_seed(master, &[self.n_estimators as u64, depth, self.min_samples_split as u64])
    }

    fn cmp_params(&self, other: &Self) -> Ordering {
        let key = |c: &RfCombo| {
            let depth = match c.max_depth {
                TreeDepth::Limited(d) => d,
                TreeDepth::Unbounded => usize::MAX,
            };
            (c.n_estimators, depth, c.min_samples_split)
        };
        key(self).cmp(&key(other))
    }

    pub fn forest_config(&self, master: u64) -> ForestConfig {
        ForestConfig {
            n_estimators: self.n_estimators,
            max_depth: self.max_depth,
            min_samples_split: self.min_samples_split,
            max_features: MaxFeatures::Auto,
            bootstrap: true,
            seed: self.seed(master),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Status {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridRow<C> {
    pub combo: C,
    pub seed: u64,
    /// Objective on the test partition; `None` when failed or undefined.
    pub score: Option<f64>,
    pub train: Option<EvalReport>,
    pub test: Option<EvalReport>,
    pub status: Status,
}

/// Descending score; failed or undefined scores last; parameter order on ties.
fn rank<C>(rows: &mut [GridRow<C>], cmp_params: impl Fn(&C, &C) -> Ordering) {
    rows.sort_by(|a, b| {
        let by_score = match (a.score, b.score) {
            (Some(x), Some(y)) => y.total_cmp(&x),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_score.then_with(|| cmp_params(&a.combo, &b.combo))
    });
}

fn row_from<C>(combo: C, seed: u64, objective: Objective, result: Result<(EvalReport, EvalReport)>) -> GridRow<C> {
    match result {
        Ok((train, test)) => GridRow {
            combo,
            seed,
            score: objective.score(&test),
            train: Some(train),
            test: Some(test),
            status: Status::Ok,
        },
        Err(e) => GridRow {
            combo,
            seed,
            score: None,
            train: None,
            test: None,
            status: Status::Failed(e.to_string()),
        },
    }
}

/// LSTM settings for one combination under `spec`.
pub fn lstm_config_for(combo: &LstmCombo, spec: &GridSpec) -> LstmConfig {
    LstmConfig {
        hidden_size: combo.hidden_size,
        num_layers: combo.num_layers,
        input_size: 1,
        learning_rate: combo.learning_rate,
        epochs: spec.epochs,
        seed: combo.seed(spec.seed),
    }
}

/// Fit and evaluate one LSTM combination, returning (train, test) metrics
/// in original units. This is exactly what the grid runs for each row.
pub fn evaluate_lstm_combo(
    series: &TimeSeries,
    combo: &LstmCombo,
    spec: &GridSpec,
    exec: Execution,
) -> Result<(EvalReport, EvalReport)> {
    let config = HybridConfig {
        lstm: lstm_config_for(combo, spec),
        window_len: combo.sequence_len,
        train_fraction: spec.train_fraction,
        ..HybridConfig::default()
    };
    let data = prepare(series, &config)?;
    let outcome = lstm::train(&config.lstm, &data.train, exec)?;
    let norm = data.normalizer.target;
    let run = |ds: &crate::dataio::WindowedDataset| -> Result<EvalReport> {
        let pred: Vec<f64> = map_indexed(exec, ds.len(), |i| lstm::predict(&outcome.params, ds.window(i)))
            .into_iter()
            .map(|r| r.map(|z| norm.denormalize(z)))
            .collect::<Result<_>>()?;
        evaluate(ds.labels_orig(), &pred)
    };
    Ok((run(&data.train)?, run(&data.test)?))
}

pub fn grid_search_lstm(series: &TimeSeries, spec: &GridSpec, exec: Execution) -> Result<Vec<GridRow<LstmCombo>>> {
    spec.validate()?;
    let longest = spec.lstm.sequence_len.iter().copied().max().unwrap_or(0);
    if series.len() <= longest {
        return Err(Error::config(format!(
            "series of length {} is too short for sequence_len {longest}",
            series.len()
        )));
    }
    let combos = spec.lstm_combinations();
    let mut rows = map_indexed(exec, combos.len(), |i| {
        let c = combos[i];
        row_from(c, c.seed(spec.seed), spec.lstm_objective, evaluate_lstm_combo(series, &c, spec, exec))
    });
    rank(&mut rows, LstmCombo::cmp_params);
    Ok(rows)
}

/// Train and test features with their original-scale labels.
#[derive(Clone, Copy, Debug)]
pub struct RfData<'a> {
    pub train_x: &'a Matrix,
    pub train_y: &'a [f64],
    pub test_x: &'a Matrix,
    pub test_y: &'a [f64],
}

pub fn evaluate_rf_combo(
    data: RfData<'_>,
    combo: &RfCombo,
    spec: &GridSpec,
    exec: Execution,
) -> Result<(EvalReport, EvalReport)> {
    let model = fit_forest_with(data.train_x, data.train_y, &combo.forest_config(spec.seed), exec)?;
    let train = evaluate(data.train_y, &model.predict_batch(data.train_x)?)?;
    let test = evaluate(data.test_y, &model.predict_batch(data.test_x)?)?;
    Ok((train, test))
}

pub fn grid_search_rf(data: RfData<'_>, spec: &GridSpec, exec: Execution) -> Result<Vec<GridRow<RfCombo>>> {
    spec.validate()?;
    let combos = spec.rf_combinations();
    let mut rows = map_indexed(exec, combos.len(), |i| {
        let c = combos[i];
        row_from(c, c.seed(spec.seed), spec.rf_objective, evaluate_rf_combo(data, &c, spec, exec))
    });
    rank(&mut rows, RfCombo::cmp_params);
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x}"))
}

fn status_cells(status: &Status) -> [String; 2] {
    match status {
        Status::Ok => ["OK".into(), String::new()],
        Status::Failed(msg) => ["FAILED".into(), msg.clone()],
    }
}

pub fn write_lstm_csv<W: std::io::Write>(rows: &[GridRow<LstmCombo>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank", "hidden_size", "num_layers", "learning_rate", "sequence_len", "seed", "score", "test_r2", "test_pearson",
        "status", "message",
    ])?;
    for (i, r) in rows.iter().enumerate() {
        let [status, msg] = status_cells(&r.status);
        w.write_record([
            (i + 1).to_string(),
            r.combo.hidden_size.to_string(),
            r.combo.num_layers.to_string(),
            format!("{}", r.combo.learning_rate),
            r.combo.sequence_len.to_string(),
            r.seed.to_string(),
            opt(r.score),
            opt(r.test.and_then(|t| t.r2)),
            opt(r.test.and_then(|t| t.pearson)),
            status,
            msg,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<grid>", e))?;
    Ok(())
}

pub fn write_rf_csv<W: std::io::Write>(rows: &[GridRow<RfCombo>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "rank", "n_estimators", "max_depth", "min_samples_split", "seed", "score", "test_r2", "test_pearson", "status",
        "message",
    ])?;
    for (i, r) in rows.iter().enumerate() {
        let [status, msg] = status_cells(&r.status);
        let depth = match r.combo.max_depth {
            TreeDepth::Unbounded => "none".to_string(),
            TreeDepth::Limited(d) => d.to_string(),
        };
        w.write_record([
            (i + 1).to_string(),
            r.combo.n_estimators.to_string(),
            depth,
            r.combo.min_samples_split.to_string(),
            r.seed.to_string(),
            opt(r.score),
            opt(r.test.and_then(|t| t.r2)),
            opt(r.test.and_then(|t| t.pearson)),
            status,
            msg,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<grid>", e))?;
    Ok(())
}
