//! The staged LSTM → random-forest hybrid.
//!
//! 1. z-score the series and cut sliding windows;
//! 2. split in temporal order;
//! 3. train the LSTM on normalized labels;
//! 4. extract features for every window with the fitted LSTM;
//! 5. train the forest on the training features against original-scale
//!    labels, so its predictions come out in original units.

use serde::{Deserialize, Serialize};

use crate::dataio::{format_timestamp, make_windows, train_size, Normalizer, TimeSeries, WindowedDataset};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::forest::{fit_forest_with, ForestConfig, ForestModel};
use crate::lstm::{self, extract_features, feature_names, LstmConfig, LstmParameters};
use crate::matrix::Matrix;
use crate::metrics::{evaluate, EvalReport, TableRow};

/// Which LSTM-derived representation feeds the forest.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// The scalar normalized LSTM prediction.
    #[default]
    Pred,
    /// The top layer's final hidden state.
    Hidden,
    /// The raw window followed by the final hidden state.
    Splice,
}

impl FeatureMode {
    pub fn base_width(self, window_len: usize, hidden_size: usize) -> usize {
        match self {
            FeatureMode::Pred => 1,
            FeatureMode::Hidden => hidden_size,
            FeatureMode::Splice => window_len + hidden_size,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionMode {
    pub mode: FeatureMode,
    /// Append the exogenous columns at each label's row.
    #[serde(default)]
    pub include_exogenous: bool,
}

impl FusionMode {
    pub fn pred() -> Self {
        Self::from(FeatureMode::Pred)
    }

    pub fn hidden() -> Self {
        Self::from(FeatureMode::Hidden)
    }

    pub fn splice() -> Self {
        Self::from(FeatureMode::Splice)
    }

    pub fn with_exogenous(mut self) -> Self {
        self.include_exogenous = true;
        self
    }

    pub fn feature_dim(&self, window_len: usize, hidden_size: usize, n_exo: usize) -> usize {
        self.mode.base_width(window_len, hidden_size) + if self.include_exogenous { n_exo } else { 0 }
    }
}

impl From<FeatureMode> for FusionMode {
    fn from(mode: FeatureMode) -> Self {
        Self {
            mode,
            include_exogenous: false,
        }
    }
}

/// Everything `fit_hybrid` needs besides the series.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridConfig {
    pub lstm: LstmConfig,
    pub forest: ForestConfig,
    pub fusion: FusionMode,
    pub window_len: usize,
    pub train_fraction: f64,
    /// Fit normalization on the training rows only instead of the full series.
    pub fit_norm_on_train: bool,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self {
            lstm: LstmConfig::default(),
            forest: ForestConfig::default(),
            fusion: FusionMode::default(),
            window_len: 30,
            train_fraction: 0.8,
            fit_norm_on_train: false,
        }
    }
}

/// A normalized, windowed and split series.
#[derive(Clone, Debug)]
pub struct PreparedData {
    pub normalizer: Normalizer,
    pub windows: WindowedDataset,
    pub train: WindowedDataset,
    pub test: WindowedDataset,
}

/// Normalize, window and split `series` as the hybrid does.
pub fn prepare(series: &TimeSeries, config: &HybridConfig) -> Result<PreparedData> {
    let l = config.window_len;
    if l == 0 {
        return Err(Error::config("window length must be at least 1"));
    }
    if series.len() <= l {
        return Err(Error::config(format!(
            "series of length {} is too short for window length {l}",
            series.len()
        )));
    }
    let n = series.len() - l;
    let k = train_size(n, config.train_fraction)?;
    let normalizer = if config.fit_norm_on_train {
        // rows 0..k+L hold every training window and label
        Normalizer::fit_prefix(series, k + l)?
    } else {
        Normalizer::fit(series)?
    };
    let windows = make_windows(series, l, &normalizer)?;
    let train = windows.slice(0..k);
    let test = windows.slice(k..n);
    Ok(PreparedData {
        normalizer,
        windows,
        train,
        test,
    })
}

/// A fitted hybrid: LSTM, forest, and the scaling needed to feed them.
#[derive(Clone, Debug, PartialEq)]
pub struct HybridModel {
    pub(crate) target_name: String,
    pub(crate) exo_names: Vec<String>,
    pub(crate) window_len: usize,
    pub(crate) fusion: FusionMode,
    pub(crate) normalizer: Normalizer,
    pub(crate) lstm_config: LstmConfig,
    pub(crate) lstm: LstmParameters,
    pub(crate) forest: ForestModel,
    pub(crate) feature_dim: usize,
}

impl HybridModel {
    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn exo_names(&self) -> &[String] {
        &self.exo_names
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn fusion(&self) -> FusionMode {
        self.fusion
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    pub fn lstm_config(&self) -> &LstmConfig {
        &self.lstm_config
    }

    pub fn lstm(&self) -> &LstmParameters {
        &self.lstm
    }

    pub fn forest(&self) -> &ForestModel {
        &self.forest
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    fn expected_dim(&self) -> usize {
        self.fusion
            .feature_dim(self.window_len, self.lstm.hidden_size(), self.exo_names.len())
    }

    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        target_name: String,
        exo_names: Vec<String>,
        window_len: usize,
        fusion: FusionMode,
        normalizer: Normalizer,
        lstm_config: LstmConfig,
        lstm: LstmParameters,
        forest: ForestModel,
    ) -> Result<Self> {
        let model = Self {
            feature_dim: forest.n_features(),
            target_name,
            exo_names,
            window_len,
            fusion,
            normalizer,
            lstm_config,
            lstm,
            forest,
        };
        if model.expected_dim() != model.feature_dim || model.normalizer.exogenous.len() != model.exo_names.len() {
            return Err(Error::Format(format!(
                "forest expects {} features but fusion mode yields {}",
                model.feature_dim,
                model.expected_dim()
            )));
        }
        Ok(model)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitReport {
    pub n_windows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub feature_dim: usize,
    pub loss_history: Vec<f64>,
    pub clip_events: usize,
}

fn check_fusion(fusion: &FusionMode, n_exo: usize) -> Result<()> {
    if fusion.include_exogenous && n_exo == 0 {
        return Err(Error::config("include_exogenous requires exogenous columns in the series"));
    }
    Ok(())
}

pub fn fit_hybrid(
    series: &TimeSeries,
    config: &HybridConfig,
    exec: Execution,
) -> Result<(HybridModel, FitReport)> {
    let prepared = prepare(series, config)?;
    fit_hybrid_prepared(series.name(), &prepared, config, exec)
}

/// Stages 3-5 on already prepared data.
pub fn fit_hybrid_prepared(
    target_name: &str,
    data: &PreparedData,
    config: &HybridConfig,
    exec: Execution,
) -> Result<(HybridModel, FitReport)> {
    check_fusion(&config.fusion, data.windows.exo_names().len())?;
    let outcome = lstm::train(&config.lstm, &data.train, exec)?;
    let train_features = extract_features(&outcome.params, &data.train, &config.fusion, exec)?;
    let names = feature_names(
        &config.fusion,
        config.window_len,
        config.lstm.hidden_size,
        data.windows.exo_names(),
    );
    let expected = config.fusion.feature_dim(
        config.window_len,
        config.lstm.hidden_size,
        data.windows.exo_names().len(),
    );
    assert_eq!(train_features.cols(), expected, "feature dimension invariant");
    let forest = fit_forest_with(&train_features, data.train.labels_orig(), &config.forest, exec)?
        .with_feature_names(names)?;

    let model = HybridModel {
        target_name: target_name.to_string(),
        exo_names: data.windows.exo_names().to_vec(),
        window_len: config.window_len,
        fusion: config.fusion,
        normalizer: data.normalizer.clone(),
        lstm_config: config.lstm.clone(),
        lstm: outcome.params,
        forest,
        feature_dim: expected,
    };
    let report = FitReport {
        n_windows: data.windows.len(),
        n_train: data.train.len(),
        n_test: data.test.len(),
        feature_dim: expected,
        loss_history: outcome.loss_history,
        clip_events: outcome.clip_events,
    };
    Ok((model, report))
}

/// Original-scale predictions for each window.
pub fn predict_hybrid(model: &HybridModel, windows: &WindowedDataset, exec: Execution) -> Result<Vec<f64>> {
    if windows.window_len() != model.window_len {
        return Err(Error::shape(format!(
            "model expects windows of length {}, got {}",
            model.window_len,
            windows.window_len()
        )));
    }
    if !windows.normalizer().same_as(&model.normalizer) {
        return Err(Error::config("windows were normalized with different parameters than the model"));
    }
    if model.fusion.include_exogenous && windows.exo_names() != model.exo_names.as_slice() {
        return Err(Error::shape("exogenous columns differ from those the model was fitted on"));
    }
    let features = extract_features(&model.lstm, windows, &model.fusion, exec)?;
    if features.cols() != model.feature_dim {
        return Err(Error::shape(format!(
            "extracted {} features, forest expects {}",
            features.cols(),
            model.feature_dim
        )));
    }
    model.forest.predict_batch(&features)
}

/// Roll the model forward `horizon` steps from the last `L` values of
/// `tail` (original units), feeding each normalized prediction back in.
pub fn forecast_recursive(model: &HybridModel, tail: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::config("forecast horizon must be at least 1"));
    }
    if model.fusion.include_exogenous {
        return Err(Error::UnsupportedMode(
            "recursive forecasting needs future exogenous values; refit without include_exogenous".into(),
        ));
    }
    let l = model.window_len;
    if tail.len() < l {
        return Err(Error::shape(format!("need at least {l} trailing values, got {}", tail.len())));
    }
    let norm = &model.normalizer.target;
    let mut window: Vec<f64> = norm.apply(&tail[tail.len() - l..]);
    let mut out = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let (pred, trace) = lstm::forward(&model.lstm, &window)?;
        let row: Vec<f64> = match model.fusion.mode {
            FeatureMode::Pred => vec![pred],
            FeatureMode::Hidden => trace.final_hidden().to_vec(),
            FeatureMode::Splice => window.iter().chain(trace.final_hidden()).copied().collect(),
        };
        let y = model.forest.predict_regression(&row)?;
        out.push(y);
        window.remove(0);
        window.push(norm.normalize(y));
    }
    Ok(out)
}

/// Train/test metrics of one model.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelComparison {
    pub model: String,
    pub train: EvalReport,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PredictionRow {
    pub timestamp: String,
    pub partition: &'static str,
    pub actual: f64,
    pub predicted: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub schema_version: u32,
    pub note: String,
    pub window_len: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub models: Vec<ModelComparison>,
    #[serde(skip)]
    pub predictions: Vec<(String, Vec<PredictionRow>)>,
}

impl ComparisonReport {
    pub fn model(&self, name: &str) -> Option<&ModelComparison> {
        self.models.iter().find(|m| m.model == name)
    }

    pub fn table_rows(&self) -> Vec<TableRow> {
        self.models
            .iter()
            .flat_map(|m| {
                [
                    TableRow {
                        model: m.model.clone(),
                        partition: "Training Set".into(),
                        report: m.train,
                    },
                    TableRow {
                        model: m.model.clone(),
                        partition: "Test Set".into(),
                        report: m.test,
                    },
                ]
            })
            .collect()
    }

    /// `timestamp,partition,actual,predicted` for one model.
    pub fn write_predictions_csv<W: std::io::Write>(&self, model: &str, writer: W) -> Result<()> {
        let rows = self
            .predictions
            .iter()
            .find(|(m, _)| m == model)
            .map(|(_, r)| r)
            .ok_or_else(|| Error::config(format!("no predictions for model `{model}`")))?;
        write_prediction_rows(rows, writer)
    }
}

pub fn write_prediction_rows<W: std::io::Write>(rows: &[PredictionRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<predictions>", e))?;
    Ok(())
}

pub const LSTM_ONLY: &str = "LSTM";
pub const RF_ONLY: &str = "RF";
pub const HYBRID: &str = "LSTM-RF";

/// Build `(timestamp, partition, actual, predicted)` rows for the train and
/// test partitions.
pub fn prediction_rows(
    data: &PreparedData,
    train_pred: &[f64],
    test_pred: &[f64],
) -> Vec<PredictionRow> {
    let part = |ds: &WindowedDataset, pred: &[f64], name: &'static str| {
        ds.label_timestamps()
            .iter()
            .zip(ds.labels_orig())
            .zip(pred)
            .map(|((ts, &actual), &predicted)| PredictionRow {
                timestamp: format_timestamp(ts),
                partition: name,
                actual,
                predicted,
            })
            .collect::<Vec<_>>()
    };
    let mut rows = part(&data.train, train_pred, "train");
    rows.extend(part(&data.test, test_pred, "test"));
    rows
}

/// Fit LSTM-only, RF-only and the hybrid on the same split and evaluate all
/// three on identical partitions.
///
/// LSTM-only is the hybrid's trained LSTM with its normalized predictions
/// mapped back to original units. RF-only is a forest (same configuration)
/// on the normalized window values.
pub fn run_baselines(series: &TimeSeries, config: &HybridConfig, exec: Execution) -> Result<ComparisonReport> {
    let data = prepare(series, config)?;
    let (model, _) = fit_hybrid_prepared(series.name(), &data, config, exec)?;
    let norm = data.normalizer.target;

    let lstm_pred = |ds: &WindowedDataset| -> Result<Vec<f64>> {
        let feats = extract_features(&model.lstm, ds, &FusionMode::pred(), exec)?;
        Ok(feats.as_slice().iter().map(|&z| norm.denormalize(z)).collect())
    };
    let rf = fit_forest_with(data.train.inputs(), data.train.labels_orig(), &config.forest, exec)?;
    let rf_pred = |ds: &WindowedDataset| rf.predict_batch(ds.inputs());
    let hybrid_pred = |ds: &WindowedDataset| predict_hybrid(&model, ds, exec);

    let mut models = Vec::new();
    let mut predictions = Vec::new();
    type Predictor<'a> = &'a dyn Fn(&WindowedDataset) -> Result<Vec<f64>>;
    let runs: [(&str, Predictor<'_>); 3] = [(LSTM_ONLY, &lstm_pred), (RF_ONLY, &rf_pred), (HYBRID, &hybrid_pred)];
    for (name, predict) in runs {
        let train = predict(&data.train)?;
        let test = predict(&data.test)?;
        models.push(ModelComparison {
            model: name.to_string(),
            train: evaluate(data.train.labels_orig(), &train)?,
            test: evaluate(data.test.labels_orig(), &test)?,
        });
        predictions.push((name.to_string(), prediction_rows(&data, &train, &test)));
    }
    Ok(ComparisonReport {
        schema_version: 1,
        note: "RF baseline inputs are the normalized window values; LSTM baseline predictions are denormalized with the target normalizer".into(),
        window_len: config.window_len,
        n_train: data.train.len(),
        n_test: data.test.len(),
        models,
        predictions,
    })
}

/// Features for windows computed with an explicit LSTM, exposed for tuning
/// the forest stage separately.
pub fn hybrid_features(
    lstm: &LstmParameters,
    data: &PreparedData,
    fusion: &FusionMode,
    exec: Execution,
) -> Result<(Matrix, Matrix)> {
    Ok((
        extract_features(lstm, &data.train, fusion, exec)?,
        extract_features(lstm, &data.test, fusion, exec)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::{MaxFeatures, TreeDepth};

    fn sine(n: usize) -> TimeSeries {
        TimeSeries::from_values(
            "sine",
            (0..n).map(|i| (i as f64 * 0.25).sin() + 0.1 * (i as f64 * 0.05).cos()).collect(),
        )
        .unwrap()
    }

    fn small_config() -> HybridConfig {
        HybridConfig {
            lstm: LstmConfig {
                hidden_size: 4,
                epochs: 5,
                learning_rate: 0.05,
                seed: 1,
                ..LstmConfig::default()
            },
            forest: ForestConfig {
                n_estimators: 10,
                seed: 2,
                ..ForestConfig::default()
            },
            window_len: 8,
            ..HybridConfig::default()
        }
    }

    #[test]
    fn partition_sizes_follow_floor_rule() {
        let cfg = HybridConfig::default();
        let data = prepare(&sine(400), &cfg).unwrap();
        assert_eq!((data.windows.len(), data.train.len(), data.test.len()), (370, 296, 74));
    }

    #[test]
    fn pred_mode_uses_one_feature() {
        let (model, report) = fit_hybrid(&sine(120), &small_config(), Execution::Sequential).unwrap();
        assert_eq!(model.forest().n_features(), 1);
        assert_eq!(report.feature_dim, 1);
        assert_eq!(report.loss_history.len(), 5);
    }

    #[test]
    fn fit_is_deterministic() {
        let s = sine(120);
        let a = fit_hybrid(&s, &small_config(), Execution::Sequential).unwrap();
        let b = fit_hybrid(&s, &small_config(), Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn exogenous_flag_needs_columns() {
        let mut cfg = small_config();
        cfg.fusion = FusionMode::pred().with_exogenous();
        assert!(matches!(
            fit_hybrid(&sine(120), &cfg, Execution::Sequential),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn perfect_fit_through_the_pipeline() {
        let mut cfg = small_config();
        cfg.fusion = FusionMode::splice();
        cfg.forest = ForestConfig {
            n_estimators: 3,
            max_depth: TreeDepth::Unbounded,
            max_features: MaxFeatures::All,
            bootstrap: false,
            ..ForestConfig::default()
        };
        let s = sine(150);
        let data = prepare(&s, &cfg).unwrap();
        let (model, _) = fit_hybrid_prepared("sine", &data, &cfg, Execution::Sequential).unwrap();
        let pred = predict_hybrid(&model, &data.train, Execution::Sequential).unwrap();
        assert_eq!(pred, data.train.labels_orig());
    }

    #[test]
    fn predictions_stay_in_label_range() {
        let s = sine(150);
        let cfg = small_config();
        let data = prepare(&s, &cfg).unwrap();
        let (model, _) = fit_hybrid_prepared("sine", &data, &cfg, Execution::Sequential).unwrap();
        let labels = data.train.labels_orig();
        let lo = labels.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = labels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for p in predict_hybrid(&model, &data.test, Execution::Sequential).unwrap() {
            assert!((lo..=hi).contains(&p));
        }
        for p in forecast_recursive(&model, s.target(), 5).unwrap() {
            assert!((lo..=hi).contains(&p));
        }
    }

    #[test]
    fn one_step_forecast_matches_last_window() {
        let s = sine(150);
        let cfg = small_config();
        let data = prepare(&s, &cfg).unwrap();
        let (model, _) = fit_hybrid_prepared("sine", &data, &cfg, Execution::Sequential).unwrap();
        let pred = predict_hybrid(&model, &data.test, Execution::Sequential).unwrap();
        let t = s.len();
        let f = forecast_recursive(&model, &s.target()[..t - 1], 1).unwrap();
        assert_eq!(f, vec![*pred.last().unwrap()]);
        assert!(forecast_recursive(&model, s.target(), 0).is_err());
        assert!(forecast_recursive(&model, &s.target()[..3], 1).is_err());
    }

    #[test]
    fn foreign_normalizer_is_rejected() {
        let s = sine(150);
        let cfg = small_config();
        let (model, _) = fit_hybrid(&s, &cfg, Execution::Sequential).unwrap();
        let other = s.map_target(|v| v * 2.0).unwrap();
        let windows = make_windows(&other, 8, &Normalizer::fit(&other).unwrap()).unwrap();
        assert!(predict_hybrid(&model, &windows, Execution::Sequential).is_err());
        let short = make_windows(&s, 5, model.normalizer()).unwrap();
        assert!(predict_hybrid(&model, &short, Execution::Sequential).is_err());
    }
}
