use std::path::{Path, PathBuf};

use lstm_rf::dataio::{load_series, LoadOptions, LoadReport};
use lstm_rf::forest::fit_forest_with;
use lstm_rf::hybrid::{
    fit_hybrid_prepared, forecast_recursive, hybrid_features, predict_hybrid, prediction_rows, prepare,
    run_baselines, write_prediction_rows, FitReport,
};
use lstm_rf::metrics::{evaluate, render_table, EvalReport, TableRow};
use lstm_rf::persist::{hybrid_from_json, hybrid_to_json, write_importance_csv};
use lstm_rf::synth::{generate, to_csv, SynthParams};
use lstm_rf::tuner::{grid_search_lstm, grid_search_rf, lstm_config_for, write_lstm_csv, write_rf_csv, RfData, Status};
use lstm_rf::{Execution, HybridConfig, Matrix, TimeSeries};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;
pub const RESOLVED_CONFIG: &str = "resolved_config.toml";

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(value).map_err(lstm_rf::Error::from)?;
    s.push('\n');
    Ok(s)
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> lstm_rf::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Paths written by a command, in creation order.
#[derive(Debug, Default)]
pub struct Outputs {
    pub files: Vec<PathBuf>,
}

impl Outputs {
    fn write(&mut self, path: PathBuf, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        write_file(&path, contents)?;
        self.files.push(path);
        Ok(())
    }
}

fn load(config: &RunConfig) -> Result<(TimeSeries, LoadReport), CliError> {
    let (series, report) = load_series(&config.data.input, &config.load_options())?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    Ok((series, report))
}

fn echo_config(config: &RunConfig, out: &mut Outputs) -> Result<(), CliError> {
    out.write(config.output.dir.join(RESOLVED_CONFIG), config.to_toml()?)
}

#[derive(Serialize)]
struct InputSummary<'a> {
    path: String,
    rows_read: usize,
    rows_dropped: usize,
    duplicate_timestamps: usize,
    warnings: &'a [String],
}

impl<'a> InputSummary<'a> {
    fn new(path: &Path, r: &'a LoadReport) -> Self {
        Self {
            path: path.display().to_string(),
            rows_read: r.rows_read,
            rows_dropped: r.rows_dropped,
            duplicate_timestamps: r.duplicate_timestamps,
            warnings: &r.warnings,
        }
    }
}

#[derive(Serialize)]
struct TrainReport<'a> {
    schema_version: u32,
    target: &'a str,
    input: InputSummary<'a>,
    feature_names: &'a [String],
    fit: &'a FitReport,
    train: EvalReport,
    test: EvalReport,
}

/// Fit the hybrid; write the model, a JSON report and train/test predictions.
pub fn train(config: &RunConfig, exec: Execution) -> Result<Outputs, CliError> {
    let (series, load_report) = load(config)?;
    let hc = config.hybrid_config();
    let data = prepare(&series, &hc)?;
    let (model, fit) = fit_hybrid_prepared(series.name(), &data, &hc, exec)?;
    let train_pred = predict_hybrid(&model, &data.train, exec)?;
    let test_pred = predict_hybrid(&model, &data.test, exec)?;
    let report = TrainReport {
        schema_version: SCHEMA_VERSION,
        target: series.name(),
        input: InputSummary::new(&config.data.input, &load_report),
        feature_names: model.forest().feature_names(),
        fit: &fit,
        train: evaluate(data.train.labels_orig(), &train_pred)?,
        test: evaluate(data.test.labels_orig(), &test_pred)?,
    };

    let dir = &config.output.dir;
    let mut out = Outputs::default();
    out.write(dir.join("model.json"), hybrid_to_json(&model)?)?;
    out.write(dir.join("train_report.json"), to_json(&report)?)?;
    let rows = prediction_rows(&data, &train_pred, &test_pred);
    out.write(dir.join("predictions.csv"), csv_bytes(|b| write_prediction_rows(&rows, b))?)?;
    echo_config(config, &mut out)?;
    println!(
        "trained on {} windows ({} train / {} test); test R2 {}",
        fit.n_windows,
        fit.n_train,
        fit.n_test,
        report.test.r2.map_or_else(|| "undefined".into(), |v| format!("{v:.4}"))
    );
    Ok(out)
}

/// One-step predictions for every window of `input`, or a recursive
/// forecast of `horizon` steps past its end.
pub fn predict(
    model_path: &Path,
    input: &Path,
    date_column: &str,
    horizon: usize,
    output: &Path,
) -> Result<Outputs, CliError> {
    let text = std::fs::read_to_string(model_path).map_err(|e| CliError::io(model_path, e))?;
    let model = hybrid_from_json(&text)?;
    let opts = LoadOptions {
        target_column: model.target_name().to_string(),
        date_column: date_column.to_string(),
        exo_columns: model.exo_names().to_vec(),
    };
    let (series, _) = load_series(input, &opts)?;
    let forecast = forecast_recursive(&model, series.target(), horizon)?;
    let mut text = String::from("step,predicted\n");
    for (i, v) in forecast.iter().enumerate() {
        text.push_str(&format!("{},{v}\n", i + 1));
    }
    let mut out = Outputs::default();
    out.write(output.to_path_buf(), text)?;
    println!("forecast {horizon} step(s) to {}", output.display());
    Ok(out)
}

/// LSTM-only, RF-only and hybrid on identical partitions.
pub fn compare(config: &RunConfig, exec: Execution) -> Result<Outputs, CliError> {
    let (series, _) = load(config)?;
    let report = run_baselines(&series, &config.hybrid_config(), exec)?;
    let dir = &config.output.dir;
    let mut out = Outputs::default();
    out.write(dir.join("comparison.json"), to_json(&report)?)?;
    let table = render_table(&report.table_rows());
    out.write(dir.join("comparison.txt"), &table)?;
    for m in &report.models {
        let name = format!("predictions_{}.csv", m.model.to_lowercase());
        out.write(dir.join(name), csv_bytes(|b| report.write_predictions_csv(&m.model, b))?)?;
    }
    echo_config(config, &mut out)?;
    print!("{table}");
    Ok(out)
}

fn grid_rows_table<C>(rows: &[lstm_rf::tuner::GridRow<C>], label: impl Fn(&C) -> String) -> Vec<TableRow> {
    rows.iter()
        .filter(|r| r.status == Status::Ok)
        .filter_map(|r| {
            r.test.map(|report| TableRow {
                model: label(&r.combo),
                partition: "Test Set".into(),
                report,
            })
        })
        .collect()
}

/// LSTM grid on the series, then the forest grid on features from the
/// best LSTM row.
pub fn tune(config: &RunConfig, exec: Execution) -> Result<Outputs, CliError> {
    let (series, _) = load(config)?;
    let spec = &config.tune;
    let lstm_rows = grid_search_lstm(&series, spec, exec)?;
    let best = lstm_rows
        .iter()
        .find(|r| r.score.is_some())
        .ok_or_else(|| CliError::Config("every LSTM combination failed; no features for the forest stage".into()))?;

    let hc = HybridConfig {
        lstm: lstm_config_for(&best.combo, spec),
        window_len: best.combo.sequence_len,
        train_fraction: spec.train_fraction,
        ..config.hybrid_config()
    };
    let data = prepare(&series, &hc)?;
    let lstm = lstm_rf::lstm::train(&hc.lstm, &data.train, exec)?;
    let (train_x, test_x) = hybrid_features(&lstm.params, &data, &hc.fusion, exec)?;
    let rf_rows = grid_search_rf(
        RfData {
            train_x: &train_x,
            train_y: data.train.labels_orig(),
            test_x: &test_x,
            test_y: data.test.labels_orig(),
        },
        spec,
        exec,
    )?;

    let dir = &config.output.dir;
    let mut out = Outputs::default();
    out.write(dir.join("tune_lstm.csv"), csv_bytes(|b| write_lstm_csv(&lstm_rows, b))?)?;
    out.write(dir.join("tune_rf.csv"), csv_bytes(|b| write_rf_csv(&rf_rows, b))?)?;
    echo_config(config, &mut out)?;
    print!(
        "{}",
        render_table(&grid_rows_table(&lstm_rows, |c| format!(
            "h={} layers={} lr={} L={}",
            c.hidden_size, c.num_layers, c.learning_rate, c.sequence_len
        )))
    );
    print!(
        "{}",
        render_table(&grid_rows_table(&rf_rows, |c| format!(
            "trees={} depth={:?} split={}",
            c.n_estimators, c.max_depth, c.min_samples_split
        )))
    );
    Ok(out)
}

/// Forest importance of the exogenous columns for the same-timestamp target.
pub fn importance(config: &RunConfig, exec: Execution) -> Result<Outputs, CliError> {
    if config.data.exo_columns.is_empty() {
        return Err(CliError::Config(
            "importance needs exogenous columns; list them in data.exo_columns".into(),
        ));
    }
    let (series, _) = load(config)?;
    let n = series.len();
    let d = series.exogenous().len();
    let mut values = Vec::with_capacity(n * d);
    for i in 0..n {
        values.extend(series.exogenous().iter().map(|c| c.values[i]));
    }
    let x = Matrix::from_vec(n, d, values)?;
    let model = fit_forest_with(&x, series.target(), &config.forest, exec)?.with_feature_names(series.exo_names())?;

    let mut out = Outputs::default();
    out.write(
        config.output.dir.join("importance.csv"),
        csv_bytes(|b| write_importance_csv(&model, b))?,
    )?;
    echo_config(config, &mut out)?;
    for (name, v) in model.ranked_importance() {
        println!("{name:<16} {v:.4}");
    }
    Ok(out)
}

pub fn synth(params: &SynthParams, output: &Path) -> Result<Outputs, CliError> {
    let series = generate(params)?;
    let mut out = Outputs::default();
    out.write(output.to_path_buf(), to_csv(params, &series))?;
    println!("wrote {} rows to {}", series.len(), output.display());
    Ok(out)
}
