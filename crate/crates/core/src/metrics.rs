//! MSE, MAE, RMSE, R² and Pearson correlation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_sum;

/// Metrics of one prediction sequence. `r2` and `pearson` are `None` when
/// undefined (constant actuals, or a constant sequence for Pearson).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n: usize,
    pub mse: f64,
    pub mae: f64,
    pub rmse: f64,
    pub r2: Option<f64>,
    pub pearson: Option<f64>,
}

fn check(actual: &[f64], predicted: &[f64]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} actual values vs {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::config("cannot evaluate an empty sequence"));
    }
    Ok(())
}

pub fn mse(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(compensated_sum(actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)))
        / actual.len() as f64)
}

pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    check(actual, predicted)?;
    Ok(compensated_sum(actual.iter().zip(predicted).map(|(y, p)| (y - p).abs())) / actual.len() as f64)
}

fn centred_sq(values: &[f64], mean: f64) -> f64 {
    compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)))
}

fn is_constant(values: &[f64]) -> bool {
    values.iter().all(|&v| v == values[0])
}

/// `1 - SSE / Σ(y - ȳ)²` with `ȳ` the mean of `actual`.
pub fn r2(actual: &[f64], predicted: &[f64]) -> Result<Option<f64>> {
    check(actual, predicted)?;
    if actual.len() < 2 || is_constant(actual) {
        return Ok(None);
    }
    let n = actual.len() as f64;
    let mean = compensated_sum(actual.iter().copied()) / n;
    let sst = centred_sq(actual, mean);
    let sse = compensated_sum(actual.iter().zip(predicted).map(|(y, p)| (y - p) * (y - p)));
    if sse == 0.0 {
        return Ok(Some(1.0));
    }
    Ok(Some(1.0 - sse / sst))
}

pub fn pearson(actual: &[f64], predicted: &[f64]) -> Result<Option<f64>> {
    check(actual, predicted)?;
    if actual.len() < 2 || is_constant(actual) || is_constant(predicted) {
        return Ok(None);
    }
    let n = actual.len() as f64;
    let my = compensated_sum(actual.iter().copied()) / n;
    let mp = compensated_sum(predicted.iter().copied()) / n;
    let cov = compensated_sum(actual.iter().zip(predicted).map(|(y, p)| (y - my) * (p - mp)));
    let denom = centred_sq(actual, my).sqrt() * centred_sq(predicted, mp).sqrt();
    if !(denom > 0.0) {
        return Ok(None);
    }
    Ok(Some((cov / denom).clamp(-1.0, 1.0)))
}

pub fn evaluate(actual: &[f64], predicted: &[f64]) -> Result<EvalReport> {
    let mse = mse(actual, predicted)?;
    Ok(EvalReport {
        n: actual.len(),
        mse,
        mae: mae(actual, predicted)?,
        rmse: mse.sqrt(),
        r2: r2(actual, predicted)?,
        pearson: pearson(actual, predicted)?,
    })
}

/// One line of a comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub partition: String,
    pub report: EvalReport,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.6}"))
}

/// Plain-text table: model × partition × metric.
pub fn render_table(rows: &[TableRow]) -> String {
    let header = ["Model", "Data Set", "MSE", "MAE", "RMSE", "R2", "Pearson"];
    let body: Vec<[String; 7]> = rows
        .iter()
        .map(|r| {
            [
                r.model.clone(),
                r.partition.clone(),
                format!("{:.6}", r.report.mse),
                format!("{:.6}", r.report.mae),
                format!("{:.6}", r.report.rmse),
                cell(r.report.r2),
                cell(r.report.pearson),
            ]
        })
        .collect();
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for row in &body {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let line = |cells: Vec<&str>| {
        cells
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    for row in &body {
        out.push_str(&line(row.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}
