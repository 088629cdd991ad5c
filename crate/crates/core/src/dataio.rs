//! Series ingestion, z-score normalization, sliding windows and the ordered
//! train/test split.

use std::io::Write;
use std::ops::Range;
use std::path::Path;

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::numeric::{compensated_sum, mean};

/// A named real-valued column aligned with the target.
#[derive(Clone, Debug, PartialEq)]
pub struct ExoColumn {
    pub name: String,
    pub values: Vec<f64>,
}

/// Date-ordered observations of one target plus optional exogenous columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeSeries {
    name: String,
    timestamps: Vec<NaiveDateTime>,
    target: Vec<f64>,
    exogenous: Vec<ExoColumn>,
}

impl TimeSeries {
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<NaiveDateTime>,
        target: Vec<f64>,
        exogenous: Vec<ExoColumn>,
    ) -> Result<Self> {
        let n = target.len();
        if n == 0 {
            return Err(Error::TooFewRows {
                needed: 1,
                found: 0,
            });
        }
        if timestamps.len() != n {
            return Err(Error::shape(format!(
                "{} timestamps for {n} target values",
                timestamps.len()
            )));
        }
        if timestamps.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::config("timestamps must be non-decreasing"));
        }
        if target.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("target column"));
        }
        for col in &exogenous {
            if col.values.len() != n {
                return Err(Error::shape(format!(
                    "exogenous column `{}` has {} values, target has {n}",
                    col.name,
                    col.values.len()
                )));
            }
            if col.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("exogenous column"));
            }
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            target,
            exogenous,
        })
    }

    /// Target-only series with consecutive daily timestamps from 2000-01-01.
    pub fn from_values(name: impl Into<String>, target: Vec<f64>) -> Result<Self> {
        let start = NaiveDate::from_ymd_opt(2000, 1, 1)
            .expect("valid date")
            .and_hms_opt(0, 0, 0)
            .expect("valid time");
        let timestamps = (0..target.len())
            .map(|i| start + chrono::Duration::days(i as i64))
            .collect();
        Self::new(name, timestamps, target, Vec::new())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn timestamps(&self) -> &[NaiveDateTime] {
        &self.timestamps
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn exogenous(&self) -> &[ExoColumn] {
        &self.exogenous
    }

    pub fn exo_names(&self) -> Vec<String> {
        self.exogenous.iter().map(|c| c.name.clone()).collect()
    }

    /// Apply `v -> scale * v + shift` to the target, keeping everything else.
    pub fn map_target(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.timestamps.clone(),
            self.target.iter().map(|&v| f(v)).collect(),
            self.exogenous.clone(),
        )
    }

    /// Copy of the rows in `range`.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.timestamps[range.clone()].to_vec(),
            self.target[range.clone()].to_vec(),
            self.exogenous
                .iter()
                .map(|c| ExoColumn {
                    name: c.name.clone(),
                    values: c.values[range.clone()].to_vec(),
                })
                .collect(),
        )
    }
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub target_column: String,
    pub date_column: String,
    pub exo_columns: Vec<String>,
}

/// What happened during ingestion.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub rows_dropped: usize,
    /// Number of rows whose timestamp equals the previous row's after sorting.
    pub duplicate_timestamps: usize,
    pub warnings: Vec<String>,
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim().to_ascii_lowercase().as_str(),
        "" | "na" | "nan" | "null" | "none"
    )
}

/// Parse an ISO-8601 date (`YYYY-MM-DD`, `YYYY-MM`, or a date with a time
/// suffix separated by `T` or a space).
pub fn parse_date(raw: &str) -> Option<NaiveDateTime> {
    let s = raw.trim();
    for fmt in [
        "%Y-%m-%dT%H:%M:%S%.f",
        "%Y-%m-%d %H:%M:%S%.f",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt);
        }
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return d.and_hms_opt(0, 0, 0);
    }
    if s.len() == 7 {
        if let Ok(d) = NaiveDate::parse_from_str(&format!("{s}-01"), "%Y-%m-%d") {
            return d.and_hms_opt(0, 0, 0);
        }
    }
    None
}

pub fn format_timestamp(ts: &NaiveDateTime) -> String {
    if ts.time() == chrono::NaiveTime::MIN {
        ts.format("%Y-%m-%d").to_string()
    } else {
        ts.format("%Y-%m-%dT%H:%M:%S").to_string()
    }
}

/// Read a CSV file into a date-sorted [`TimeSeries`].
///
/// Rows with any missing cell among the selected columns are dropped and
/// counted. Lines starting with `#` are ignored.
pub fn load_series(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<(TimeSeries, LoadReport)> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_series(file, opts)
}

pub fn read_series<R: std::io::Read>(
    reader: R,
    opts: &LoadOptions,
) -> Result<(TimeSeries, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.to_string()))
    };
    let date_idx = find(&opts.date_column)?;
    let target_idx = find(&opts.target_column)?;
    let exo_idx = opts
        .exo_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;

    let mut report = LoadReport::default();
    let mut rows: Vec<(NaiveDateTime, f64, Vec<f64>)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        report.rows_read += 1;
        let line = record.position().map_or(0, |p| p.line());
        let cell = |i: usize| record.get(i).unwrap_or("");

        let selected = std::iter::once(date_idx)
            .chain(std::iter::once(target_idx))
            .chain(exo_idx.iter().copied());
        if selected.into_iter().any(|i| is_missing(cell(i))) {
            report.rows_dropped += 1;
            continue;
        }
        let date = parse_date(cell(date_idx)).ok_or_else(|| Error::BadDate {
            value: cell(date_idx).to_string(),
            line,
        })?;
        let number = |i: usize, column: &str| -> Result<f64> {
            cell(i)
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::BadNumber {
                    value: cell(i).to_string(),
                    column: column.to_string(),
                    line,
                })
        };
        let target = number(target_idx, &opts.target_column)?;
        let exo = exo_idx
            .iter()
            .zip(&opts.exo_columns)
            .map(|(&i, name)| number(i, name))
            .collect::<Result<Vec<_>>>()?;
        rows.push((date, target, exo));
    }
    if rows.len() < 2 {
        return Err(Error::TooFewRows {
            needed: 2,
            found: rows.len(),
        });
    }
    // stable: duplicate dates keep file order
    rows.sort_by_key(|r| r.0);
    report.duplicate_timestamps = rows.windows(2).filter(|w| w[0].0 == w[1].0).count();
    if report.rows_dropped > 0 {
        report
            .warnings
            .push(format!("dropped {} rows with missing cells", report.rows_dropped));
    }
    if report.duplicate_timestamps > 0 {
        report.warnings.push(format!(
            "{} duplicate timestamps in source",
            report.duplicate_timestamps
        ));
    }

    let timestamps = rows.iter().map(|r| r.0).collect();
    let target = rows.iter().map(|r| r.1).collect();
    let exogenous = opts
        .exo_columns
        .iter()
        .enumerate()
        .map(|(j, name)| ExoColumn {
            name: name.clone(),
            values: rows.iter().map(|r| r.2[j]).collect(),
        })
        .collect();
    let series = TimeSeries::new(opts.target_column.clone(), timestamps, target, exogenous)?;
    Ok((series, report))
}

/// Mean and population standard deviation of one column.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mu: f64,
    pub sigma: f64,
}

impl NormalizationParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite() && mu.is_finite()) {
            return Err(Error::config(format!(
                "normalization needs finite mu and sigma > 0, got mu={mu} sigma={sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    /// Fit on `values` (two-pass, compensated; divide-by-N convention).
    pub fn fit(name: &str, values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooFewRows {
                needed: 2,
                found: values.len(),
            });
        }
        if values.iter().all(|&v| v == values[0]) {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        let mu = mean(values);
        let var = compensated_sum(values.iter().map(|&v| (v - mu) * (v - mu))) / values.len() as f64;
        let sigma = var.sqrt();
        if !(sigma > 0.0) {
            return Err(Error::ZeroVariance(name.to_string()));
        }
        Self::new(mu, sigma)
    }

    #[inline]
    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mu) / self.sigma
    }

    #[inline]
    pub fn denormalize(&self, z: f64) -> f64 {
        z * self.sigma + self.mu
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&v| self.normalize(v)).collect()
    }

    pub fn invert(&self, values: &[f64]) -> Vec<f64> {
        values.iter().map(|&z| self.denormalize(z)).collect()
    }

    /// Bitwise identity, used to detect windows scaled by another normalizer.
    pub fn same_as(&self, other: &Self) -> bool {
        self.mu.to_bits() == other.mu.to_bits() && self.sigma.to_bits() == other.sigma.to_bits()
    }
}

/// Fit target normalization on the full series.
pub fn fit_normalizer(series: &TimeSeries) -> Result<NormalizationParams> {
    NormalizationParams::fit(series.name(), series.target())
}

/// `(v - mu) / sigma` elementwise.
pub fn apply_normalizer(values: &[f64], params: &NormalizationParams) -> Vec<f64> {
    params.apply(values)
}

/// Target normalization plus one set of parameters per exogenous column.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub target: NormalizationParams,
    pub exogenous: Vec<NormalizationParams>,
}

impl Normalizer {
    pub fn fit(series: &TimeSeries) -> Result<Self> {
        Self::fit_prefix(series, series.len())
    }

    /// Fit on the first `end` rows only.
    pub fn fit_prefix(series: &TimeSeries, end: usize) -> Result<Self> {
        let end = end.min(series.len());
        let target = NormalizationParams::fit(series.name(), &series.target()[..end])?;
        let exogenous = series
            .exogenous()
            .iter()
            .map(|c| NormalizationParams::fit(&c.name, &c.values[..end]))
            .collect::<Result<_>>()?;
        Ok(Self { target, exogenous })
    }

    pub fn same_as(&self, other: &Self) -> bool {
        self.target.same_as(&other.target)
            && self.exogenous.len() == other.exogenous.len()
            && self
                .exogenous
                .iter()
                .zip(&other.exogenous)
                .all(|(a, b)| a.same_as(b))
    }
}

/// Sliding windows over a normalized series with labels in both scales.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowedDataset {
    window_len: usize,
    inputs: Matrix,
    labels_norm: Vec<f64>,
    labels_orig: Vec<f64>,
    exo_rows: Option<Matrix>,
    exo_names: Vec<String>,
    label_timestamps: Vec<NaiveDateTime>,
    /// Index of this dataset's first sample in the unsplit window numbering.
    origin: usize,
    normalizer: Normalizer,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.labels_norm.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels_norm.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    pub fn inputs(&self) -> &Matrix {
        &self.inputs
    }

    pub fn window(&self, i: usize) -> &[f64] {
        self.inputs.row(i)
    }

    pub fn labels_norm(&self) -> &[f64] {
        &self.labels_norm
    }

    pub fn labels_orig(&self) -> &[f64] {
        &self.labels_orig
    }

    pub fn exo_rows(&self) -> Option<&Matrix> {
        self.exo_rows.as_ref()
    }

    pub fn exo_names(&self) -> &[String] {
        &self.exo_names
    }

    pub fn label_timestamps(&self) -> &[NaiveDateTime] {
        &self.label_timestamps
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn normalizer(&self) -> &Normalizer {
        &self.normalizer
    }

    /// Copy of the samples in `range`; `origin` is shifted accordingly.
    pub fn slice(&self, range: Range<usize>) -> WindowedDataset {
        WindowedDataset {
            window_len: self.window_len,
            inputs: self.inputs.slice_rows(range.clone()),
            labels_norm: self.labels_norm[range.clone()].to_vec(),
            labels_orig: self.labels_orig[range.clone()].to_vec(),
            exo_rows: self.exo_rows.as_ref().map(|m| m.slice_rows(range.clone())),
            exo_names: self.exo_names.clone(),
            label_timestamps: self.label_timestamps[range.clone()].to_vec(),
            origin: self.origin + range.start,
            normalizer: self.normalizer.clone(),
        }
    }

    /// Debug export: `w0..w{L-1},label_norm,label_orig`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.window_len).map(|j| format!("w{j}")).collect();
        header.push("label_norm".into());
        header.push("label_orig".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.window(i).iter().map(|v| v.to_string()).collect();
            rec.push(self.labels_norm[i].to_string());
            rec.push(self.labels_orig[i].to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io("<window export>", e))?;
        Ok(())
    }
}

/// Cut `series` into `T - L` windows. Sample `i` covers normalized
/// `x[i..i+L]` and is labelled with `x[i+L]`; exogenous values are taken at
/// the label's row.
pub fn make_windows(
    series: &TimeSeries,
    window_len: usize,
    normalizer: &Normalizer,
) -> Result<WindowedDataset> {
    let t = series.len();
    if window_len == 0 {
        return Err(Error::config("window length must be at least 1"));
    }
    if t <= window_len {
        return Err(Error::config(format!(
            "series of length {t} is too short for window length {window_len}"
        )));
    }
    if normalizer.exogenous.len() != series.exogenous().len() {
        return Err(Error::shape(format!(
            "normalizer has {} exogenous columns, series has {}",
            normalizer.exogenous.len(),
            series.exogenous().len()
        )));
    }
    let norm = normalizer.target.apply(series.target());
    let n = t - window_len;
    let mut inputs = Matrix::zeros(n, window_len);
    for i in 0..n {
        inputs.row_mut(i).copy_from_slice(&norm[i..i + window_len]);
    }
    let labels_norm = norm[window_len..].to_vec();
    let labels_orig = series.target()[window_len..].to_vec();

    let exo_rows = if series.exogenous().is_empty() {
        None
    } else {
        let k = series.exogenous().len();
        let mut m = Matrix::zeros(n, k);
        for i in 0..n {
            let row = m.row_mut(i);
            for (j, (col, p)) in series.exogenous().iter().zip(&normalizer.exogenous).enumerate() {
                row[j] = p.normalize(col.values[i + window_len]);
            }
        }
        Some(m)
    };

    Ok(WindowedDataset {
        window_len,
        inputs,
        labels_norm,
        labels_orig,
        exo_rows,
        exo_names: series.exo_names(),
        label_timestamps: series.timestamps()[window_len..].to_vec(),
        origin: 0,
        normalizer: normalizer.clone(),
    })
}

/// Number of training samples for an ordered split: `floor(fraction * n)`.
pub fn train_size(n: usize, train_fraction: f64) -> Result<usize> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    let k = (train_fraction * n as f64).floor() as usize;
    if k == 0 || k >= n {
        return Err(Error::config(format!(
            "splitting {n} samples at fraction {train_fraction} leaves an empty partition"
        )));
    }
    Ok(k)
}

/// First `floor(fraction * n)` samples train, the rest test. No shuffling.
pub fn split_ordered(
    dataset: &WindowedDataset,
    train_fraction: f64,
) -> Result<(WindowedDataset, WindowedDataset)> {
    let n = dataset.len();
    let k = train_size(n, train_fraction)?;
    Ok((dataset.slice(0..k), dataset.slice(k..n)))
}
