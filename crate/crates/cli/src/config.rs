//! Run configuration: one TOML document with `data`, `lstm`, `forest`,
//! `hybrid`, `tune` and `output` sections.

use std::path::{Path, PathBuf};

use lstm_rf::tuner::GridSpec;
use lstm_rf::{FeatureMode, ForestConfig, FusionMode, HybridConfig, LoadOptions, LstmConfig};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::error::CliError;

/// Environment variable overriding every seed in the config.
pub const SEED_ENV: &str = "LSTMRF_SEED";
/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "LSTMRF_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub input: PathBuf,
    #[serde(default = "default_target")]
    pub target_column: String,
    #[serde(default = "default_date")]
    pub date_column: String,
    #[serde(default)]
    pub exo_columns: Vec<String>,
}

fn default_target() -> String {
    "target".into()
}

fn default_date() -> String {
    "date".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridSection {
    pub window_len: usize,
    pub train_fraction: f64,
    pub fit_norm_on_train: bool,
    pub mode: FeatureMode,
    pub include_exogenous: bool,
}

impl Default for HybridSection {
    fn default() -> Self {
        let d = HybridConfig::default();
        Self {
            window_len: d.window_len,
            train_fraction: d.train_fraction,
            fit_norm_on_train: d.fit_norm_on_train,
            mode: d.fusion.mode,
            include_exogenous: d.fusion.include_exogenous,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { dir: PathBuf::from("out") }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSection,
    #[serde(default)]
    pub lstm: LstmConfig,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub hybrid: HybridSection,
    #[serde(default)]
    pub tune: GridSpec,
    #[serde(default)]
    pub output: OutputSection,
}

impl RunConfig {
    /// Read `path`, apply the seed from `env_seed`, then each `key=value`
    /// override, and validate.
    pub fn load(path: &Path, env_seed: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text, env_seed, overrides)
    }

    pub fn from_toml(text: &str, env_seed: Option<&str>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: Table = text.parse().map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        if let Some(seed) = env_seed {
            let seed: i64 = seed
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{SEED_ENV} must be a non-negative integer, got `{seed}`")))?;
            for key in ["lstm.seed", "forest.seed", "tune.seed"] {
                set_path(&mut table, key, Value::Integer(seed))?;
            }
        }
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("override `{o}` is not of the form key=value")))?;
            set_path(&mut table, key.trim(), parse_value(raw.trim()))?;
        }
        let config: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.lstm.validate()?;
        self.tune.validate()?;
        let h = &self.hybrid;
        if h.window_len == 0 {
            return Err(CliError::Config("hybrid.window_len must be at least 1".into()));
        }
        if !(h.train_fraction > 0.0 && h.train_fraction < 1.0) {
            return Err(CliError::Config("hybrid.train_fraction must lie in (0, 1)".into()));
        }
        if h.include_exogenous && self.data.exo_columns.is_empty() {
            return Err(CliError::Config(
                "hybrid.include_exogenous is set but data.exo_columns is empty".into(),
            ));
        }
        if self.forest.n_estimators == 0 || self.forest.min_samples_split < 2 {
            return Err(CliError::Config(
                "forest.n_estimators must be at least 1 and forest.min_samples_split at least 2".into(),
            ));
        }
        Ok(())
    }

    pub fn load_options(&self) -> LoadOptions {
        LoadOptions {
            target_column: self.data.target_column.clone(),
            date_column: self.data.date_column.clone(),
            exo_columns: self.data.exo_columns.clone(),
        }
    }

    pub fn hybrid_config(&self) -> HybridConfig {
        HybridConfig {
            lstm: self.lstm.clone(),
            forest: self.forest.clone(),
            fusion: FusionMode {
                mode: self.hybrid.mode,
                include_exogenous: self.hybrid.include_exogenous,
            },
            window_len: self.hybrid.window_len,
            train_fraction: self.hybrid.train_fraction,
            fit_norm_on_train: self.hybrid.fit_norm_on_train,
        }
    }

    /// The fully materialized config, as written next to the outputs.
    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(format!("cannot render config: {e}")))
    }
}

/// A TOML literal if `raw` parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn set_path(table: &mut Table, key: &str, value: Value) -> Result<(), CliError> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key `{key}`")));
    }
    let (last, parents) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in parents {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("`{p}` in `{key}` is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}
