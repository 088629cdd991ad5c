//! Hybrid LSTM / random-forest forecasting for univariate time series.
//!
//! The pipeline is staged: a z-scored series is cut into sliding windows, an
//! LSTM trained by backpropagation through time turns each window into
//! features, and a random forest regresses the original-scale label on those
//! features (optionally spliced with exogenous drivers).
//!
//! Data-parallel loops (forest trees, per-sample gradients, grid
//! combinations) run on rayon when the `parallel` feature is on. Every
//! reduction has a fixed order, so results are bit-identical to the
//! sequential path and independent of the thread count.

pub mod dataio;
pub mod error;
pub mod exec;
pub mod forest;
pub mod hybrid;
pub mod lstm;
pub mod matrix;
pub mod metrics;
pub mod numeric;
pub mod persist;
pub mod synth;
pub mod tuner;

pub use dataio::{
    fit_normalizer, load_series, make_windows, split_ordered, LoadOptions, LoadReport,
    NormalizationParams, Normalizer, TimeSeries, WindowedDataset,
};
pub use error::{Error, ErrorCategory, Result};
pub use exec::Execution;
pub use forest::{ForestConfig, ForestModel, MaxFeatures, TreeDepth};
pub use hybrid::{FeatureMode, FusionMode, HybridConfig, HybridModel};
pub use lstm::{LstmConfig, LstmParameters};
pub use matrix::Matrix;
pub use metrics::{evaluate, EvalReport};
