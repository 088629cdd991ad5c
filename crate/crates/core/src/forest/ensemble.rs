use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{argmax_first, grow_tree, Tree};
use super::{ForestConfig, Task};
use crate::error::{Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::matrix::Matrix;
use crate::numeric::compensated_sum;

/// Random stream of tree `index`: the master seed selects the key, the tree
/// index selects the ChaCha stream.
pub fn tree_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// `n` row indices drawn uniformly with replacement.
pub fn bootstrap_indices<R: Rng>(n: usize, rng: &mut R) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::config("cannot bootstrap an empty dataset"));
    }
    Ok((0..n).map(|_| rng.random_range(0..n)).collect())
}

/// A fitted bag of trees.
#[derive(Clone, Debug, PartialEq)]
pub struct ForestModel {
    pub(crate) config: ForestConfig,
    pub(crate) task: Task,
    pub(crate) n_features: usize,
    pub(crate) feature_names: Vec<String>,
    pub(crate) trees: Vec<Tree>,
    pub(crate) feature_importances: Vec<f64>,
}

fn check_dataset(features: &Matrix, labels: &[f64], config: &ForestConfig) -> Result<()> {
    if features.rows() == 0 {
        return Err(Error::config("cannot fit a forest on an empty dataset"));
    }
    if features.rows() != labels.len() {
        return Err(Error::shape(format!(
            "{} feature rows for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    if features.cols() == 0 {
        return Err(Error::shape("forest needs at least one feature"));
    }
    if features.as_slice().iter().chain(labels).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("forest training data"));
    }
    config.validate(features.cols())
}

fn fit_task(
    features: &Matrix,
    labels: &[f64],
    config: &ForestConfig,
    task: Task,
    exec: Execution,
) -> ForestModel {
    let n = features.rows();
    let trees = map_indexed(exec, config.n_estimators, |b| {
        let mut rng = tree_rng(config.seed, b);
        let rows = if config.bootstrap {
            bootstrap_indices(n, &mut rng).expect("non-empty")
        } else {
            (0..n).collect()
        };
        grow_tree(features, labels, rows, config, task, &mut rng)
    });
    let mut raw = vec![0.0; features.cols()];
    for t in &trees {
        t.accumulate_importance(&mut raw);
    }
    let total: f64 = compensated_sum(raw.iter().copied());
    let feature_importances = if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    };
    ForestModel {
        config: config.clone(),
        task,
        n_features: features.cols(),
        feature_names: (0..features.cols()).map(|j| format!("x{j}")).collect(),
        trees,
        feature_importances,
    }
}

/// Fit a regression forest with the default (parallel) execution.
pub fn fit_forest(features: &Matrix, labels: &[f64], config: &ForestConfig) -> Result<ForestModel> {
    fit_forest_with(features, labels, config, Execution::default())
}

pub fn fit_forest_with(
    features: &Matrix,
    labels: &[f64],
    config: &ForestConfig,
    exec: Execution,
) -> Result<ForestModel> {
    check_dataset(features, labels, config)?;
    Ok(fit_task(features, labels, config, Task::Regression, exec))
}

/// Fit a Gini classification forest on class indices `0..n_classes`.
pub fn fit_classifier(
    features: &Matrix,
    labels: &[usize],
    n_classes: usize,
    config: &ForestConfig,
    exec: Execution,
) -> Result<ForestModel> {
    if let Some(&bad) = labels.iter().find(|&&c| c >= n_classes) {
        return Err(Error::config(format!("class label {bad} outside 0..{n_classes}")));
    }
    let as_f64: Vec<f64> = labels.iter().map(|&c| c as f64).collect();
    check_dataset(features, &as_f64, config)?;
    Ok(fit_task(features, &as_f64, config, Task::Classification { n_classes }, exec))
}

impl ForestModel {
    pub fn config(&self) -> &ForestConfig {
        &self.config
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.n_features {
            return Err(Error::shape(format!(
                "{} names for {} features",
                names.len(),
                self.n_features
            )));
        }
        self.feature_names = names;
        Ok(self)
    }

    /// Normalized mean-decrease-in-impurity scores; all zero if no tree split.
    pub fn importance(&self) -> &[f64] {
        &self.feature_importances
    }

    /// `(name, score)` sorted by descending score, ties by feature order.
    pub fn ranked_importance(&self) -> Vec<(String, f64)> {
        let mut ranked: Vec<(String, f64)> = self
            .feature_names
            .iter()
            .cloned()
            .zip(self.feature_importances.iter().copied())
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
        ranked
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::shape(format!(
                "forest expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(())
    }

    /// Mean of the tree outputs.
    pub fn predict_regression(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let outputs: Vec<f64> = self.trees.iter().map(|t| t.predict(x)).collect();
        let mean = compensated_sum(outputs.iter().copied()) / outputs.len() as f64;
        let (lo, hi) = outputs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        Ok(mean.clamp(lo, hi))
    }

    pub fn predict_batch(&self, rows: &Matrix) -> Result<Vec<f64>> {
        rows.iter_rows().map(|r| self.predict_regression(r)).collect()
    }

    /// Majority vote over trees; ties go to the smallest class index.
    pub fn predict_classification(&self, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        let Task::Classification { n_classes } = self.task else {
            return Err(Error::UnsupportedMode("classification vote on a regression forest".into()));
        };
        let mut votes = vec![0usize; n_classes];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        Ok(argmax_first(&votes))
    }

    pub(crate) fn from_parts(
        config: ForestConfig,
        task: Task,
        n_features: usize,
        feature_names: Vec<String>,
        trees: Vec<Tree>,
        feature_importances: Vec<f64>,
    ) -> Result<Self> {
        if trees.is_empty() || feature_names.len() != n_features || feature_importances.len() != n_features {
            return Err(Error::Format("inconsistent forest document".into()));
        }
        Ok(Self {
            config,
            task,
            n_features,
            feature_names,
            trees,
            feature_importances,
        })
    }
}
