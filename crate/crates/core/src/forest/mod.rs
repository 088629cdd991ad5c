//! CART regression trees with variance-reduction splits, bagged into a
//! random forest with mean-decrease-in-impurity importances. A Gini
//! classification path with majority voting shares the same machinery.

mod ensemble;
mod split;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use ensemble::{
    bootstrap_indices, fit_classifier, fit_forest, fit_forest_with, tree_rng, ForestModel,
};
pub use split::{best_split, best_split_rows, Split};
pub use tree::{build_tree, Node, Tree};

/// What the leaves predict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Task {
    Regression,
    /// Labels are class indices `0..n_classes` stored as `f64`.
    Classification { n_classes: usize },
}

/// Depth limit; `Unbounded` grows until the other stopping rules fire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "DepthRepr", into = "DepthRepr")]
pub enum TreeDepth {
    #[default]
    Unbounded,
    Limited(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DepthRepr {
    Limit(usize),
    Word(String),
}

impl TryFrom<DepthRepr> for TreeDepth {
    type Error = String;
    fn try_from(r: DepthRepr) -> std::result::Result<Self, String> {
        match r {
            DepthRepr::Limit(d) => Ok(TreeDepth::Limited(d)),
            DepthRepr::Word(w) if w.eq_ignore_ascii_case("none") => Ok(TreeDepth::Unbounded),
            DepthRepr::Word(w) => Err(format!("max_depth must be an integer or \"none\", got `{w}`")),
        }
    }
}

impl From<TreeDepth> for DepthRepr {
    fn from(d: TreeDepth) -> Self {
        match d {
            TreeDepth::Unbounded => DepthRepr::Word("none".into()),
            TreeDepth::Limited(d) => DepthRepr::Limit(d),
        }
    }
}

impl std::fmt::Display for TreeDepth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TreeDepth::Unbounded => f.write_str("none"),
            TreeDepth::Limited(d) => write!(f, "{d}"),
        }
    }
}

/// Features considered at each split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "FeaturesRepr", into = "FeaturesRepr")]
pub enum MaxFeatures {
    /// `ceil(d / 3)`.
    #[default]
    Auto,
    All,
    Count(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum FeaturesRepr {
    Count(usize),
    Word(String),
}

impl TryFrom<FeaturesRepr> for MaxFeatures {
    type Error = String;
    fn try_from(r: FeaturesRepr) -> std::result::Result<Self, String> {
        match r {
            FeaturesRepr::Count(m) => Ok(MaxFeatures::Count(m)),
            FeaturesRepr::Word(w) => match w.to_ascii_lowercase().as_str() {
                "auto" => Ok(MaxFeatures::Auto),
                "all" => Ok(MaxFeatures::All),
                _ => Err(format!("max_features must be an integer, \"auto\" or \"all\", got `{w}`")),
            },
        }
    }
}

impl From<MaxFeatures> for FeaturesRepr {
    fn from(m: MaxFeatures) -> Self {
        match m {
            MaxFeatures::Auto => FeaturesRepr::Word("auto".into()),
            MaxFeatures::All => FeaturesRepr::Word("all".into()),
            MaxFeatures::Count(m) => FeaturesRepr::Count(m),
        }
    }
}

impl MaxFeatures {
    /// Number of candidates out of `d` features.
    pub fn resolve(self, d: usize) -> usize {
        match self {
            MaxFeatures::Auto => d.div_ceil(3).max(1),
            MaxFeatures::All => d,
            MaxFeatures::Count(m) => m.min(d),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_estimators: usize,
    pub max_depth: TreeDepth,
    pub min_samples_split: usize,
    pub max_features: MaxFeatures,
    /// Full-sample mode (`false`) exists for testing.
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            max_depth: TreeDepth::Unbounded,
            min_samples_split: 2,
            max_features: MaxFeatures::Auto,
            bootstrap: true,
            seed: 0,
        }
    }
}

impl ForestConfig {
    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_estimators == 0 {
            return Err(Error::config("forest n_estimators must be at least 1"));
        }
        if self.min_samples_split < 2 {
            return Err(Error::config("forest min_samples_split must be at least 2"));
        }
        if self.max_depth == TreeDepth::Limited(0) {
            return Err(Error::config("forest max_depth must be at least 1"));
        }
        if let MaxFeatures::Count(m) = self.max_features {
            if m == 0 || m > n_features {
                return Err(Error::config(format!(
                    "forest max_features {m} outside 1..={n_features}"
                )));
            }
        }
        Ok(())
    }
}
