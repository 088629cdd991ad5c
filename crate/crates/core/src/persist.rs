//! Versioned JSON documents for fitted models.
//!
//! LSTM tensors are stored as shape plus base64 of little-endian `f64`
//! bytes; forest scalars as the hex of their bit patterns. Both round-trip
//! exactly.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use crate::dataio::{NormalizationParams, Normalizer};
use crate::error::{Error, Result};
use crate::forest::{ForestConfig, ForestModel, Node, Task, Tree};
use crate::hybrid::{FusionMode, HybridModel};
use crate::lstm::{LstmConfig, LstmParameters};

pub const LSTM_FORMAT: &str = "lstm-rf.lstm";
pub const FOREST_FORMAT: &str = "lstm-rf.forest";
pub const HYBRID_FORMAT: &str = "lstm-rf.hybrid";
pub const VERSION: u32 = 1;

/// An `f64` serialized as the 16-digit hex of its bits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct HexF64(pub f64);

impl From<HexF64> for String {
    fn from(v: HexF64) -> String {
        format!("{:016x}", v.0.to_bits())
    }
}

impl TryFrom<String> for HexF64 {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        if s.len() != 16 {
            return Err(format!("`{s}` is not a 16-digit hex float"));
        }
        u64::from_str_radix(&s, 16)
            .map(|bits| HexF64(f64::from_bits(bits)))
            .map_err(|e| format!("`{s}`: {e}"))
    }
}

fn check_header(format: &str, version: u32, expected: &str) -> Result<()> {
    if format != expected {
        return Err(Error::Format(format!("expected a `{expected}` document, found `{format}`")));
    }
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported {expected} version {version} (this build reads version {VERSION})"
        )));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorDoc {
    pub name: String,
    pub shape: Vec<usize>,
    /// Base64 of the row-major values as little-endian `f64` bytes.
    pub data: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmDocument {
    pub format: String,
    pub version: u32,
    pub config: LstmConfig,
    pub tensors: Vec<TensorDoc>,
}

impl LstmDocument {
    pub fn new(config: &LstmConfig, params: &LstmParameters) -> Self {
        let values = params.as_slice();
        let tensors = params
            .tensors()
            .into_iter()
            .map(|t| {
                let bytes: Vec<u8> = values[t.offset..t.offset + t.len]
                    .iter()
                    .flat_map(|v| v.to_le_bytes())
                    .collect();
                TensorDoc {
                    name: t.name,
                    shape: t.shape,
                    data: STANDARD.encode(bytes),
                }
            })
            .collect();
        Self {
            format: LSTM_FORMAT.into(),
            version: VERSION,
            config: config.clone(),
            tensors,
        }
    }

    pub fn into_model(self) -> Result<(LstmConfig, LstmParameters)> {
        check_header(&self.format, self.version, LSTM_FORMAT)?;
        self.config.validate()?;
        let c = &self.config;
        let template = LstmParameters::zeros(c.input_size, c.hidden_size, c.num_layers);
        let layout = template.tensors();
        if layout.len() != self.tensors.len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                layout.len(),
                self.tensors.len()
            )));
        }
        let mut values = Vec::with_capacity(template.len());
        for (want, got) in layout.iter().zip(&self.tensors) {
            if want.name != got.name || want.shape != got.shape {
                return Err(Error::Format(format!(
                    "tensor `{}` {:?} does not match expected `{}` {:?}",
                    got.name, got.shape, want.name, want.shape
                )));
            }
            let bytes = STANDARD
                .decode(&got.data)
                .map_err(|e| Error::Format(format!("tensor `{}`: {e}", got.name)))?;
            if bytes.len() != 8 * want.len {
                return Err(Error::Format(format!(
                    "tensor `{}` holds {} bytes, expected {}",
                    got.name,
                    bytes.len(),
                    8 * want.len
                )));
            }
            values.extend(
                bytes
                    .chunks_exact(8)
                    .map(|b| f64::from_le_bytes(b.try_into().expect("chunk of 8"))),
            );
        }
        let params = LstmParameters::from_values(c.input_size, c.hidden_size, c.num_layers, values)?;
        Ok((self.config, params))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum NodeDoc {
    Split {
        feature: usize,
        threshold: HexF64,
        left: usize,
        right: usize,
        impurity_decrease: HexF64,
        samples: usize,
    },
    Leaf {
        value: HexF64,
        samples: usize,
    },
}

impl From<&Node> for NodeDoc {
    fn from(n: &Node) -> Self {
        match *n {
            Node::Internal {
                feature,
                threshold,
                left,
                right,
                impurity_decrease,
                samples,
            } => NodeDoc::Split {
                feature,
                threshold: HexF64(threshold),
                left,
                right,
                impurity_decrease: HexF64(impurity_decrease),
                samples,
            },
            Node::Leaf { value, samples } => NodeDoc::Leaf {
                value: HexF64(value),
                samples,
            },
        }
    }
}

impl From<&NodeDoc> for Node {
    fn from(n: &NodeDoc) -> Self {
        match *n {
            NodeDoc::Split {
                feature,
                threshold,
                left,
                right,
                impurity_decrease,
                samples,
            } => Node::Internal {
                feature,
                threshold: threshold.0,
                left,
                right,
                impurity_decrease: impurity_decrease.0,
                samples,
            },
            NodeDoc::Leaf { value, samples } => Node::Leaf { value: value.0, samples },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForestDocument {
    pub format: String,
    pub version: u32,
    pub config: ForestConfig,
    pub task: Task,
    pub feature_names: Vec<String>,
    pub feature_importances: Vec<HexF64>,
    /// Each tree as a flat preorder node list.
    pub trees: Vec<Vec<NodeDoc>>,
}

impl ForestDocument {
    pub fn new(model: &ForestModel) -> Self {
        Self {
            format: FOREST_FORMAT.into(),
            version: VERSION,
            config: model.config.clone(),
            task: model.task,
            feature_names: model.feature_names.clone(),
            feature_importances: model.feature_importances.iter().map(|&v| HexF64(v)).collect(),
            trees: model
                .trees
                .iter()
                .map(|t| t.nodes().iter().map(NodeDoc::from).collect())
                .collect(),
        }
    }

    pub fn into_model(self) -> Result<ForestModel> {
        check_header(&self.format, self.version, FOREST_FORMAT)?;
        let n_features = self.feature_names.len();
        let mut trees = Vec::with_capacity(self.trees.len());
        for (i, nodes) in self.trees.iter().enumerate() {
            if nodes.iter().any(|n| matches!(n, NodeDoc::Split { feature, .. } if *feature >= n_features)) {
                return Err(Error::Format(format!("tree {i} splits on an unknown feature")));
            }
            let tree = Tree::from_nodes(nodes.iter().map(Node::from).collect())
                .ok_or_else(|| Error::Format(format!("tree {i} has invalid child indices")))?;
            trees.push(tree);
        }
        ForestModel::from_parts(
            self.config,
            self.task,
            n_features,
            self.feature_names,
            trees,
            self.feature_importances.into_iter().map(|v| v.0).collect(),
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsDoc {
    pub mu: HexF64,
    pub sigma: HexF64,
}

impl From<&NormalizationParams> for ParamsDoc {
    fn from(p: &NormalizationParams) -> Self {
        Self {
            mu: HexF64(p.mu),
            sigma: HexF64(p.sigma),
        }
    }
}

impl ParamsDoc {
    fn into_params(self) -> Result<NormalizationParams> {
        NormalizationParams::new(self.mu.0, self.sigma.0)
            .map_err(|e| Error::Format(format!("bad normalization parameters: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HybridDocument {
    pub format: String,
    pub version: u32,
    pub target_name: String,
    pub exogenous_names: Vec<String>,
    pub window_len: usize,
    pub fusion: FusionMode,
    pub target_normalization: ParamsDoc,
    pub exogenous_normalization: Vec<ParamsDoc>,
    pub lstm: LstmDocument,
    pub forest: ForestDocument,
}

impl HybridDocument {
    pub fn new(model: &HybridModel) -> Self {
        Self {
            format: HYBRID_FORMAT.into(),
            version: VERSION,
            target_name: model.target_name.clone(),
            exogenous_names: model.exo_names.clone(),
            window_len: model.window_len,
            fusion: model.fusion,
            target_normalization: (&model.normalizer.target).into(),
            exogenous_normalization: model.normalizer.exogenous.iter().map(ParamsDoc::from).collect(),
            lstm: LstmDocument::new(&model.lstm_config, &model.lstm),
            forest: ForestDocument::new(&model.forest),
        }
    }

    pub fn into_model(self) -> Result<HybridModel> {
        check_header(&self.format, self.version, HYBRID_FORMAT)?;
        let (lstm_config, lstm) = self.lstm.into_model()?;
        let forest = self.forest.into_model()?;
        let normalizer = Normalizer {
            target: self.target_normalization.into_params()?,
            exogenous: self
                .exogenous_normalization
                .into_iter()
                .map(ParamsDoc::into_params)
                .collect::<Result<_>>()?,
        };
        HybridModel::from_parts(
            self.target_name,
            self.exogenous_names,
            self.window_len,
            self.fusion,
            normalizer,
            lstm_config,
            lstm,
            forest,
        )
    }
}

fn to_json<T: Serialize>(doc: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(doc)?;
    s.push('\n');
    Ok(s)
}

pub fn lstm_to_json(config: &LstmConfig, params: &LstmParameters) -> Result<String> {
    to_json(&LstmDocument::new(config, params))
}

pub fn lstm_from_json(text: &str) -> Result<(LstmConfig, LstmParameters)> {
    serde_json::from_str::<LstmDocument>(text)?.into_model()
}

pub fn forest_to_json(model: &ForestModel) -> Result<String> {
    to_json(&ForestDocument::new(model))
}

pub fn forest_from_json(text: &str) -> Result<ForestModel> {
    serde_json::from_str::<ForestDocument>(text)?.into_model()
}

pub fn hybrid_to_json(model: &HybridModel) -> Result<String> {
    to_json(&HybridDocument::new(model))
}

pub fn hybrid_from_json(text: &str) -> Result<HybridModel> {
    serde_json::from_str::<HybridDocument>(text)?.into_model()
}

pub fn save_hybrid(model: &HybridModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, hybrid_to_json(model)?).map_err(|e| Error::io(path, e))
}

pub fn load_hybrid(path: impl AsRef<Path>) -> Result<HybridModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    hybrid_from_json(&text)
}

/// `feature,importance` rows sorted by descending importance.
pub fn write_importance_csv<W: std::io::Write>(model: &ForestModel, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "importance"])?;
    for (name, v) in model.ranked_importance() {
        w.write_record([name, format!("{v}")])?;
    }
    w.flush().map_err(|e| Error::io("<importance>", e))?;
    Ok(())
}
