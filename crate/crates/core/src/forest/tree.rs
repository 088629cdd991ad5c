use rand::seq::index::sample;
use rand::Rng;

use super::split::{best_split_rows, Split};
use super::{ForestConfig, Task, TreeDepth};
use crate::matrix::Matrix;

/// A node of a fitted tree. Trees are stored as flat preorder node lists.
#[derive(Clone, Debug, PartialEq)]
pub enum Node {
    Internal {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        impurity_decrease: f64,
        samples: usize,
    },
    Leaf {
        value: f64,
        samples: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<Node>) -> Option<Self> {
        // children must point forward into the list so prediction terminates
        let valid = !nodes.is_empty()
            && nodes.iter().enumerate().all(|(i, n)| match n {
                Node::Internal { left, right, .. } => {
                    *left > i && *right > i && *left < nodes.len() && *right < nodes.len()
                }
                Node::Leaf { .. } => true,
            });
        valid.then_some(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { value, .. } => return *value,
                Node::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                    ..
                } => i = if x[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Internal { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Add `samples * impurity_decrease` of every split to its feature.
    pub(crate) fn accumulate_importance(&self, into: &mut [f64]) {
        for node in &self.nodes {
            if let Node::Internal {
                feature,
                impurity_decrease,
                samples,
                ..
            } = node
            {
                into[*feature] += *samples as f64 * impurity_decrease;
            }
        }
    }
}

fn leaf_value(labels: &[f64], rows: &[usize], task: Task) -> f64 {
    match task {
        Task::Regression => {
            let first = labels[rows[0]];
            if rows.iter().all(|&r| labels[r] == first) {
                return first;
            }
            let mean = crate::numeric::compensated_sum(rows.iter().map(|&r| labels[r])) / rows.len() as f64;
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
                (lo.min(labels[r]), hi.max(labels[r]))
            });
            mean.clamp(lo, hi)
        }
        Task::Classification { n_classes } => {
            let mut votes = vec![0usize; n_classes];
            for &r in rows {
                votes[labels[r] as usize] += 1;
            }
            argmax_first(&votes) as f64
        }
    }
}

/// Index of the largest count; ties go to the smallest index.
pub(crate) fn argmax_first(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

struct Grower<'a, R> {
    features: &'a Matrix,
    labels: &'a [f64],
    config: &'a ForestConfig,
    task: Task,
    n_candidates: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

impl<R: Rng> Grower<'_, R> {
    fn candidates(&mut self) -> Vec<usize> {
        let d = self.features.cols();
        if self.n_candidates >= d {
            return (0..d).collect();
        }
        let mut picked = sample(self.rng, d, self.n_candidates).into_vec();
        picked.sort_unstable();
        picked
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let samples = rows.len();
        let value = leaf_value(self.labels, &rows, self.task);
        self.nodes.push(Node::Leaf { value, samples });

        let depth_reached = matches!(self.config.max_depth, TreeDepth::Limited(d) if depth >= d);
        let first = self.labels[rows[0]];
        let constant = rows.iter().all(|&r| self.labels[r] == first);
        if depth_reached || samples < self.config.min_samples_split || constant {
            return id;
        }
        let candidates = self.candidates();
        let Some(Split {
            feature,
            threshold,
            impurity_decrease,
        }) = best_split_rows(self.features, self.labels, &rows, &candidates, self.task)
        else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .into_iter()
            .partition(|&r| self.features.get(r, feature) <= threshold);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = Node::Internal {
            feature,
            threshold,
            left,
            right,
            impurity_decrease,
            samples,
        };
        id
    }
}

/// Grow one tree on `rows` of the dataset (a bootstrap sample or all rows).
pub(crate) fn grow_tree<R: Rng>(
    features: &Matrix,
    labels: &[f64],
    rows: Vec<usize>,
    config: &ForestConfig,
    task: Task,
    rng: &mut R,
) -> Tree {
    let mut g = Grower {
        features,
        labels,
        config,
        task,
        n_candidates: config.max_features.resolve(features.cols()),
        rng,
        nodes: Vec::new(),
    };
    g.grow(rows, 0);
    Tree { nodes: g.nodes }
}

/// Regression tree on every row of the dataset.
pub fn build_tree<R: Rng>(features: &Matrix, labels: &[f64], config: &ForestConfig, rng: &mut R) -> Tree {
    assert!(features.rows() > 0 && features.rows() == labels.len(), "non-empty aligned dataset");
    grow_tree(
        features,
        labels,
        (0..features.rows()).collect(),
        config,
        Task::Regression,
        rng,
    )
}
