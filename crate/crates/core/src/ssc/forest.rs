//! Bagged CART forest for the two-class standstill problem.
//!
//! Trees are grown on bootstrap resamples with Gini splits over a random
//! feature subset at every node, and stop when a split would leave fewer than
//! `min_leaf_size` samples on either side. Each tree draws from its own
//! ChaCha stream derived from the forest seed, so trees can be grown in
//! parallel without changing the result.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::SscFeatureVector;
use crate::error::{Error, Result};
use crate::types::MotionState;

/// A feature vector with its ground-truth class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelledSample {
    pub features: SscFeatureVector,
    pub label: MotionState,
}

/// Forest hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf_size: usize,
    /// Features tried per split; `None` means `ceil(sqrt(n_features))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 12,
            min_leaf_size: 5,
            max_features: None,
        }
    }
}

impl ForestParams {
    fn features_per_split(&self, n_features: usize) -> usize {
        self.max_features
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features)
    }
}

/// One node of a tree. Samples with `x[feature] <= threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        standstill: u32,
        motion: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    /// Class vote of this tree; a tied leaf votes `Motion`.
    pub fn vote(&self, x: &[f64]) -> MotionState {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
                Node::Leaf { standstill, motion } => {
                    return if standstill > motion {
                        MotionState::Standstill
                    } else {
                        MotionState::Motion
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                Node::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    fn validate(&self, n_features: usize) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Input("tree without nodes".into()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split {
                feature,
                threshold,
                left,
                right,
            } = *node
            {
                // children always come after their parent, which rules out cycles
                if feature >= n_features
                    || !threshold.is_finite()
                    || left <= i
                    || right <= i
                    || left >= self.nodes.len()
                    || right >= self.nodes.len()
                {
                    return Err(Error::Input(format!("invalid split node {i}")));
                }
            }
        }
        Ok(())
    }
}

/// Forest decision for one feature vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Classification {
    pub state: MotionState,
    /// Fraction of trees voting `Standstill`.
    pub standstill_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForestModel {
    pub n_features: usize,
    pub params: ForestParams,
    pub seed: u64,
    pub trees: Vec<DecisionTree>,
}

impl RandomForestModel {
    /// Assembles a model from already-built trees.
    pub fn from_trees(n_features: usize, trees: Vec<DecisionTree>) -> Result<Self> {
        let model = Self {
            n_features,
            params: ForestParams {
                n_trees: trees.len(),
                ..ForestParams::default()
            },
            seed: 0,
            trees,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::Input("forest without trees".into()));
        }
        self.trees
            .iter()
            .try_for_each(|t| t.validate(self.n_features))
    }

    /// Majority vote over the trees. An even split resolves to `Motion`.
    pub fn classify(&self, x: &[f64]) -> Classification {
        debug_assert_eq!(x.len(), self.n_features);
        let standstill = self
            .trees
            .iter()
            .filter(|t| t.vote(x) == MotionState::Standstill)
            .count();
        let state = if 2 * standstill > self.trees.len() {
            MotionState::Standstill
        } else {
            MotionState::Motion
        };
        Classification {
            state,
            standstill_fraction: standstill as f64 / self.trees.len() as f64,
        }
    }

    pub fn classify_features(&self, f: &SscFeatureVector) -> Classification {
        self.classify(&f.values)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(s)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}

/// Column-major copy of the training set.
struct Dataset {
    columns: Vec<Vec<f64>>,
    labels: Vec<MotionState>,
}

impl Dataset {
    fn new(data: &[LabelledSample]) -> Result<Self> {
        let n_features = data[0].features.len();
        let mut columns = vec![Vec::with_capacity(data.len()); n_features];
        for (row, s) in data.iter().enumerate() {
            if s.features.len() != n_features {
                return Err(Error::Input(format!(
                    "sample {row} has {} features, expected {n_features}",
                    s.features.len()
                )));
            }
            if let Some(bad) = s.features.values.iter().find(|v| !v.is_finite()) {
                return Err(Error::Input(format!("sample {row} has feature {bad}")));
            }
            for (c, v) in columns.iter_mut().zip(&s.features.values) {
                c.push(*v);
            }
        }
        Ok(Self {
            columns,
            labels: data.iter().map(|s| s.label).collect(),
        })
    }

    fn n_features(&self) -> usize {
        self.columns.len()
    }

    fn len(&self) -> usize {
        self.labels.len()
    }
}

/// Trains a forest. Deterministic in `seed`.
pub fn train(
    data: &[LabelledSample],
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForestModel> {
    if data.is_empty() {
        return Err(Error::DegenerateTraining("no samples".into()));
    }
    if params.n_trees == 0 || params.min_leaf_size == 0 {
        return Err(Error::Config(
            "n_trees and min_leaf_size must be positive".into(),
        ));
    }
    let first = data[0].label;
    if data.iter().all(|s| s.label == first) {
        return Err(Error::DegenerateTraining(format!(
            "all samples are {first:?}"
        )));
    }
    let ds = Dataset::new(data)?;
    let mtry = params.features_per_split(ds.n_features());
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            grow_tree(&ds, params.min_leaf_size, mtry, &mut rng)
        })
        .collect();
    Ok(RandomForestModel {
        n_features: ds.n_features(),
        params: *params,
        seed,
        trees,
    })
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn grow_tree(ds: &Dataset, min_leaf: usize, mtry: usize, rng: &mut ChaCha8Rng) -> DecisionTree {
    let n = ds.len();
    let bootstrap: Vec<u32> = (0..n).map(|_| rng.random_range(0..n as u32)).collect();

    let mut nodes = Vec::new();
    nodes.push(Node::Leaf {
        standstill: 0,
        motion: 0,
    });
    let mut stack = vec![(0usize, bootstrap)];
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(n);

    while let Some((id, idx)) = stack.pop() {
        let motion = idx
            .iter()
            .filter(|&&i| ds.labels[i as usize] == MotionState::Motion)
            .count();
        let standstill = idx.len() - motion;
        let leaf = Node::Leaf {
            standstill: standstill as u32,
            motion: motion as u32,
        };
        if motion == 0 || standstill == 0 || idx.len() < 2 * min_leaf {
            nodes[id] = leaf;
            continue;
        }
        let parent = gini_mass(standstill, motion);
        let mut best: Option<BestSplit> = None;
        for f in index::sample(rng, ds.n_features(), mtry) {
            let col = &ds.columns[f];
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| {
                (
                    col[i as usize],
                    ds.labels[i as usize] == MotionState::Motion,
                )
            }));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lm, mut ls) = (0usize, 0usize);
            for k in 0..pairs.len() - 1 {
                if pairs[k].1 {
                    lm += 1;
                } else {
                    ls += 1;
                }
                let nl = k + 1;
                let nr = pairs.len() - nl;
                if nl < min_leaf || nr < min_leaf || pairs[k].0 == pairs[k + 1].0 {
                    continue;
                }
                let score = gini_mass(ls, lm) + gini_mass(standstill - ls, motion - lm);
                if best.as_ref().is_none_or(|b| score < b.score) {
                    let (lo, hi) = (pairs[k].0, pairs[k + 1].0);
                    let mid = lo + (hi - lo) / 2.0;
                    let threshold = if mid < hi { mid } else { lo };
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        score,
                    });
                }
            }
        }
        match best {
            Some(b) if b.score < parent - 1e-12 => {
                let col = &ds.columns[b.feature];
                let (l, r): (Vec<u32>, Vec<u32>) = idx
                    .into_iter()
                    .partition(|&i| col[i as usize] <= b.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf {
                    standstill: 0,
                    motion: 0,
                });
                nodes.push(Node::Leaf {
                    standstill: 0,
                    motion: 0,
                });
                nodes[id] = Node::Split {
                    feature: b.feature,
                    threshold: b.threshold,
                    left,
                    right,
                };
                stack.push((right, r));
                stack.push((left, l));
            }
            _ => nodes[id] = leaf,
        }
    }
    DecisionTree { nodes }
}

/// Sample-weighted Gini impurity `n · (1 - p² - q²) = 2ab/n`.
fn gini_mass(a: usize, b: usize) -> f64 {
    let n = a + b;
    if n == 0 {
        0.0
    } else {
        2.0 * a as f64 * b as f64 / n as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(values: Vec<f64>, label: MotionState) -> LabelledSample {
        LabelledSample {
            features: SscFeatureVector { t: 0.0, values },
            label,
        }
    }

    fn separable() -> Vec<LabelledSample> {
        (0..200)
            .map(|i| {
                let x = i as f64;
                let label = if x < 100.0 {
                    MotionState::Standstill
                } else {
                    MotionState::Motion
                };
                sample(vec![x], label)
            })
            .collect()
    }

    #[test]
    fn separable_data_is_learned() {
        let data = separable();
        let model = train(&data, &ForestParams::default(), 7).unwrap();
        assert_eq!(model.n_trees(), 12);
        let correct = data
            .iter()
            .filter(|s| model.classify(&s.features.values).state == s.label)
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable();
        let a = train(&data, &ForestParams::default(), 42).unwrap();
        let b = train(&data, &ForestParams::default(), 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<_> = (0..20)
            .map(|i| sample(vec![i as f64], MotionState::Motion))
            .collect();
        assert!(matches!(
            train(&data, &ForestParams::default(), 1),
            Err(Error::DegenerateTraining(_))
        ));
        assert!(train(&[], &ForestParams::default(), 1).is_err());
    }

    #[test]
    fn leaves_respect_min_size() {
        let data: Vec<_> = (0..300)
            .map(|i| {
                let x = ((i * 37) % 101) as f64;
                let label = if (i * 13) % 7 < 3 {
                    MotionState::Standstill
                } else {
                    MotionState::Motion
                };
                sample(vec![x, (i % 11) as f64], label)
            })
            .collect();
        let model = train(&data, &ForestParams::default(), 3).unwrap();
        for tree in &model.trees {
            for node in &tree.nodes {
                if let Node::Leaf { standstill, motion } = node {
                    assert!(standstill + motion >= 5);
                }
            }
        }
        model.validate().unwrap();
    }

    #[test]
    fn even_vote_resolves_to_motion() {
        let leaf = |standstill, motion| DecisionTree {
            nodes: vec![Node::Leaf { standstill, motion }],
        };
        let model = RandomForestModel::from_trees(1, vec![leaf(5, 0), leaf(0, 5)]).unwrap();
        let c = model.classify(&[0.0]);
        assert_eq!(c.state, MotionState::Motion);
        assert_eq!(c.standstill_fraction, 0.5);
        // tied leaf counts vote motion as well
        let model = RandomForestModel::from_trees(1, vec![leaf(3, 3)]).unwrap();
        assert_eq!(model.classify(&[0.0]).state, MotionState::Motion);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let model = train(&separable(), &ForestParams::default(), 5).unwrap();
        let back = RandomForestModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(model, back);

        let cyclic = DecisionTree {
            nodes: vec![Node::Split {
                feature: 0,
                threshold: 1.0,
                left: 0,
                right: 0,
            }],
        };
        assert!(RandomForestModel::from_trees(1, vec![cyclic]).is_err());
        let bad_feature = DecisionTree {
            nodes: vec![
                Node::Split {
                    feature: 3,
                    threshold: 1.0,
                    left: 1,
                    right: 2,
                },
                Node::Leaf {
                    standstill: 1,
                    motion: 0,
                },
                Node::Leaf {
                    standstill: 0,
                    motion: 1,
                },
            ],
        };
        assert!(RandomForestModel::from_trees(2, vec![bad_feature]).is_err());
    }

    #[test]
    fn classify_is_pure() {
        let model = train(&separable(), &ForestParams::default(), 9).unwrap();
        let a = model.classify(&[42.0]);
        let b = model.classify(&[42.0]);
        assert_eq!(a, b);
    }
}
