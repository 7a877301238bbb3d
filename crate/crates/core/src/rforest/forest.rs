use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{derive_seed, train_tree, RankedData, Tree, TreeNode, TreeParams};
use super::{weighted_argmax, ClassWeights, Dataset};
use crate::error::{Error, Result};
use crate::grid::{LandUseClass, ZoningGrid};
use crate::signal::FeatureMatrix;

pub const FOREST_FORMAT: &str = "landuse-forest";
pub const FOREST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub mtry: usize,
    pub min_leaf: usize,
    pub master_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 500, mtry: 7, min_leaf: 5, master_seed: 0 }
    }
}

impl ForestParams {
    pub fn tree_params(&self) -> TreeParams {
        TreeParams { mtry: self.mtry, min_leaf: self.min_leaf }
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.n_trees == 0 {
            return Err(Error::Config("forest.n_trees must be at least 1".into()));
        }
        if self.mtry == 0 || self.mtry > n_features {
            return Err(Error::Config(format!("forest.mtry must lie in 1..={n_features}, got {}", self.mtry)));
        }
        if self.min_leaf == 0 {
            return Err(Error::Config("forest.min_leaf must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub n_features: usize,
    pub classes: Vec<LandUseClass>,
    pub weights: ClassWeights,
    pub params: ForestParams,
    pub trees: Vec<Tree>,
}

/// Raw vote fractions and weighted scores, aligned with the forest's classes.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteTally {
    pub classes: Vec<LandUseClass>,
    pub fractions: Vec<f64>,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: LandUseClass,
    pub tally: VoteTally,
}

impl Forest {
    pub fn tree_seeds(&self) -> Vec<u64> {
        self.trees.iter().map(|t| t.seed).collect()
    }

    fn check_width(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!("feature row has width {}, forest expects {}", x.len(), self.n_features)));
        }
        Ok(())
    }

    /// Fraction of trees voting for each class.
    pub fn vote_fractions(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_width(x)?;
        let mut votes = vec![0u32; self.classes.len()];
        for t in &self.trees {
            votes[t.vote(x)] += 1;
        }
        let n = self.trees.len() as f64;
        Ok(votes.iter().map(|&v| v as f64 / n).collect())
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        let fractions = self.vote_fractions(x)?;
        let best = weighted_argmax(&fractions, &self.weights.0);
        let scores = fractions.iter().zip(&self.weights.0).map(|(f, w)| f * w).collect();
        Ok(Prediction {
            class: self.classes[best],
            tally: VoteTally { classes: self.classes.clone(), fractions, scores },
        })
    }

    pub fn with_weights(mut self, weights: ClassWeights) -> Result<Self> {
        weights.validate(self.classes.len())?;
        self.weights = weights;
        Ok(self)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        let file = ForestFile {
            format: FOREST_FORMAT.to_string(),
            version: FOREST_VERSION,
            n_features: self.n_features,
            classes: self.classes.clone(),
            weights: self.weights.0.clone(),
            params: self.params,
            trees: self
                .trees
                .iter()
                .map(|t| TreeFile {
                    seed: t.seed,
                    nodes: t
                        .nodes
                        .iter()
                        .map(|n| match n {
                            TreeNode::Split { feature, threshold, .. } => {
                                NodeFile::Split { feature: *feature, threshold: *threshold }
                            }
                            TreeNode::Leaf { histogram, .. } => NodeFile::Leaf { leaf: histogram.clone() },
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_writer(w, &file)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self> {
        let file: ForestFile = serde_json::from_reader(r)?;
        if file.format != FOREST_FORMAT || file.version != FOREST_VERSION {
            return Err(Error::Parse(format!(
                "unsupported forest artifact {} v{} (expected {FOREST_FORMAT} v{FOREST_VERSION})",
                file.format, file.version
            )));
        }
        let weights = ClassWeights(file.weights);
        weights.validate(file.classes.len())?;
        let mut trees = Vec::with_capacity(file.trees.len());
        for t in file.trees {
            let mut nodes = Vec::with_capacity(t.nodes.len());
            for n in t.nodes {
                nodes.push(match n {
                    NodeFile::Split { feature, threshold } => {
                        if feature >= file.n_features {
                            return Err(Error::Parse(format!("split on feature {feature} out of range")));
                        }
                        TreeNode::Split { feature, threshold, right: 0 }
                    }
                    NodeFile::Leaf { leaf } => {
                        if leaf.len() != file.classes.len() {
                            return Err(Error::Parse("leaf histogram length differs from class count".into()));
                        }
                        TreeNode::leaf(leaf)
                    }
                });
            }
            trees.push(Tree::from_preorder(t.seed, nodes)?);
        }
        if trees.is_empty() {
            return Err(Error::Parse("forest has no trees".into()));
        }
        Ok(Forest { n_features: file.n_features, classes: file.classes, weights, params: file.params, trees })
    }
}

/// On-disk forest schema: trees as preorder node arrays, a split's left child
/// immediately follows it and its right child follows the left subtree.
#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    n_features: usize,
    classes: Vec<LandUseClass>,
    weights: Vec<f64>,
    params: ForestParams,
    trees: Vec<TreeFile>,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    seed: u64,
    nodes: Vec<NodeFile>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum NodeFile {
    Split { feature: usize, threshold: f64 },
    Leaf { leaf: Vec<u32> },
}

/// Trains `params.n_trees` trees on `rows` of `ranked`. Tree `k` is seeded with
/// `derive_seed(master_seed, k)`, so the forest does not depend on scheduling.
pub fn train_forest_on(
    ranked: &RankedData,
    classes: &[LandUseClass],
    rows: &[u32],
    params: &ForestParams,
    weights: ClassWeights,
) -> Result<Forest> {
    params.validate(ranked.n_features)?;
    weights.validate(classes.len())?;
    if rows.len() < 2 {
        return Err(Error::Argument(format!("need at least 2 training rows, got {}", rows.len())));
    }
    let tp = params.tree_params();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|k| train_tree(ranked, rows, &tp, derive_seed(params.master_seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    Ok(Forest { n_features: ranked.n_features, classes: classes.to_vec(), weights, params: *params, trees })
}

/// Trains on every feature row whose zoning class is in `subset`.
pub fn train_forest(
    fm: &FeatureMatrix,
    zoning: &ZoningGrid,
    subset: &[LandUseClass],
    params: &ForestParams,
    weights: ClassWeights,
) -> Result<Forest> {
    let ds = Dataset::from_features(fm, zoning, subset)?;
    let ranked = RankedData::new(&ds);
    let rows: Vec<u32> = (0..ds.len() as u32).collect();
    train_forest_on(&ranked, &ds.classes, &rows, params, weights)
}

pub fn predict_matrix(forest: &Forest, fm: &FeatureMatrix) -> Result<Vec<Prediction>> {
    fm.rows.par_iter().map(|row| forest.predict(row)).collect()
}
