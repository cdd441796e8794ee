//! CART random forest classifier with full bootstrap bookkeeping.
//!
//! Every tree keeps the in-bag multiplicity `c_j(t)` of each training row,
//! and leaves store bootstrap-weighted class counts. Those two pieces are
//! what the proximity module needs; predictions are the mean of the
//! per-tree leaf distributions.

mod regions;
mod train;

pub use regions::{Region, SplitRecord};
pub use train::fit;

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of features sampled at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `ceil(sqrt(d))`
    #[default]
    Sqrt,
    All,
    Count(usize),
}

impl FeaturesPerSplit {
    pub fn resolve(self, n_features: usize) -> usize {
        let k = match self {
            FeaturesPerSplit::Sqrt => (n_features as f64).sqrt().ceil() as usize,
            FeaturesPerSplit::All => n_features,
            FeaturesPerSplit::Count(k) => k,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub features_per_split: FeaturesPerSplit,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 1000,
            max_depth: 5,
            features_per_split: FeaturesPerSplit::Sqrt,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    /// `x[feature] <= threshold` goes to `left`.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Bootstrap-weighted class counts of the in-bag rows in this leaf.
    Leaf { counts: Vec<u32> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    /// Tree from nodes stored in any order, root at index 0.
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Argument("tree has no nodes".into()));
        }
        for node in &nodes {
            match node {
                Node::Split {
                    left, right, threshold, ..
                } => {
                    if *left >= nodes.len() || *right >= nodes.len() || *left == 0 || *right == 0 {
                        return Err(Error::Argument("split child index out of range".into()));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::Argument("non-finite split threshold".into()));
                    }
                }
                Node::Leaf { counts } => {
                    if counts.iter().all(|&c| c == 0) {
                        return Err(Error::Argument("leaf with zero bootstrap mass".into()));
                    }
                }
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Id of the leaf that `x` routes to (`<=` goes left).
    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if x[*feature] <= *threshold { *left } else { *right },
                Node::Leaf { .. } => return id,
            }
        }
    }

    pub fn leaf_counts(&self, leaf: usize) -> &[u32] {
        match &self.nodes[leaf] {
            Node::Leaf { counts } => counts,
            Node::Split { .. } => panic!("node {leaf} is not a leaf"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }

    fn add_distribution(&self, leaf: usize, out: &mut [f64]) {
        let counts = self.leaf_counts(leaf);
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        let total = total as f64;
        for (o, &c) in out.iter_mut().zip(counts) {
            *o += f64::from(c) / total;
        }
    }
}

/// A trained ensemble together with its bootstrap record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<Tree>,
    /// `in_bag[t][j]` = number of times training row `j` was drawn for tree `t`.
    in_bag: Vec<Vec<u32>>,
    classes: Vec<String>,
    n_features: usize,
    params: ForestParams,
}

const FORMAT: &str = "gapcf-forest";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ForestFile {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: Forest,
}

impl Forest {
    /// Assembles a forest from explicit trees and bootstrap counts.
    pub fn from_parts(
        trees: Vec<Tree>,
        in_bag: Vec<Vec<u32>>,
        classes: Vec<String>,
        n_features: usize,
        params: ForestParams,
    ) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Argument("forest has no trees".into()));
        }
        if in_bag.len() != trees.len() {
            return Err(Error::Argument(format!(
                "{} trees but {} bootstrap records",
                trees.len(),
                in_bag.len()
            )));
        }
        let n_train = in_bag[0].len();
        if in_bag.iter().any(|b| b.len() != n_train) {
            return Err(Error::Argument("bootstrap records differ in length".into()));
        }
        for tree in &trees {
            for node in tree.nodes() {
                match node {
                    Node::Split { feature, .. } if *feature >= n_features => {
                        return Err(Error::Argument(format!("split on feature {feature} of {n_features}")))
                    }
                    Node::Leaf { counts } if counts.len() != classes.len() => {
                        return Err(Error::Argument("leaf class count width mismatch".into()))
                    }
                    _ => {}
                }
            }
        }
        Ok(Self {
            trees,
            in_bag,
            classes,
            n_features,
            params,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Number of training rows the bootstrap record covers.
    pub fn n_train(&self) -> usize {
        self.in_bag[0].len()
    }

    pub fn in_bag(&self, tree: usize) -> &[u32] {
        &self.in_bag[tree]
    }

    pub fn in_bag_count(&self, tree: usize, row: usize) -> u32 {
        self.in_bag[tree][row]
    }

    /// Training rows that tree `t` never drew.
    pub fn oob_rows(&self, tree: usize) -> impl Iterator<Item = usize> + '_ {
        self.in_bag[tree]
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
    }

    /// Trees for which training row `i` is out-of-bag.
    pub fn oob_trees(&self, row: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.trees.len()).filter(move |&t| self.in_bag[t][row] == 0)
    }

    /// True when every tree is a single leaf (e.g. single-class training data).
    pub fn is_degenerate(&self) -> bool {
        self.trees.iter().all(|t| t.nodes().len() == 1)
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!(
                "instance has {} features, forest expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    pub fn leaf_index(&self, tree: usize, x: &[f64]) -> Result<usize> {
        self.check_dim(x)?;
        let t = self
            .trees
            .get(tree)
            .ok_or_else(|| Error::Argument(format!("tree {tree} of {}", self.trees.len())))?;
        Ok(t.leaf_of(x))
    }

    /// Mean over trees of the leaf class distributions.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        Ok(self.proba_over(x, 0..self.trees.len()))
    }

    pub(crate) fn proba_over(&self, x: &[f64], trees: impl Iterator<Item = usize>) -> Vec<f64> {
        let mut p = vec![0.0; self.classes.len()];
        let mut used = 0usize;
        for t in trees {
            let tree = &self.trees[t];
            tree.add_distribution(tree.leaf_of(x), &mut p);
            used += 1;
        }
        let used = used as f64;
        p.iter_mut().for_each(|v| *v /= used);
        p
    }

    /// Argmax of [`Forest::predict_proba`], ties to the lowest class index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Probability vector averaged only over the trees for which training row
    /// `row` is out-of-bag. `x` must be that row's feature vector.
    pub fn oob_predict_proba(&self, row: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dim(x)?;
        if row >= self.n_train() {
            return Err(Error::Argument(format!("training row {row} of {}", self.n_train())));
        }
        if self.oob_trees(row).next().is_none() {
            return Err(Error::NoOob(row));
        }
        Ok(self.proba_over(x, self.oob_trees(row)))
    }

    pub fn to_json(&self) -> Result<String> {
        let file = ForestFile {
            format: FORMAT.into(),
            version: VERSION,
            forest: self.clone(),
        };
        serde_json::to_string(&file).map_err(|e| Error::Serialization(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ForestFile = serde_json::from_str(text).map_err(|e| Error::Serialization(e.to_string()))?;
        if file.format != FORMAT {
            return Err(Error::Serialization(format!("unknown format '{}'", file.format)));
        }
        if file.version != VERSION {
            return Err(Error::Serialization(format!("unsupported version {}", file.version)));
        }
        let f = file.forest;
        Forest::from_parts(f.trees, f.in_bag, f.classes, f.n_features, f.params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
pub(crate) mod test_forests {
    use super::*;

    pub fn leaf(counts: &[u32]) -> Node {
        Node::Leaf {
            counts: counts.to_vec(),
        }
    }

    pub fn split(feature: usize, threshold: f64, left: usize, right: usize) -> Node {
        Node::Split {
            feature,
            threshold,
            left,
            right,
        }
    }

    /// Two stumps over 4 training rows (1-D: x = 0, 1, 2, 3; labels 0, 0, 1, 1).
    ///
    /// Tree 0 splits at 1.5 and drew rows {0, 0, 2, 3}; row 1 is OOB.
    /// Tree 1 splits at 2.5 and drew rows {1, 2, 2, 3}; row 0 is OOB.
    pub fn two_stumps() -> Forest {
        let t0 = Tree::from_nodes(vec![split(0, 1.5, 1, 2), leaf(&[2, 0]), leaf(&[0, 2])]).unwrap();
        let t1 = Tree::from_nodes(vec![split(0, 2.5, 1, 2), leaf(&[1, 2]), leaf(&[0, 1])]).unwrap();
        Forest::from_parts(
            vec![t0, t1],
            vec![vec![2, 0, 1, 1], vec![0, 1, 2, 1]],
            vec!["a".into(), "b".into()],
            1,
            ForestParams::default(),
        )
        .unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::test_forests::*;
    use super::*;

    fn single_leaf_forest(counts: &[u32], n_trees: usize) -> Forest {
        let trees = (0..n_trees)
            .map(|_| Tree::from_nodes(vec![leaf(counts)]).unwrap())
            .collect();
        Forest::from_parts(
            trees,
            vec![vec![1; 4]; n_trees],
            vec!["A".into(), "B".into()],
            2,
            ForestParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn identical_single_leaf_trees() {
        let f = single_leaf_forest(&[3, 1], 3);
        assert_eq!(f.predict_proba(&[0.0, 7.0]).unwrap(), vec![0.75, 0.25]);
        assert_eq!(f.leaf_index(1, &[9.0, -9.0]).unwrap(), 0);
        assert!(f.is_degenerate());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let f = single_leaf_forest(&[3, 1], 1);
        assert!(matches!(f.predict_proba(&[1.0]), Err(Error::Argument(_))));
        assert!(matches!(f.leaf_index(0, &[1.0, 2.0, 3.0]), Err(Error::Argument(_))));
    }

    #[test]
    fn stump_boundary_goes_left() {
        let t = Tree::from_nodes(vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])]).unwrap();
        assert_eq!(t.leaf_of(&[0.5]), 1);
        assert_eq!(t.leaf_of(&[0.5000001]), 2);
    }

    #[test]
    fn depth_two_manual_descent() {
        // root: f0 <= 2 ; left: f1 <= 5 ; right: leaf
        let t = Tree::from_nodes(vec![
            split(0, 2.0, 1, 2),
            split(1, 5.0, 3, 4),
            leaf(&[0, 4]),
            leaf(&[3, 0]),
            leaf(&[1, 1]),
        ])
        .unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.leaf_of(&[1.0, 4.0]), 3);
        assert_eq!(t.leaf_of(&[1.0, 6.0]), 4);
        assert_eq!(t.leaf_of(&[2.5, 0.0]), 2);
    }

    #[test]
    fn hand_built_two_stump_probabilities() {
        let t0 = Tree::from_nodes(vec![split(0, 1.5, 1, 2), leaf(&[2, 1]), leaf(&[0, 1])]).unwrap();
        let t1 = Tree::from_nodes(vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[1, 2])]).unwrap();
        let f = Forest::from_parts(
            vec![t0, t1],
            vec![vec![1, 1, 1, 1], vec![1, 1, 1, 1]],
            vec!["a".into(), "b".into()],
            1,
            ForestParams::default(),
        )
        .unwrap();
        // x = 1: tree0 left (2/3, 1/3), tree1 right (1/3, 2/3) -> (1/2, 1/2)
        let p = f.predict_proba(&[1.0]).unwrap();
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15);
        // x = 0: tree0 left (2/3, 1/3), tree1 left (1, 0) -> (5/6, 1/6)
        let p = f.predict_proba(&[0.0]).unwrap();
        assert!((p[0] - 5.0 / 6.0).abs() < 1e-15);
        // x = 3: (0, 1) and (1/3, 2/3) -> (1/6, 5/6)
        let p = f.predict_proba(&[3.0]).unwrap();
        assert!((p[1] - 5.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn oob_prediction_uses_only_oob_trees() {
        let t0 = Tree::from_nodes(vec![leaf(&[3, 1])]).unwrap();
        let t1 = Tree::from_nodes(vec![leaf(&[1, 1])]).unwrap();
        let f = Forest::from_parts(
            vec![t0, t1],
            vec![vec![0, 2, 2], vec![1, 1, 1]],
            vec!["a".into(), "b".into()],
            1,
            ForestParams::default(),
        )
        .unwrap();
        // Row 0 is only OOB for tree 0.
        assert_eq!(f.oob_predict_proba(0, &[0.0]).unwrap(), vec![0.75, 0.25]);
        assert!(matches!(f.oob_predict_proba(1, &[0.0]), Err(Error::NoOob(1))));
    }

    #[test]
    fn json_round_trip_is_exact() {
        let t0 = Tree::from_nodes(vec![split(0, 0.1 + 0.2, 1, 2), leaf(&[2, 1]), leaf(&[0, 1])]).unwrap();
        let f = Forest::from_parts(
            vec![t0],
            vec![vec![2, 0, 1, 1]],
            vec!["a".into(), "b".into()],
            1,
            ForestParams::default(),
        )
        .unwrap();
        let back = Forest::from_json(&f.to_json().unwrap()).unwrap();
        assert_eq!(back, f);
        assert!(Forest::from_json(&f.to_json().unwrap().replace("gapcf-forest", "other")).is_err());
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.5, 0.5]), 0);
        assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
    }
}
