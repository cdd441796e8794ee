use serde::{Deserialize, Serialize};

use super::{Distance, ProximityMatrix};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;

/// Multiplicity attached to each reference row inside a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceWeights {
    /// The reference set is the training set: row `j` weighs `c_j(t)` in
    /// tree `t`, and row `i`'s own proximities use only its out-of-bag trees.
    #[default]
    Bootstrap,
    /// Any other reference set (e.g. the test set): every row weighs 1 in
    /// every tree, and a row's own proximities leave itself out.
    Unit,
}

/// RF-GAP proximity engine over a fixed reference set.
///
/// For a reference row `i`,
/// `p(i, j) = 1/|S_i| * sum_{t in S_i} c_j(t) [j shares i's leaf in t] / |M_i(t)|`
/// where `S_i` are the trees in which `i` is out-of-bag and `|M_i(t)|` is
/// the in-bag multiplicity of that leaf. A query point that was never
/// trained on is out-of-bag in every tree, so its row averages over all
/// trees.
pub struct RfGap<'a> {
    forest: &'a Forest,
    weights: ReferenceWeights,
    n: usize,
    /// `leaf_of[t][j]`
    leaf_of: Vec<Vec<u32>>,
    /// `members[t][leaf]` = reference rows with positive weight in the leaf.
    members: Vec<Vec<Vec<(u32, u32)>>>,
    /// `rows_in_leaf[t][leaf]` = every reference row routed to the leaf.
    rows_in_leaf: Vec<Vec<Vec<u32>>>,
    /// Total weight per leaf.
    mass: Vec<Vec<u32>>,
    /// `|S_i|`
    eligible_trees: Vec<u32>,
}

impl<'a> RfGap<'a> {
    pub fn new(forest: &'a Forest, reference: &Dataset, weights: ReferenceWeights) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        if reference.n_features() != forest.n_features() {
            return Err(Error::Argument(format!(
                "reference has {} features, forest expects {}",
                reference.n_features(),
                forest.n_features()
            )));
        }
        let n = reference.n_rows();
        if weights == ReferenceWeights::Bootstrap && n != forest.n_train() {
            return Err(Error::Consistency(format!(
                "bootstrap-weighted reference must be the {} training rows, got {n}",
                forest.n_train()
            )));
        }
        let t_count = forest.n_trees();
        let mut leaf_of = Vec::with_capacity(t_count);
        let mut members = Vec::with_capacity(t_count);
        let mut rows_in_leaf = Vec::with_capacity(t_count);
        let mut mass = Vec::with_capacity(t_count);
        for (t, tree) in forest.trees().iter().enumerate() {
            let n_nodes = tree.nodes().len();
            let mut lo = Vec::with_capacity(n);
            let mut mem = vec![Vec::new(); n_nodes];
            let mut all = vec![Vec::new(); n_nodes];
            let mut m = vec![0u32; n_nodes];
            for j in 0..n {
                let leaf = tree.leaf_of(reference.row(j));
                lo.push(leaf as u32);
                all[leaf].push(j as u32);
                let w = match weights {
                    ReferenceWeights::Bootstrap => forest.in_bag_count(t, j),
                    ReferenceWeights::Unit => 1,
                };
                if w > 0 {
                    mem[leaf].push((j as u32, w));
                    m[leaf] += w;
                }
            }
            leaf_of.push(lo);
            members.push(mem);
            rows_in_leaf.push(all);
            mass.push(m);
        }
        let mut gap = Self {
            forest,
            weights,
            n,
            leaf_of,
            members,
            rows_in_leaf,
            mass,
            eligible_trees: Vec::new(),
        };
        gap.eligible_trees = (0..n)
            .map(|i| (0..t_count).filter(|&t| gap.eligible(t, i)).count() as u32)
            .collect();
        Ok(gap)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn weights(&self) -> ReferenceWeights {
        self.weights
    }

    fn weight(&self, t: usize, j: usize) -> u32 {
        match self.weights {
            ReferenceWeights::Bootstrap => self.forest.in_bag_count(t, j),
            ReferenceWeights::Unit => 1,
        }
    }

    /// Leaf mass of row `i`'s leaf in tree `t` with `i` itself removed.
    fn mass_without(&self, t: usize, i: usize) -> u32 {
        self.mass[t][self.leaf_of[t][i] as usize] - self.weight(t, i)
    }

    /// Whether tree `t` belongs to `S_i`.
    fn eligible(&self, t: usize, i: usize) -> bool {
        match self.weights {
            ReferenceWeights::Bootstrap => self.forest.in_bag_count(t, i) == 0,
            ReferenceWeights::Unit => self.mass_without(t, i) > 0,
        }
    }

    /// `|S_i|`
    pub fn oob_tree_count(&self, i: usize) -> usize {
        self.eligible_trees[i] as usize
    }

    /// Proximity row `p(i, .)` of reference row `i`.
    pub fn row(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.n {
            return Err(Error::Argument(format!("reference row {i} of {}", self.n)));
        }
        let s = self.eligible_trees[i];
        if s == 0 {
            return Err(Error::NoOob(i));
        }
        let mut p = vec![0.0; self.n];
        for t in 0..self.forest.n_trees() {
            if !self.eligible(t, i) {
                continue;
            }
            let leaf = self.leaf_of[t][i] as usize;
            let m = f64::from(self.mass_without(t, i));
            for &(k, w) in &self.members[t][leaf] {
                if k as usize != i {
                    p[k as usize] += f64::from(w) / m;
                }
            }
        }
        let s = f64::from(s);
        p.iter_mut().for_each(|v| *v /= s);
        Ok(p)
    }

    /// Proximity column `p(., i)`; rows without eligible trees contribute 0.
    pub fn column(&self, i: usize) -> Result<Vec<f64>> {
        if i >= self.n {
            return Err(Error::Argument(format!("reference row {i} of {}", self.n)));
        }
        let mut col = vec![0.0; self.n];
        for t in 0..self.forest.n_trees() {
            let w_i = self.weight(t, i);
            if w_i == 0 {
                continue;
            }
            let leaf = self.leaf_of[t][i] as usize;
            for &j in &self.rows_in_leaf[t][leaf] {
                let j = j as usize;
                if j == i || !self.eligible(t, j) {
                    continue;
                }
                let m = f64::from(self.mass_without(t, j));
                col[j] += f64::from(w_i) / m / f64::from(self.eligible_trees[j]);
            }
        }
        Ok(col)
    }

    /// Proximity row of an unseen point: every tree counts as out-of-bag.
    pub fn query_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.forest.n_features() {
            return Err(Error::Argument(format!(
                "query has {} features, forest expects {}",
                x.len(),
                self.forest.n_features()
            )));
        }
        let mut p = vec![0.0; self.n];
        let mut used = 0u32;
        for (t, tree) in self.forest.trees().iter().enumerate() {
            let leaf = tree.leaf_of(x);
            let m = self.mass[t][leaf];
            if m == 0 {
                continue;
            }
            used += 1;
            let m = f64::from(m);
            for &(k, w) in &self.members[t][leaf] {
                p[k as usize] += f64::from(w) / m;
            }
        }
        if used == 0 {
            return Err(Error::Degenerate("query shares no leaf with the reference set".into()));
        }
        let used = f64::from(used);
        p.iter_mut().for_each(|v| *v /= used);
        Ok(p)
    }

    /// Full matrix; rows without eligible trees stay zero and are flagged.
    pub fn matrix(&self, cap: usize) -> Result<ProximityMatrix> {
        if self.n > cap {
            return Err(Error::Argument(format!(
                "{} reference rows exceed the dense matrix cap of {cap}; subsample the reference set",
                self.n
            )));
        }
        let mut rows = Vec::with_capacity(self.n);
        let mut no_oob = Vec::new();
        for i in 0..self.n {
            match self.row(i) {
                Ok(r) => rows.push(r),
                Err(Error::NoOob(_)) => {
                    no_oob.push(i);
                    rows.push(vec![0.0; self.n]);
                }
                Err(e) => return Err(e),
            }
        }
        let mut m = ProximityMatrix::from_rows(rows)?;
        m.no_oob = no_oob;
        Ok(m)
    }

    /// Distances from reference row `i` to every reference row.
    pub fn distances_from_row(&self, i: usize) -> Result<Vec<Distance>> {
        let row = self.row(i)?;
        let col = self.column(i)?;
        let mut d: Vec<Distance> = row
            .iter()
            .zip(&col)
            .map(|(&a, &b)| Distance::from_proximities(a, b))
            .collect();
        d[i] = Distance::ZERO;
        Ok(d)
    }

    /// Distances from an unseen point: its column is identically zero since
    /// it is never in any reference leaf multiset.
    pub fn distances_from_query(&self, x: &[f64]) -> Result<Vec<Distance>> {
        Ok(self
            .query_row(x)?
            .into_iter()
            .map(|p| Distance::from_proximities(p, 0.0))
            .collect())
    }
}
