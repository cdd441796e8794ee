use serde::{Deserialize, Serialize};

use super::{Forest, Node};

/// Axis-aligned cell of a tree node: the intersection of the half-spaces on
/// its ancestor path.
///
/// Stored sparsely: only features constrained by some ancestor appear, each
/// with `(lower, upper]` bounds. Unconstrained sides are `-inf` / `+inf`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Region {
    bounds: Vec<(usize, f64, f64)>,
}

impl Region {
    pub fn whole_space() -> Self {
        Self::default()
    }

    /// `(lower, upper)` for `feature`.
    pub fn interval(&self, feature: usize) -> (f64, f64) {
        self.bounds
            .iter()
            .find(|(f, _, _)| *f == feature)
            .map_or((f64::NEG_INFINITY, f64::INFINITY), |&(_, lo, hi)| (lo, hi))
    }

    /// Constrained features with their bounds, ascending by feature.
    pub fn constraints(&self) -> &[(usize, f64, f64)] {
        &self.bounds
    }

    pub fn is_whole_space(&self) -> bool {
        self.bounds.is_empty()
    }

    /// Closed-box membership: points on a boundary count as inside.
    pub fn contains(&self, x: &[f64]) -> bool {
        self.bounds.iter().all(|&(f, lo, hi)| x[f] >= lo && x[f] <= hi)
    }

    fn restrict(&self, feature: usize, lo: f64, hi: f64) -> Self {
        let mut bounds = self.bounds.clone();
        match bounds.binary_search_by_key(&feature, |b| b.0) {
            Ok(i) => {
                bounds[i].1 = bounds[i].1.max(lo);
                bounds[i].2 = bounds[i].2.min(hi);
            }
            Err(i) => bounds.insert(i, (feature, lo, hi)),
        }
        Self { bounds }
    }

    /// Region of the left child of a split on `feature` at `threshold`.
    pub fn left_of(&self, feature: usize, threshold: f64) -> Self {
        self.restrict(feature, f64::NEG_INFINITY, threshold)
    }

    pub fn right_of(&self, feature: usize, threshold: f64) -> Self {
        self.restrict(feature, threshold, f64::INFINITY)
    }
}

/// One internal node of the forest and the cell its partition lives in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRecord {
    pub tree: usize,
    pub node: usize,
    pub feature: usize,
    pub threshold: f64,
    pub region: Region,
}

impl Forest {
    /// Every internal node of every tree, in tree order then pre-order.
    pub fn enumerate_splits(&self) -> Vec<SplitRecord> {
        let mut out = Vec::new();
        for (t, tree) in self.trees().iter().enumerate() {
            let nodes = tree.nodes();
            let mut stack = vec![(0usize, Region::whole_space())];
            while let Some((id, region)) = stack.pop() {
                if let Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } = &nodes[id]
                {
                    stack.push((*right, region.right_of(*feature, *threshold)));
                    stack.push((*left, region.left_of(*feature, *threshold)));
                    out.push(SplitRecord {
                        tree: t,
                        node: id,
                        feature: *feature,
                        threshold: *threshold,
                        region,
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_forests::{leaf, split};
    use crate::forest::{ForestParams, Tree};

    fn forest(nodes: Vec<Node>, d: usize) -> Forest {
        Forest::from_parts(
            vec![Tree::from_nodes(nodes).unwrap()],
            vec![vec![1]],
            vec!["a".into(), "b".into()],
            d,
            ForestParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn stump_region_is_whole_space() {
        let f = forest(vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])], 2);
        let s = f.enumerate_splits();
        assert_eq!(s.len(), 1);
        assert!(s[0].region.is_whole_space());
        assert_eq!(s[0].region.interval(1), (f64::NEG_INFINITY, f64::INFINITY));
    }

    #[test]
    fn child_region_intersects_parent_halfspace() {
        // f0 <= 2 then (right branch) f1 <= 5
        let f = forest(
            vec![
                split(0, 2.0, 1, 2),
                leaf(&[1, 0]),
                split(1, 5.0, 3, 4),
                leaf(&[1, 0]),
                leaf(&[0, 1]),
            ],
            2,
        );
        let s = f.enumerate_splits();
        assert_eq!(s.len(), 2);
        let child = s.iter().find(|r| r.node == 2).unwrap();
        assert_eq!(child.region.interval(0), (2.0, f64::INFINITY));
        assert_eq!(child.region.interval(1), (f64::NEG_INFINITY, f64::INFINITY));
        assert!(child.region.contains(&[2.5, 100.0]));
        assert!(!child.region.contains(&[1.0, 0.0]));
    }

    #[test]
    fn repeated_feature_narrows_interval() {
        let f = forest(
            vec![
                split(0, 2.0, 1, 4),
                split(0, 1.0, 2, 3),
                leaf(&[1, 0]),
                leaf(&[0, 1]),
                leaf(&[1, 1]),
            ],
            1,
        );
        let s = f.enumerate_splits();
        let inner = s.iter().find(|r| r.node == 1).unwrap();
        assert_eq!(inner.region.interval(0), (f64::NEG_INFINITY, 2.0));
        let deeper = Region::whole_space().left_of(0, 2.0).right_of(0, 1.0);
        assert_eq!(deeper.interval(0), (1.0, 2.0));
    }
}
