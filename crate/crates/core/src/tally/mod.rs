//! Signed counts of forest partitions crossed along straight segments.
//!
//! Direction is always counterfactual to instance: a partition on feature
//! `f` crossed while `f` increases towards the instance counts `+1`.

mod export;

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{Forest, Region};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TallyMode {
    /// A crossing counts only where the segment meets the node's own cell.
    #[default]
    RegionRestricted,
    /// Every split threshold strictly between the endpoint values counts.
    GlobalThresholds,
}

impl TallyMode {
    pub const NAMES: [&'static str; 2] = ["region_restricted", "global_thresholds"];

    pub fn name(self) -> &'static str {
        match self {
            TallyMode::RegionRestricted => "region_restricted",
            TallyMode::GlobalThresholds => "global_thresholds",
        }
    }
}

impl FromStr for TallyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "region_restricted" => Ok(TallyMode::RegionRestricted),
            "global_thresholds" => Ok(TallyMode::GlobalThresholds),
            _ => Err(Error::Argument(format!(
                "unknown tally mode '{s}' (known: {})",
                Self::NAMES.join(", ")
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionTally {
    pub counts: Vec<i64>,
    pub mode: TallyMode,
}

impl PartitionTally {
    pub fn zeros(d: usize, mode: TallyMode) -> Self {
        Self {
            counts: vec![0; d],
            mode,
        }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn add(&mut self, other: &PartitionTally) {
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }

    pub fn nonzero(&self) -> usize {
        self.counts.iter().filter(|&&c| c != 0).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }
}

#[derive(Debug, Clone)]
struct Partition {
    threshold: f64,
    /// Bounds on features other than the split feature.
    others: Vec<(usize, f64, f64)>,
    /// The split feature's own interval in the node's cell.
    own: (f64, f64),
}

/// Every partition of a forest, grouped by split feature and sorted by
/// threshold for range queries.
#[derive(Debug, Clone)]
pub struct PartitionSet {
    n_features: usize,
    by_feature: Vec<Vec<Partition>>,
}

impl PartitionSet {
    pub fn new(forest: &Forest) -> Self {
        let d = forest.n_features();
        let mut by_feature: Vec<Vec<Partition>> = vec![Vec::new(); d];
        for rec in forest.enumerate_splits() {
            by_feature[rec.feature].push(Partition {
                threshold: rec.threshold,
                others: other_bounds(&rec.region, rec.feature),
                own: rec.region.interval(rec.feature),
            });
        }
        for v in &mut by_feature {
            v.sort_by(|a, b| a.threshold.total_cmp(&b.threshold));
        }
        Self {
            n_features: d,
            by_feature,
        }
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    /// Number of partitions on each feature.
    pub fn per_feature(&self) -> Vec<usize> {
        self.by_feature.iter().map(Vec::len).collect()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Argument(format!(
                "point has {} features, forest expects {}",
                x.len(),
                self.n_features
            )));
        }
        Ok(())
    }

    /// Tally of the segment `from -> to` (counterfactual to instance).
    pub fn tally_segment(&self, from: &[f64], to: &[f64], mode: TallyMode) -> Result<PartitionTally> {
        self.check(from)?;
        self.check(to)?;
        let mut out = PartitionTally::zeros(self.n_features, mode);
        for (f, parts) in self.by_feature.iter().enumerate() {
            let (a, b) = (from[f], to[f]);
            if a == b {
                continue;
            }
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let sign = if b > a { 1 } else { -1 };
            let start = parts.partition_point(|p| p.threshold <= lo);
            let end = parts.partition_point(|p| p.threshold < hi);
            let Some(between) = parts.get(start..end) else { continue };
            let crossed = match mode {
                TallyMode::GlobalThresholds => between.len() as i64,
                TallyMode::RegionRestricted => between
                    .iter()
                    .filter(|p| {
                        let s = (p.threshold - a) / (b - a);
                        p.threshold >= p.own.0
                            && p.threshold <= p.own.1
                            && p.others.iter().all(|&(g, glo, ghi)| {
                                let x = from[g] + s * (to[g] - from[g]);
                                x >= glo && x <= ghi
                            })
                    })
                    .count() as i64,
            };
            out.counts[f] = sign * crossed;
        }
        Ok(out)
    }

    /// Sum of segment tallies along `points`, which run from the instance
    /// (`points[0]`) to the counterfactual (last). Each segment is taken in
    /// the counterfactual-to-instance direction.
    pub fn tally_trajectory(&self, points: &[&[f64]], mode: TallyMode) -> Result<PartitionTally> {
        if points.len() < 2 {
            return Err(Error::Argument(format!(
                "trajectory tally needs >= 2 points, got {}",
                points.len()
            )));
        }
        let mut out = PartitionTally::zeros(self.n_features, mode);
        for w in points.windows(2).rev() {
            out.add(&self.tally_segment(w[1], w[0], mode)?);
        }
        Ok(out)
    }

    /// Tallies from the all-zeros point and from the training mean to `x`.
    pub fn null_and_mean_tallies(
        &self,
        x: &[f64],
        train: &Dataset,
        mode: TallyMode,
    ) -> Result<(PartitionTally, PartitionTally)> {
        let zeros = vec![0.0; self.n_features];
        Ok((
            self.tally_segment(&zeros, x, mode)?,
            self.tally_segment(&train.feature_means(), x, mode)?,
        ))
    }
}

fn other_bounds(region: &Region, feature: usize) -> Vec<(usize, f64, f64)> {
    region
        .constraints()
        .iter()
        .copied()
        .filter(|&(g, _, _)| g != feature)
        .collect()
}

/// Fraction of components with `|v| <= eps`.
pub fn sparsity(values: &[f64], eps: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Argument("sparsity of an empty vector".into()));
    }
    if eps.is_nan() || eps < 0.0 {
        return Err(Error::Argument(format!("epsilon must be >= 0, got {eps}")));
    }
    Ok(values.iter().filter(|v| v.abs() <= eps).count() as f64 / values.len() as f64)
}

/// Default zero threshold for integer tallies.
pub const TALLY_EPS: f64 = 1e-12;

/// Default zero threshold for a continuous attribution row: `1e-6 * max|v|`.
pub fn continuous_eps(values: &[f64]) -> f64 {
    1e-6 * values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub use export::{sorted_records, write_grid, write_records};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forest::test_forests::{leaf, split};
    use crate::forest::{ForestParams, Node, Tree};

    fn forest(trees: Vec<Vec<Node>>, d: usize) -> Forest {
        let n = trees.len();
        Forest::from_parts(
            trees.into_iter().map(|t| Tree::from_nodes(t).unwrap()).collect(),
            vec![vec![1]; n],
            vec!["a".into(), "b".into()],
            d,
            ForestParams::default(),
        )
        .unwrap()
    }

    #[test]
    fn single_stump_upward_crossing() {
        let f = forest(vec![vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])]], 3);
        let p = PartitionSet::new(&f);
        let t = p
            .tally_segment(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(t.counts, [1, 0, 0]);
        let back = p
            .tally_segment(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(back.counts, [-1, 0, 0]);
        let same = p
            .tally_segment(&[0.3, 1.0, 2.0], &[0.3, 1.0, 2.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(same.counts, [0, 0, 0]);
    }

    #[test]
    fn endpoint_on_threshold_does_not_count() {
        let f = forest(vec![vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])]], 1);
        let p = PartitionSet::new(&f);
        assert_eq!(
            p.tally_segment(&[0.5], &[1.0], TallyMode::GlobalThresholds)
                .unwrap()
                .counts,
            [0]
        );
        assert_eq!(
            p.tally_segment(&[0.0], &[0.5], TallyMode::GlobalThresholds)
                .unwrap()
                .counts,
            [0]
        );
    }

    /// Root x0 <= 1; on its right, x1 <= 1. A segment that crosses x1 = 1
    /// while x0 < 1 misses the child's cell.
    fn nested() -> Forest {
        forest(
            vec![vec![
                split(0, 1.0, 1, 2),
                leaf(&[1, 0]),
                split(1, 1.0, 3, 4),
                leaf(&[1, 0]),
                leaf(&[0, 1]),
            ]],
            2,
        )
    }

    #[test]
    fn region_restriction_skips_partitions_outside_their_cell() {
        let p = PartitionSet::new(&nested());
        let inside = p
            .tally_segment(&[2.0, 0.0], &[2.0, 2.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(inside.counts, [0, 1]);
        let outside = p
            .tally_segment(&[0.0, 0.0], &[0.0, 2.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(outside.counts, [0, 0]);
        let global = p
            .tally_segment(&[0.0, 0.0], &[0.0, 2.0], TallyMode::GlobalThresholds)
            .unwrap();
        assert_eq!(global.counts, [0, 1]);
        // diagonal (0,0) -> (3,3): crosses x0 = 1 at s = 1/3 (root, always
        // inside) and x1 = 1 at s = 1/3; at that point x0 = 1 lies on the
        // child's closed boundary, so it counts.
        let diag = p
            .tally_segment(&[0.0, 0.0], &[3.0, 3.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(diag.counts, [1, 1]);
        // (0,0) -> (3,1.5): x1 = 1 reached at s = 2/3, x0 = 2 > 1, inside
        let late = p
            .tally_segment(&[0.0, 0.0], &[3.0, 1.5], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(late.counts, [1, 1]);
        // (0,0) -> (1.5,3): x1 = 1 at s = 1/3, x0 = 0.5 < 1, outside
        let early = p
            .tally_segment(&[0.0, 0.0], &[1.5, 3.0], TallyMode::RegionRestricted)
            .unwrap();
        assert_eq!(early.counts, [1, 0]);
    }

    #[test]
    fn repeated_thresholds_across_trees_add_up() {
        let stump = vec![split(0, 0.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])];
        let f = forest(
            vec![
                stump.clone(),
                stump,
                vec![split(0, 2.5, 1, 2), leaf(&[1, 0]), leaf(&[0, 1])],
            ],
            1,
        );
        let p = PartitionSet::new(&f);
        assert_eq!(p.per_feature(), [3]);
        assert_eq!(
            p.tally_segment(&[3.0], &[0.0], TallyMode::RegionRestricted)
                .unwrap()
                .counts,
            [-3]
        );
        assert_eq!(
            p.tally_segment(&[1.0], &[0.0], TallyMode::RegionRestricted)
                .unwrap()
                .counts,
            [-2]
        );
    }

    #[test]
    fn trajectory_sums_reversed_segments() {
        let p = PartitionSet::new(&nested());
        let pts: [&[f64]; 3] = [&[0.0, 0.0], &[2.0, 0.5], &[2.0, 2.0]];
        let t = p.tally_trajectory(&pts, TallyMode::RegionRestricted).unwrap();
        // cf (2,2) -> (2,0.5): x1 down through child; (2,0.5) -> (0,0): x0 down through root
        assert_eq!(t.counts, [-1, -1]);
        let two = p.tally_trajectory(&pts[..2], TallyMode::RegionRestricted).unwrap();
        assert_eq!(
            two,
            p.tally_segment(pts[1], pts[0], TallyMode::RegionRestricted).unwrap()
        );
        assert!(p.tally_trajectory(&pts[..1], TallyMode::RegionRestricted).is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let p = PartitionSet::new(&nested());
        assert!(p
            .tally_segment(&[0.0], &[1.0, 1.0], TallyMode::GlobalThresholds)
            .is_err());
    }

    #[test]
    fn sparsity_basics() {
        assert_eq!(sparsity(&[0.0, 0.0], TALLY_EPS).unwrap(), 1.0);
        assert_eq!(sparsity(&[1.0, -2.0], 0.0).unwrap(), 0.0);
        assert_eq!(sparsity(&[0.0, 3.0, 0.0, -1.0], 0.0).unwrap(), 0.5);
        assert!(sparsity(&[], 0.0).is_err());
        assert_eq!(continuous_eps(&[0.5, -2.0]), 2e-6);
    }

    #[test]
    fn mode_names_round_trip() {
        for name in TallyMode::NAMES {
            assert_eq!(name.parse::<TallyMode>().unwrap().name(), name);
        }
        assert!("diagonal".parse::<TallyMode>().is_err());
    }
}
