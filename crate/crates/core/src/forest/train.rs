use std::thread;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Forest, ForestParams, Node, Tree};
use crate::data::Dataset;
use crate::error::{Error, Result};

/// Column-major rank encoding of the training matrix.
///
/// Split search works on ranks (index into the sorted distinct values of a
/// feature) so that both the histogram and the sorting path sweep the same
/// candidate thresholds: midpoints between consecutive distinct values that
/// are present in the node.
struct RankedColumns {
    distinct: Vec<Vec<f64>>,
    ranks: Vec<Vec<u32>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl RankedColumns {
    fn new(data: &Dataset) -> Self {
        let n = data.n_rows();
        let d = data.n_features();
        let mut distinct = Vec::with_capacity(d);
        let mut ranks = Vec::with_capacity(d);
        for f in 0..d {
            let mut col: Vec<f64> = (0..n).map(|i| data.value(i, f)).collect();
            col.sort_by(f64::total_cmp);
            col.dedup();
            let r = (0..n)
                .map(|i| {
                    let v = data.value(i, f);
                    col.binary_search_by(|c| c.total_cmp(&v)).expect("value present") as u32
                })
                .collect();
            distinct.push(col);
            ranks.push(r);
        }
        Self {
            distinct,
            ranks,
            labels: data.labels().to_vec(),
            n_classes: data.n_classes(),
        }
    }
}

struct Candidate {
    score: f64,
    feature: usize,
    /// Highest rank routed left.
    rank: u32,
    threshold: f64,
}

struct TreeBuilder<'a> {
    cols: &'a RankedColumns,
    weights: &'a [u32],
    mtry: usize,
    max_depth: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    feature_order: Vec<usize>,
    hist: Vec<f64>,
    pairs: Vec<(u32, u32)>,
    /// Use the histogram sweep when `distinct values <= hist_factor * node size`.
    hist_factor: usize,
}

/// Gini split score `sum(L^2)/W_L + sum(R^2)/W_R`, larger is better.
/// Maximising it minimises the weighted child impurity.
fn score(left: &[f64], total: &[f64], w_left: f64, w_total: f64) -> f64 {
    let w_right = w_total - w_left;
    let mut sl = 0.0;
    let mut sr = 0.0;
    for (l, t) in left.iter().zip(total) {
        sl += l * l;
        let r = t - l;
        sr += r * r;
    }
    sl / w_left + sr / w_right
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    if m >= hi {
        lo
    } else {
        m
    }
}

impl<'a> TreeBuilder<'a> {
    fn class_totals(&self, samples: &[u32]) -> Vec<f64> {
        let mut totals = vec![0.0; self.cols.n_classes];
        for &s in samples {
            totals[self.cols.labels[s as usize]] += f64::from(self.weights[s as usize]);
        }
        totals
    }

    fn leaf(&self, totals: &[f64]) -> Node {
        Node::Leaf {
            counts: totals.iter().map(|&c| c as u32).collect(),
        }
    }

    /// Best threshold on one feature, `None` when the feature is constant
    /// within the node.
    fn best_on_feature(&mut self, f: usize, samples: &[u32], totals: &[f64], w_total: f64) -> Option<Candidate> {
        let k = self.cols.n_classes;
        let ranks = &self.cols.ranks[f];
        let values = &self.cols.distinct[f];
        let labels = &self.cols.labels;
        let mut left = vec![0.0; k];
        let mut w_left = 0.0;
        let mut best: Option<Candidate> = None;
        let consider = |left: &[f64], w_left: f64, lo_rank: u32, hi_rank: u32, best: &mut Option<Candidate>| {
            let s = score(left, totals, w_left, w_total);
            if best.as_ref().is_none_or(|b| s > b.score) {
                *best = Some(Candidate {
                    score: s,
                    feature: f,
                    rank: lo_rank,
                    threshold: midpoint(values[lo_rank as usize], values[hi_rank as usize]),
                });
            }
        };

        if values.len() <= self.hist_factor.saturating_mul(samples.len()) {
            // Histogram over the feature's distinct values.
            let bins = values.len();
            if self.hist.len() < bins * (k + 1) {
                self.hist.resize(bins * (k + 1), 0.0);
            }
            let (mut lo, mut hi) = (u32::MAX, 0u32);
            for &s in samples {
                let r = ranks[s as usize];
                let w = f64::from(self.weights[s as usize]);
                let base = r as usize * (k + 1);
                self.hist[base] += w;
                self.hist[base + 1 + labels[s as usize]] += w;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if lo == hi {
                self.hist[lo as usize * (k + 1)..(lo as usize + 1) * (k + 1)].fill(0.0);
                return None;
            }
            let mut prev = lo;
            for r in lo..=hi {
                let base = r as usize * (k + 1);
                let w = self.hist[base];
                if w == 0.0 {
                    continue;
                }
                if r != lo {
                    consider(&left, w_left, prev, r, &mut best);
                }
                w_left += w;
                for (l, h) in left.iter_mut().zip(&self.hist[base + 1..base + 1 + k]) {
                    *l += h;
                }
                prev = r;
            }
            self.hist[lo as usize * (k + 1)..(hi as usize + 1) * (k + 1)].fill(0.0);
        } else {
            self.pairs.clear();
            self.pairs.extend(samples.iter().map(|&s| (ranks[s as usize], s)));
            self.pairs.sort_unstable();
            let first = self.pairs[0].0;
            if self.pairs[self.pairs.len() - 1].0 == first {
                return None;
            }
            let mut prev = first;
            for &(r, s) in &self.pairs {
                if r != prev {
                    consider(&left, w_left, prev, r, &mut best);
                    prev = r;
                }
                let w = f64::from(self.weights[s as usize]);
                w_left += w;
                left[labels[s as usize]] += w;
            }
        }
        best
    }

    fn build(&mut self, samples: &mut [u32], depth: usize) -> usize {
        let id = self.nodes.len();
        let totals = self.class_totals(samples);
        let w_total: f64 = totals.iter().sum();
        let pure = totals.iter().filter(|&&c| c > 0.0).count() <= 1;
        self.nodes.push(self.leaf(&totals));
        if depth >= self.max_depth || pure || w_total < 2.0 {
            return id;
        }

        // Sample features without replacement; features that are constant in
        // the node do not count towards the `mtry` budget.
        let d = self.feature_order.len();
        let mut visited = 0;
        let mut best: Option<Candidate> = None;
        for i in 0..d {
            if visited >= self.mtry {
                break;
            }
            let j = self.rng.random_range(i..d);
            self.feature_order.swap(i, j);
            let f = self.feature_order[i];
            let Some(c) = self.best_on_feature(f, samples, &totals, w_total) else {
                continue;
            };
            visited += 1;
            let better = match &best {
                None => true,
                Some(b) => c.score > b.score || (c.score == b.score && c.feature < b.feature),
            };
            if better {
                best = Some(c);
            }
        }
        let Some(best) = best else {
            return id;
        };

        let cols = self.cols;
        let ranks = &cols.ranks[best.feature];
        let mut boundary = 0;
        for i in 0..samples.len() {
            if ranks[samples[i] as usize] <= best.rank {
                samples.swap(i, boundary);
                boundary += 1;
            }
        }
        let (l, r) = samples.split_at_mut(boundary);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }
}

/// Deterministic per-tree generator derived from the master seed.
fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

fn fit_tree(cols: &RankedColumns, params: &ForestParams, mtry: usize, tree: usize) -> (Tree, Vec<u32>) {
    let n = cols.labels.len();
    let d = cols.ranks.len();
    let mut rng = tree_rng(params.seed, tree);
    let mut counts = vec![0u32; n];
    for _ in 0..n {
        counts[rng.random_range(0..n)] += 1;
    }
    let mut samples: Vec<u32> = (0..n as u32).filter(|&j| counts[j as usize] > 0).collect();
    let mut builder = TreeBuilder {
        cols,
        weights: &counts,
        mtry,
        max_depth: params.max_depth,
        rng,
        nodes: Vec::new(),
        feature_order: (0..d).collect(),
        hist: Vec::new(),
        pairs: Vec::new(),
        hist_factor: 2,
    };
    builder.build(&mut samples, 0);
    let tree = Tree { nodes: builder.nodes };
    (tree, counts)
}

/// Trains a forest on every row of `train`.
///
/// Each tree draws an `n`-sample bootstrap with replacement, then grows
/// Gini splits over a random feature subset down to `max_depth`. Ties
/// between equally good splits go to the lower feature index, then the
/// lower threshold. A single-class training set yields single-leaf trees.
pub fn fit(train: &Dataset, params: &ForestParams) -> Result<Forest> {
    if train.is_empty() {
        return Err(Error::Argument("training set is empty".into()));
    }
    if params.n_trees == 0 {
        return Err(Error::Argument("n_trees must be at least 1".into()));
    }
    if params.max_depth == 0 {
        return Err(Error::Argument("max_depth must be at least 1".into()));
    }
    let cols = RankedColumns::new(train);
    let mtry = params.features_per_split.resolve(train.n_features());

    let workers = thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(params.n_trees);
    let mut results: Vec<Option<(Tree, Vec<u32>)>> = (0..params.n_trees).map(|_| None).collect();
    if workers <= 1 {
        for (t, slot) in results.iter_mut().enumerate() {
            *slot = Some(fit_tree(&cols, params, mtry, t));
        }
    } else {
        let chunk = params.n_trees.div_ceil(workers);
        thread::scope(|scope| {
            for (c, slots) in results.chunks_mut(chunk).enumerate() {
                let cols = &cols;
                scope.spawn(move || {
                    for (k, slot) in slots.iter_mut().enumerate() {
                        *slot = Some(fit_tree(cols, params, mtry, c * chunk + k));
                    }
                });
            }
        });
    }
    let (trees, in_bag) = results.into_iter().map(|r| r.expect("every tree trained")).unzip();
    Forest::from_parts(trees, in_bag, train.classes().to_vec(), train.n_features(), *params)
}
