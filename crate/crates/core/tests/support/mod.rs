//! Independent oracles shared by integration and acceptance tests.
#![allow(dead_code)]

use gapcf::counterfactual::{CounterfactualSearch, Query, StopRule, Trajectory, UtilitySpec};
use gapcf::data::{Dataset, FeatureSchema};
use gapcf::forest::{Forest, Node};
use gapcf::proximity::{Distance, DistanceMatrix, MatrixBackend};
use rand::Rng;

/// `n` rows of `d` features on the integer grid `0..levels`, labelled by a
/// noisy linear rule over `k` classes.
pub fn grid_data(rng: &mut impl Rng, n: usize, d: usize, levels: u32, k: usize) -> Dataset {
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<f64> = (0..d).map(|_| f64::from(rng.random_range(0..levels))).collect();
        let score: f64 = row
            .iter()
            .enumerate()
            .map(|(f, v)| if f % 2 == 0 { *v } else { -*v })
            .sum();
        let noisy = score + rng.random_range(-1.0..1.0);
        labels.push((noisy.rem_euclid(k as f64 * 2.0) / 2.0) as usize % k);
        rows.push(row);
    }
    let names = (0..d).map(|f| format!("x{f}")).collect();
    let classes = (0..k).map(|c| c.to_string()).collect();
    Dataset::from_rows(&rows, labels, classes, FeatureSchema::numeric(names)).unwrap()
}

/// Internal nodes visited when routing `x`, with the branch taken.
fn route(nodes: &[Node], x: &[f64]) -> Vec<(usize, bool)> {
    let mut out = Vec::new();
    let mut id = 0;
    while let Node::Split {
        feature,
        threshold,
        left,
        right,
    } = &nodes[id]
    {
        let goes_left = x[*feature] <= *threshold;
        out.push((id, goes_left));
        id = if goes_left { *left } else { *right };
    }
    out
}

/// Brute-force region-restricted tally of `from -> to`.
///
/// Samples the segment once inside every interval between consecutive
/// parameters at which any coordinate meets any threshold, and counts each
/// node whose routed branch flips between neighbouring samples while the
/// node is on both samples' routing paths.
pub fn brute_force_tally(forest: &Forest, from: &[f64], to: &[f64]) -> Vec<i64> {
    let d = from.len();
    let mut critical = vec![0.0, 1.0];
    for tree in forest.trees() {
        for node in tree.nodes() {
            if let Node::Split { feature, threshold, .. } = node {
                let (a, b) = (from[*feature], to[*feature]);
                if a != b {
                    let s = (threshold - a) / (b - a);
                    if s > 0.0 && s < 1.0 {
                        critical.push(s);
                    }
                }
            }
        }
    }
    critical.sort_by(f64::total_cmp);
    critical.dedup();
    let samples: Vec<Vec<f64>> = critical
        .windows(2)
        .map(|w| {
            let s = 0.5 * (w[0] + w[1]);
            (0..d).map(|f| from[f] + s * (to[f] - from[f])).collect()
        })
        .collect();
    let mut counts = vec![0i64; d];
    for tree in forest.trees() {
        let nodes = tree.nodes();
        let paths: Vec<Vec<(usize, bool)>> = samples.iter().map(|x| route(nodes, x)).collect();
        for w in paths.windows(2) {
            for &(id, left_before) in &w[0] {
                if let Some(&(_, left_after)) = w[1].iter().find(|(j, _)| *j == id) {
                    if left_before != left_after {
                        let Node::Split { feature, .. } = &nodes[id] else {
                            unreachable!()
                        };
                        counts[*feature] += if left_before { 1 } else { -1 };
                    }
                }
            }
        }
    }
    counts
}

/// Every threshold strictly between the endpoint values, signed.
pub fn brute_force_global(forest: &Forest, from: &[f64], to: &[f64]) -> Vec<i64> {
    let mut counts = vec![0i64; from.len()];
    for tree in forest.trees() {
        for node in tree.nodes() {
            if let Node::Split { feature, threshold, .. } = node {
                let (a, b) = (from[*feature], to[*feature]);
                if a.min(b) < *threshold && *threshold < a.max(b) {
                    counts[*feature] += if b > a { 1 } else { -1 };
                }
            }
        }
    }
    counts
}

/// Random two- or three-class toy configuration: class probabilities and a
/// symmetric distance matrix with coarse values (many ties) and some
/// unreachable pairs.
pub fn toy_configuration(rng: &mut impl Rng) -> (Vec<Vec<f64>>, DistanceMatrix) {
    let n = rng.random_range(1..=25);
    let k = rng.random_range(2..=3);
    let proba = (0..n)
        .map(|_| {
            // coarse probabilities so equal utilities occur
            let raw: Vec<f64> = (0..k).map(|_| f64::from(rng.random_range(1..=6u32))).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    let m = DistanceMatrix::from_fn(n, |_, _| {
        if rng.random_bool(0.1) {
            Distance::INFINITE
        } else {
            Distance::finite(f64::from(rng.random_range(1..=8u32)))
        }
    })
    .unwrap();
    (proba, m)
}

/// Checks the hill-climbing invariants of a trajectory against a literal
/// re-execution of the rule "move to the nearest strictly better point",
/// and returns a description of the first violation.
pub fn check_trajectory(
    proba: &[Vec<f64>],
    m: &DistanceMatrix,
    start: usize,
    spec: &UtilitySpec,
    stop: StopRule,
    t: &Trajectory,
) -> Result<(), String> {
    let n = proba.len();
    let u = spec.resolve(&proba[start]).map_err(|e| e.to_string())?;
    let util: Vec<f64> = proba.iter().map(|p| u.value(p)).collect();
    if t.indices.first() != Some(&start) {
        return Err(format!("trajectory does not start at {start}"));
    }
    if t.indices.len() > n {
        return Err(format!("{} points exceed reference size {n}", t.indices.len()));
    }
    for w in t.utilities.windows(2) {
        if w[1] <= w[0] || w[1].is_nan() {
            return Err(format!("utilities not strictly increasing: {:?}", t.utilities));
        }
    }
    let mut seen = std::collections::HashSet::new();
    if !t.indices.iter().all(|i| seen.insert(*i)) {
        return Err(format!("repeated index in {:?}", t.indices));
    }
    let argmax = |p: &[f64]| {
        let mut b = 0;
        for c in 1..p.len() {
            if p[c] > p[b] {
                b = c;
            }
        }
        b
    };
    let start_class = argmax(&proba[start]);
    for (step, w) in t.indices.windows(2).enumerate() {
        let (cur, next) = (w[0], w[1]);
        let mut best: Option<usize> = None;
        for j in 0..n {
            if util[j] > util[cur] && best.is_none_or(|b| m.get(cur, j) < m.get(cur, b)) {
                best = Some(j);
            }
        }
        if best != Some(next) {
            return Err(format!("step {step}: moved {cur} -> {next}, expected {best:?}"));
        }
        if stop == StopRule::ClassFlip && step + 2 < t.indices.len() && argmax(&proba[next]) != start_class {
            return Err(format!("continued past a class flip at {next}"));
        }
    }
    let last = *t.indices.last().unwrap();
    let flipped = stop == StopRule::ClassFlip && argmax(&proba[last]) != start_class;
    if !flipped && util.iter().any(|&v| v > util[last]) {
        return Err(format!("stopped at {last} with a better point available"));
    }
    Ok(())
}

/// Runs one random configuration end to end.
pub fn random_trajectory_case(rng: &mut impl Rng) -> Result<(), String> {
    let (proba, m) = toy_configuration(rng);
    let n = proba.len();
    let backend = MatrixBackend::new("toy", m.clone());
    let search = CounterfactualSearch::from_proba(&backend, proba.clone()).map_err(|e| e.to_string())?;
    let start = rng.random_range(0..n);
    let spec = if rng.random_bool(0.5) {
        UtilitySpec::class_probability(rng.random_range(0..proba[0].len()), 0.0)
    } else {
        UtilitySpec::class_flip()
    };
    let stop = if rng.random_bool(0.5) {
        StopRule::Convergence
    } else {
        StopRule::ClassFlip
    };
    let t = search
        .trajectory(&Query::Reference(start), &spec, stop)
        .map_err(|e| e.to_string())?;
    check_trajectory(&proba, &m, start, &spec, stop, &t)
}
