use super::{CounterfactualResult, StopReason, StopRule, Trajectory, Utility, UtilitySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{argmax, Forest};
use crate::proximity::{Distance, DistanceBackend};

/// The point being explained.
#[derive(Debug, Clone, PartialEq)]
pub enum Query<'x> {
    /// Row `i` of the reference set.
    Reference(usize),
    /// A point outside the reference set with its class probabilities.
    Point { x: &'x [f64], proba: Vec<f64> },
}

impl<'x> Query<'x> {
    pub fn point(forest: &Forest, x: &'x [f64]) -> Result<Self> {
        Ok(Query::Point {
            x,
            proba: forest.predict_proba(x)?,
        })
    }
}

/// Reference points with cached model outputs, searched under one metric.
pub struct CounterfactualSearch<'a> {
    backend: &'a dyn DistanceBackend,
    proba: Vec<Vec<f64>>,
    predicted: Vec<usize>,
}

impl<'a> CounterfactualSearch<'a> {
    pub fn new(forest: &Forest, reference: &Dataset, backend: &'a dyn DistanceBackend) -> Result<Self> {
        let proba = reference
            .rows()
            .map(|x| forest.predict_proba(x))
            .collect::<Result<Vec<_>>>()?;
        Self::from_proba(backend, proba)
    }

    /// Uses precomputed class probabilities for the reference rows.
    pub fn from_proba(backend: &'a dyn DistanceBackend, proba: Vec<Vec<f64>>) -> Result<Self> {
        if proba.is_empty() {
            return Err(Error::EmptyReference);
        }
        if proba.len() != backend.len() {
            return Err(Error::Consistency(format!(
                "{} reference outputs for a {}-point metric",
                proba.len(),
                backend.len()
            )));
        }
        let predicted = proba.iter().map(|p| argmax(p)).collect();
        Ok(Self {
            backend,
            proba,
            predicted,
        })
    }

    pub fn len(&self) -> usize {
        self.proba.len()
    }

    pub fn is_empty(&self) -> bool {
        self.proba.is_empty()
    }

    pub fn metric(&self) -> &str {
        self.backend.name()
    }

    pub fn proba(&self, j: usize) -> &[f64] {
        &self.proba[j]
    }

    pub fn predicted(&self, j: usize) -> usize {
        self.predicted[j]
    }

    fn query_proba<'q>(&'q self, q: &'q Query) -> Result<&'q [f64]> {
        match q {
            Query::Reference(i) if *i >= self.len() => {
                Err(Error::Argument(format!("reference index {i} of {}", self.len())))
            }
            Query::Reference(i) => Ok(&self.proba[*i]),
            Query::Point { proba, .. } => Ok(proba),
        }
    }

    fn distances(&self, q: &Query) -> Result<Vec<Distance>> {
        let d = match q {
            Query::Reference(i) => self.backend.reference_distances(*i)?,
            Query::Point { x, .. } => self.backend.query_distances(x)?,
        };
        debug_assert_eq!(d.len(), self.len());
        Ok(d)
    }

    /// Nearest admissible row among `admissible`, lowest index on ties.
    fn nearest(d: &[Distance], admissible: impl Fn(usize) -> bool) -> Option<usize> {
        let mut best: Option<usize> = None;
        for j in 0..d.len() {
            if admissible(j) && best.is_none_or(|b| d[j] < d[b]) {
                best = Some(j);
            }
        }
        best
    }

    /// Closest reference row whose utility exceeds the instance's by more
    /// than `delta` (or whose class differs, for class flips).
    pub fn find(&self, q: &Query, spec: &UtilitySpec) -> Result<CounterfactualResult> {
        let p = self.query_proba(q)?;
        let u = spec.resolve(p)?;
        let base = u.value(p);
        let d = self.distances(q)?;
        let own = match q {
            Query::Reference(i) => Some(*i),
            Query::Point { .. } => None,
        };
        let c = Self::nearest(&d, |j| {
            Some(j) != own && u.admits(base, &self.proba[j], self.predicted[j])
        })
        .ok_or(Error::NoCounterfactual)?;
        Ok(CounterfactualResult {
            instance_index: own,
            counterfactual_index: c,
            distance: d[c],
            utility_gain: u.value(&self.proba[c]) - base,
            metric: self.metric().to_string(),
        })
    }

    /// Repeatedly moves to the nearest reference row with strictly higher
    /// utility than the current point.
    pub fn trajectory(&self, q: &Query, spec: &UtilitySpec, stop: StopRule) -> Result<Trajectory> {
        let p = self.query_proba(q)?;
        let u: Utility = spec.resolve(p)?;
        let utilities: Vec<f64> = self.proba.iter().map(|p| u.value(p)).collect();
        let start_utility = u.value(p);
        let mut t = Trajectory {
            start: None,
            start_utility,
            indices: Vec::new(),
            utilities: Vec::new(),
            stop: StopReason::Converged,
            metric: self.metric().to_string(),
        };
        if let Query::Reference(i) = *q {
            t.start = Some(i);
            t.indices.push(i);
            t.utilities.push(start_utility);
        }
        let mut current = start_utility;
        let mut d = self.distances(q)?;
        // Each move strictly raises the utility, so at most n moves happen.
        for _ in 0..self.len() {
            let Some(next) = Self::nearest(&d, |j| utilities[j] > current) else {
                return Ok(t);
            };
            t.indices.push(next);
            t.utilities.push(utilities[next]);
            current = utilities[next];
            if stop == StopRule::ClassFlip && self.predicted[next] != u.start_class() {
                t.stop = StopReason::ClassFlipped;
                return Ok(t);
            }
            d = self.backend.reference_distances(next)?;
        }
        Ok(t)
    }
}

/// One-off search; builds the reference cache each call.
pub fn find_counterfactual(
    forest: &Forest,
    reference: &Dataset,
    backend: &dyn DistanceBackend,
    query: &Query,
    utility: &UtilitySpec,
) -> Result<CounterfactualResult> {
    CounterfactualSearch::new(forest, reference, backend)?.find(query, utility)
}
