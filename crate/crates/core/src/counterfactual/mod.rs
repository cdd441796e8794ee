//! Nearest-neighbour counterfactual search under a utility constraint and
//! hill-climbing counterfactual trajectories over a reference set.

mod search;

pub use search::{find_counterfactual, CounterfactualSearch, Query};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forest::{argmax, Forest};
use crate::proximity::Distance;

/// What a counterfactual must achieve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilityKind {
    /// `U(x) = P(target | x)`.
    ClassProbability { target: usize },
    /// The predicted class must differ from the instance's. Candidates are
    /// ordered by `1 - P(original | x)`.
    ClassFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UtilitySpec {
    #[serde(flatten)]
    pub kind: UtilityKind,
    /// Minimum utility gain; must be non-negative.
    #[serde(default)]
    pub delta: f64,
}

impl UtilitySpec {
    pub fn class_probability(target: usize, delta: f64) -> Self {
        Self {
            kind: UtilityKind::ClassProbability { target },
            delta,
        }
    }

    pub fn class_flip() -> Self {
        Self {
            kind: UtilityKind::ClassFlip,
            delta: 0.0,
        }
    }

    /// Fixes the utility relative to an instance with class probabilities
    /// `instance_proba`.
    pub fn resolve(&self, instance_proba: &[f64]) -> Result<Utility> {
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return Err(Error::Argument(format!(
                "delta must be finite and >= 0, got {}",
                self.delta
            )));
        }
        let k = instance_proba.len();
        let kind = match self.kind {
            UtilityKind::ClassProbability { target } if target >= k => {
                return Err(Error::Argument(format!(
                    "target class {target} out of range for {k} classes"
                )))
            }
            UtilityKind::ClassProbability { target } => Resolved::Target(target),
            UtilityKind::ClassFlip => Resolved::Flip(argmax(instance_proba)),
        };
        Ok(Utility {
            kind,
            delta: self.delta,
            start_class: argmax(instance_proba),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Resolved {
    Target(usize),
    Flip(usize),
}

/// A utility bound to one instance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Utility {
    kind: Resolved,
    delta: f64,
    start_class: usize,
}

impl Utility {
    pub fn value(&self, proba: &[f64]) -> f64 {
        match self.kind {
            Resolved::Target(c) => proba[c],
            Resolved::Flip(c) => 1.0 - proba[c],
        }
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Predicted class of the instance the utility was resolved against.
    pub fn start_class(&self) -> usize {
        self.start_class
    }

    /// Whether a candidate with probabilities `proba` and predicted class
    /// `class` is an admissible counterfactual for an instance at utility
    /// `base`.
    fn admits(&self, base: f64, proba: &[f64], class: usize) -> bool {
        let gain = self.value(proba) - base;
        match self.kind {
            Resolved::Target(_) => gain > self.delta,
            Resolved::Flip(orig) => class != orig && (self.delta == 0.0 || gain > self.delta),
        }
    }
}

/// `U(x)` under a resolved utility.
pub fn utility_eval(forest: &Forest, x: &[f64], utility: &Utility) -> Result<f64> {
    Ok(utility.value(&forest.predict_proba(x)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CounterfactualResult {
    /// Reference index of the instance, when it is itself a reference row.
    pub instance_index: Option<usize>,
    pub counterfactual_index: usize,
    pub distance: Distance,
    pub utility_gain: f64,
    pub metric: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    /// Until no reference point has higher utility.
    #[default]
    Convergence,
    /// As soon as the predicted class differs from the start's.
    ClassFlip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    ClassFlipped,
}

/// Hill-climbing path through the reference set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `Some(t_0)` when the path starts at a reference row (then
    /// `indices[0] == t_0`); `None` for an external start point, in which
    /// case `indices` holds only the visited reference rows.
    pub start: Option<usize>,
    pub start_utility: f64,
    pub indices: Vec<usize>,
    /// `U` at each entry of `indices`.
    pub utilities: Vec<f64>,
    pub stop: StopReason,
    pub metric: String,
}

impl Trajectory {
    /// Last visited reference row other than the start, if any step was taken.
    pub fn end(&self) -> Option<usize> {
        let skip = usize::from(self.start.is_some());
        self.indices.get(skip..).and_then(|s| s.last().copied())
    }

    /// Number of moves made.
    pub fn steps(&self) -> usize {
        self.indices.len() - usize::from(self.start.is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resolve_checks_inputs() {
        assert!(UtilitySpec::class_probability(3, 0.0).resolve(&[0.5, 0.5]).is_err());
        assert!(UtilitySpec::class_probability(0, -0.1).resolve(&[0.5, 0.5]).is_err());
        assert!(UtilitySpec::class_probability(0, f64::NAN)
            .resolve(&[0.5, 0.5])
            .is_err());
        let u = UtilitySpec::class_flip().resolve(&[0.2, 0.7, 0.1]).unwrap();
        assert_eq!(u.start_class(), 1);
        assert!((u.value(&[0.2, 0.7, 0.1]) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn admissibility() {
        let u = UtilitySpec::class_probability(1, 0.1).resolve(&[0.6, 0.4]).unwrap();
        assert!(!u.admits(0.4, &[0.5, 0.5], 0));
        assert!(u.admits(0.4, &[0.45, 0.55], 1));
        let f = UtilitySpec::class_flip().resolve(&[0.6, 0.4]).unwrap();
        assert!(!f.admits(0.4, &[0.55, 0.45], 0));
        assert!(f.admits(0.4, &[0.45, 0.55], 1));
    }

    #[test]
    fn spec_serde_shape() {
        let s = UtilitySpec::class_probability(8, 0.05);
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"kind":"class_probability","target":8,"delta":0.05}"#);
        let back: UtilitySpec = serde_json::from_str(r#"{"kind":"class_flip"}"#).unwrap();
        assert_eq!(back, UtilitySpec::class_flip());
    }
}
