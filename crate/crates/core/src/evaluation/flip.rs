use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{
    perturb_top_groups, perturb_topk, rank_features, rank_groups, AttributionSet, RankInput, RankerBuilder,
    RankerContext,
};
use crate::counterfactual::{CounterfactualSearch, Query, UtilitySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::proximity::{BackendContext, MetricBuilder, ReferenceWeights};
use crate::registry::Registry;
use crate::tally::{PartitionSet, TallyMode};

/// A distance metric paired with a feature ranking, written `metric:ranking`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Strategy {
    pub metric: String,
    pub ranking: String,
}

impl Strategy {
    pub fn new(metric: &str, ranking: &str) -> Self {
        Self {
            metric: metric.into(),
            ranking: ranking.into(),
        }
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.split_once(':') {
            Some((m, r)) if !m.is_empty() && !r.is_empty() && !r.contains(':') => Ok(Self::new(m, r)),
            _ => Err(Error::Argument(format!(
                "strategy '{s}' is not of the form metric:ranking"
            ))),
        }
    }
}

impl TryFrom<String> for Strategy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Strategy> for String {
    fn from(s: Strategy) -> String {
        s.to_string()
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.metric, self.ranking)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlipOptions {
    /// Weights for RF-GAP over the reference set.
    pub weights: ReferenceWeights,
    pub standardize: bool,
    pub mode: TallyMode,
    /// Move one-hot groups atomically; `k` then counts groups.
    pub group_mode: bool,
}

impl Default for FlipOptions {
    fn default() -> Self {
        Self {
            weights: ReferenceWeights::Bootstrap,
            standardize: false,
            mode: TallyMode::RegionRestricted,
            group_mode: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipCurve {
    pub strategy: Strategy,
    /// `flip_rate[k]` for `k = 0..=d`.
    pub flip_rate: Vec<f64>,
    pub flips: Vec<usize>,
    pub n_evaluated: usize,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipReport {
    pub curves: Vec<FlipCurve>,
    /// Test rows without any flipped-class reference point, per metric.
    pub excluded: BTreeMap<String, Vec<usize>>,
}

impl FlipReport {
    pub fn curve(&self, strategy: &Strategy) -> Option<&FlipCurve> {
        self.curves.iter().find(|c| &c.strategy == strategy)
    }

    /// Fraction of `k` at which `a`'s flip rate is at least `b`'s.
    pub fn dominance(&self, a: &Strategy, b: &Strategy) -> Option<f64> {
        let (a, b) = (self.curve(a)?, self.curve(b)?);
        let wins = a.flip_rate.iter().zip(&b.flip_rate).filter(|(x, y)| x >= y).count();
        Some(wins as f64 / a.flip_rate.len() as f64)
    }

    /// One row per `(k, strategy)`: `k,strategy,flip_rate,n_evaluated,n_excluded`.
    pub fn write_table<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<flip curve output>", e);
        writeln!(out, "k,strategy,flip_rate,n_evaluated,n_excluded").map_err(io)?;
        for c in &self.curves {
            for (k, r) in c.flip_rate.iter().enumerate() {
                writeln!(out, "{k},{},{r},{},{}", c.strategy, c.n_evaluated, c.n_excluded).map_err(io)?;
            }
        }
        Ok(())
    }
}

/// For every test row and strategy: find the nearest flipped-class
/// reference point under the strategy's metric, rank features, and record
/// for each `k` whether adopting the top `k` counterfactual values flips
/// the predicted class. `imported` rows are keyed by test row index.
#[allow(clippy::too_many_arguments)]
pub fn run_flip_experiment(
    forest: &Forest,
    test: &Dataset,
    reference: &Dataset,
    strategies: &[Strategy],
    metrics: &Registry<MetricBuilder>,
    rankings: &Registry<RankerBuilder>,
    imported: Option<&AttributionSet>,
    opts: &FlipOptions,
) -> Result<FlipReport> {
    if strategies.is_empty() {
        return Err(Error::Argument("no strategies requested".into()));
    }
    let partitions = PartitionSet::new(forest);
    let rctx = RankerContext {
        partitions: &partitions,
        mode: opts.mode,
        imported,
    };
    let schema = test.schema();
    let d = if opts.group_mode {
        schema.groups().len()
    } else {
        test.n_features()
    };
    let mut curves: Vec<FlipCurve> = strategies
        .iter()
        .map(|s| FlipCurve {
            strategy: s.clone(),
            flip_rate: vec![0.0; d + 1],
            flips: vec![0; d + 1],
            n_evaluated: 0,
            n_excluded: 0,
        })
        .collect();
    let mut excluded = BTreeMap::new();

    let predicted = test.rows().map(|x| forest.predict(x)).collect::<Result<Vec<_>>>()?;
    let mut by_metric: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (s, strat) in strategies.iter().enumerate() {
        by_metric.entry(strat.metric.as_str()).or_default().push(s);
    }
    let ref_proba = reference
        .rows()
        .map(|x| forest.predict_proba(x))
        .collect::<Result<Vec<_>>>()?;
    for (metric, members) in by_metric {
        let ctx = BackendContext {
            forest,
            reference,
            weights: opts.weights,
            standardize: opts.standardize,
        };
        let backend = (metrics.get(metric)?)(&ctx)?;
        let search = CounterfactualSearch::from_proba(backend.as_ref(), ref_proba.clone())?;
        let rankers = members
            .iter()
            .map(|&s| (rankings.get(&strategies[s].ranking)?)(&rctx))
            .collect::<Result<Vec<_>>>()?;
        let mut skipped = Vec::new();
        for (i, x) in test.rows().enumerate() {
            let q = Query::point(forest, x)?;
            let cf = match search.find(&q, &UtilitySpec::class_flip()) {
                Ok(r) => reference.row(r.counterfactual_index),
                Err(Error::NoCounterfactual) => {
                    skipped.push(i);
                    continue;
                }
                Err(e) => return Err(e),
            };
            let input = RankInput {
                instance_id: i,
                instance: x,
                counterfactual: cf,
            };
            for (&s, ranker) in members.iter().zip(&rankers) {
                let ranking = rank_features(&ranker.attribution(&input)?);
                let groups = opts.group_mode.then(|| rank_groups(&ranking, schema));
                let curve = &mut curves[s];
                curve.n_evaluated += 1;
                for k in 0..=d {
                    let p = match &groups {
                        Some(g) => perturb_top_groups(x, cf, g, k, schema)?,
                        None => perturb_topk(x, cf, &ranking, k)?,
                    };
                    if forest.predict(&p)? != predicted[i] {
                        curve.flips[k] += 1;
                    }
                }
            }
        }
        for &s in &members {
            curves[s].n_excluded = skipped.len();
        }
        excluded.insert(metric.to_string(), skipped);
    }
    for c in &mut curves {
        if c.n_evaluated > 0 {
            let n = c.n_evaluated as f64;
            c.flip_rate = c.flips.iter().map(|&f| f as f64 / n).collect();
        }
    }
    Ok(FlipReport { curves, excluded })
}
