use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{AttributionSet, AttributionSource};
use crate::counterfactual::{CounterfactualSearch, Query, StopRule, Trajectory, UtilitySpec};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::forest::{argmax, Forest};
use crate::tally::{continuous_eps, sparsity, PartitionSet, TallyMode, TALLY_EPS};

/// Which class a trajectory climbs towards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "rule", content = "class", rename_all = "snake_case")]
pub enum TargetRule {
    /// The instance's second most probable class (lowest index on ties).
    #[default]
    RunnerUp,
    Class(usize),
    /// Any class other than the instance's prediction.
    Flip,
}

impl TargetRule {
    pub fn utility(self, proba: &[f64]) -> UtilitySpec {
        match self {
            TargetRule::RunnerUp => {
                let top = argmax(proba);
                let mut best: Option<usize> = None;
                for c in (0..proba.len()).filter(|&c| c != top) {
                    if best.is_none_or(|b| proba[c] > proba[b]) {
                        best = Some(c);
                    }
                }
                UtilitySpec::class_probability(best.unwrap_or(top), 0.0)
            }
            TargetRule::Class(c) => UtilitySpec::class_probability(c, 0.0),
            TargetRule::Flip => UtilitySpec::class_flip(),
        }
    }
}

/// Trajectory tallies and the matching `|x - end|` baseline rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationSets {
    pub tallies: AttributionSet,
    pub baseline: AttributionSet,
    pub trajectories: Vec<Trajectory>,
    /// Instance ids whose trajectory never left the start point.
    pub excluded: Vec<usize>,
}

/// Explains each row of `queries` by the tally integrated along its
/// trajectory through `reference`. `ids[r]` names query row `r`.
#[allow(clippy::too_many_arguments)]
pub fn explanation_sets(
    forest: &Forest,
    partitions: &PartitionSet,
    search: &CounterfactualSearch,
    reference: &Dataset,
    queries: &Dataset,
    ids: &[usize],
    rule: TargetRule,
    stop: StopRule,
    mode: TallyMode,
) -> Result<ExplanationSets> {
    if ids.len() != queries.n_rows() {
        return Err(Error::Consistency(format!(
            "{} ids for {} query rows",
            ids.len(),
            queries.n_rows()
        )));
    }
    let names = queries.schema().feature_names().to_vec();
    let (mut kept, mut tallies, mut deltas, mut trajectories, mut excluded) = (vec![], vec![], vec![], vec![], vec![]);
    for (r, x) in queries.rows().enumerate() {
        let q = Query::point(forest, x)?;
        let Query::Point { proba, .. } = &q else { unreachable!() };
        let spec = rule.utility(proba);
        let t = search.trajectory(&q, &spec, stop)?;
        let Some(end) = t.end() else {
            excluded.push(ids[r]);
            continue;
        };
        let mut points: Vec<&[f64]> = vec![x];
        points.extend(t.indices.iter().map(|&j| reference.row(j)));
        tallies.push(partitions.tally_trajectory(&points, mode)?.as_f64());
        deltas.push(x.iter().zip(reference.row(end)).map(|(a, b)| (a - b).abs()).collect());
        kept.push(ids[r]);
        trajectories.push(t);
    }
    Ok(ExplanationSets {
        tallies: AttributionSet::new(
            AttributionSource::PartitionTally,
            names.clone(),
            Some(kept.clone()),
            tallies,
        )?,
        baseline: AttributionSet::new(AttributionSource::Baseline, names, Some(kept), deltas)?,
        trajectories,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceStats {
    pub source: AttributionSource,
    pub n: usize,
    pub mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparsitySummary {
    pub tally: SourceStats,
    pub baseline: SourceStats,
    /// `tally.mean - baseline.mean`
    pub difference: f64,
    /// Welch two-sample t statistic and its two-sided p-value.
    pub t_statistic: f64,
    pub degrees_of_freedom: f64,
    pub p_value: f64,
}

fn row_sparsity(set: &AttributionSet) -> Result<Vec<f64>> {
    set.values
        .iter()
        .map(|row| {
            let eps = match set.source {
                AttributionSource::PartitionTally => TALLY_EPS,
                _ => continuous_eps(row),
            };
            sparsity(row, eps)
        })
        .collect()
}

fn stats(source: AttributionSource, v: &[f64]) -> (SourceStats, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (
        SourceStats {
            source,
            n: v.len(),
            mean,
            standard_error: (var / n).sqrt(),
        },
        var,
    )
}

/// Mean sparsity per source with a Welch comparison. Zero thresholds are
/// exact for tallies and `1e-6 * max|v|` per row for continuous sources.
pub fn sparsity_study(tallies: &AttributionSet, baseline: &AttributionSet) -> Result<SparsitySummary> {
    if tallies.is_empty() {
        return Err(Error::Argument("sparsity study over zero instances".into()));
    }
    if tallies.instance_ids() != baseline.instance_ids() {
        return Err(Error::Consistency("attribution sets cover different instances".into()));
    }
    let a = row_sparsity(tallies)?;
    let b = row_sparsity(baseline)?;
    let (sa, va) = stats(tallies.source, &a);
    let (sb, vb) = stats(baseline.source, &b);
    let difference = sa.mean - sb.mean;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let se2 = va / na + vb / nb;
    let (t, df, p) = if se2 > 0.0 {
        let t = difference / se2.sqrt();
        let df = se2.powi(2) / ((va / na).powi(2) / (na - 1.0).max(1.0) + (vb / nb).powi(2) / (nb - 1.0).max(1.0));
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::Degenerate(format!("t distribution: {e}")))?;
        (t, df, 2.0 * (1.0 - dist.cdf(t.abs())))
    } else if difference == 0.0 {
        (0.0, na + nb - 2.0, 1.0)
    } else {
        (difference.signum() * f64::INFINITY, na + nb - 2.0, 0.0)
    };
    Ok(SparsitySummary {
        tally: sa,
        baseline: sb,
        difference,
        t_statistic: t,
        degrees_of_freedom: df,
        p_value: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(source: AttributionSource, rows: Vec<Vec<f64>>) -> AttributionSet {
        let names = (0..rows[0].len()).map(|f| format!("f{f}")).collect();
        AttributionSet::new(source, names, None, rows).unwrap()
    }

    #[test]
    fn identical_sets_have_zero_difference() {
        let a = set(
            AttributionSource::PartitionTally,
            vec![vec![0.0, 1.0], vec![2.0, 0.0], vec![1.0, 1.0]],
        );
        let b = AttributionSet {
            source: AttributionSource::PartitionTally,
            ..a.clone()
        };
        let s = sparsity_study(&a, &b).unwrap();
        assert_eq!(s.tally.mean, s.baseline.mean);
        assert_eq!(s.difference, 0.0);
        assert!((s.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_versus_dense() {
        let a = set(AttributionSource::PartitionTally, vec![vec![0.0; 3]; 4]);
        let b = set(AttributionSource::Imported, vec![vec![0.5, -1.0, 2.0]; 4]);
        let s = sparsity_study(&a, &b).unwrap();
        assert_eq!((s.tally.mean, s.baseline.mean), (1.0, 0.0));
        assert_eq!(s.p_value, 0.0);
        let short = set(AttributionSource::Imported, vec![vec![0.5, -1.0, 2.0]; 3]);
        assert!(matches!(sparsity_study(&a, &short), Err(Error::Consistency(_))));
    }

    #[test]
    fn welch_matches_hand_computation() {
        // sparsities a = (0.5, 0.75, 1.0), b = (0.25, 0.25, 0.5)
        let a = set(
            AttributionSource::PartitionTally,
            vec![vec![0.0, 0.0, 1.0, 1.0], vec![0.0, 0.0, 0.0, 1.0], vec![0.0; 4]],
        );
        let b = set(
            AttributionSource::Imported,
            vec![
                vec![0.0, 1.0, 1.0, 1.0],
                vec![1.0, 0.0, 1.0, 1.0],
                vec![0.0, 0.0, 1.0, 1.0],
            ],
        );
        let s = sparsity_study(&a, &b).unwrap();
        // a: mean 0.75, var 0.0625; b = (0.25, 0.25, 0.5): mean 1/3, var 1/48
        assert!((s.tally.mean - 0.75).abs() < 1e-15);
        assert!((s.baseline.mean - 1.0 / 3.0).abs() < 1e-15);
        let se2: f64 = 0.0625 / 3.0 + (1.0 / 48.0) / 3.0;
        assert!((s.t_statistic - (0.75 - 1.0 / 3.0) / se2.sqrt()).abs() < 1e-12);
        let df = se2.powi(2) / ((0.0625f64 / 3.0).powi(2) / 2.0 + (1.0f64 / 144.0).powi(2) / 2.0);
        assert!((s.degrees_of_freedom - df).abs() < 1e-9);
        assert!(s.p_value > 0.0 && s.p_value < 0.1);
        assert!((s.tally.standard_error - (0.0625f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn runner_up_target() {
        assert_eq!(
            TargetRule::RunnerUp.utility(&[0.2, 0.5, 0.3]),
            UtilitySpec::class_probability(2, 0.0)
        );
        assert_eq!(
            TargetRule::RunnerUp.utility(&[0.6, 0.2, 0.2]),
            UtilitySpec::class_probability(1, 0.0)
        );
        assert_eq!(
            TargetRule::RunnerUp.utility(&[1.0]),
            UtilitySpec::class_probability(0, 0.0)
        );
    }
}
