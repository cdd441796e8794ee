use super::AttributionSet;
use crate::error::{Error, Result};
use crate::registry::Registry;
use crate::tally::{PartitionSet, TallyMode};

/// One explained instance and its counterfactual.
pub struct RankInput<'a> {
    pub instance_id: usize,
    pub instance: &'a [f64],
    pub counterfactual: &'a [f64],
}

/// Produces a per-feature attribution whose magnitudes rank features.
pub trait Ranker: Send + Sync {
    fn name(&self) -> &str;

    fn attribution(&self, input: &RankInput) -> Result<Vec<f64>>;
}

/// Signed partition tally of the counterfactual-to-instance segment.
pub struct PartitionRanker<'a> {
    pub partitions: &'a PartitionSet,
    pub mode: TallyMode,
}

impl Ranker for PartitionRanker<'_> {
    fn name(&self) -> &str {
        "partitions"
    }

    fn attribution(&self, input: &RankInput) -> Result<Vec<f64>> {
        Ok(self
            .partitions
            .tally_segment(input.counterfactual, input.instance, self.mode)?
            .as_f64())
    }
}

/// `|instance - counterfactual|` per feature.
pub struct DeltaRanker;

impl Ranker for DeltaRanker {
    fn name(&self) -> &str {
        "baseline"
    }

    fn attribution(&self, input: &RankInput) -> Result<Vec<f64>> {
        Ok(input
            .instance
            .iter()
            .zip(input.counterfactual)
            .map(|(a, b)| (a - b).abs())
            .collect())
    }
}

/// Externally computed attribution rows looked up by instance id.
pub struct ImportedRanker<'a> {
    pub set: &'a AttributionSet,
}

impl Ranker for ImportedRanker<'_> {
    fn name(&self) -> &str {
        "imported"
    }

    fn attribution(&self, input: &RankInput) -> Result<Vec<f64>> {
        self.set
            .row_for(input.instance_id)
            .map(<[f64]>::to_vec)
            .ok_or_else(|| Error::Consistency(format!("no imported attribution for instance {}", input.instance_id)))
    }
}

#[derive(Clone, Copy)]
pub struct RankerContext<'a> {
    pub partitions: &'a PartitionSet,
    pub mode: TallyMode,
    pub imported: Option<&'a AttributionSet>,
}

pub type RankerBuilder = for<'a> fn(&RankerContext<'a>) -> Result<Box<dyn Ranker + 'a>>;

fn build_partitions<'a>(ctx: &RankerContext<'a>) -> Result<Box<dyn Ranker + 'a>> {
    Ok(Box::new(PartitionRanker {
        partitions: ctx.partitions,
        mode: ctx.mode,
    }))
}

fn build_baseline<'a>(_: &RankerContext<'a>) -> Result<Box<dyn Ranker + 'a>> {
    Ok(Box::new(DeltaRanker))
}

fn build_imported<'a>(ctx: &RankerContext<'a>) -> Result<Box<dyn Ranker + 'a>> {
    let set = ctx
        .imported
        .ok_or_else(|| Error::Argument("ranking 'imported' requires an attribution file".into()))?;
    Ok(Box::new(ImportedRanker { set }))
}

/// Builtin feature rankings.
pub fn rankers() -> Registry<RankerBuilder> {
    Registry::new("ranking")
        .with(
            "partitions",
            "signed partition tally, counterfactual to instance",
            build_partitions as RankerBuilder,
        )
        .with(
            "baseline",
            "absolute feature difference to the counterfactual",
            build_baseline as RankerBuilder,
        )
        .with(
            "imported",
            "attribution rows read from a file",
            build_imported as RankerBuilder,
        )
}
