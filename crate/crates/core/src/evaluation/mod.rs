//! Attribution rankings, top-k perturbation flip curves and sparsity
//! comparisons between attribution sources.

mod flip;
mod rankers;
mod sparsity;

pub use flip::{run_flip_experiment, FlipCurve, FlipOptions, FlipReport, Strategy};
pub use rankers::{
    rankers, DeltaRanker, ImportedRanker, PartitionRanker, RankInput, Ranker, RankerBuilder, RankerContext,
};
pub use sparsity::{explanation_sets, sparsity_study, ExplanationSets, SourceStats, SparsitySummary, TargetRule};

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::FeatureSchema;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributionSource {
    PartitionTally,
    /// `|instance - counterfactual|` per feature.
    Baseline,
    Imported,
}

/// Per-instance attribution rows over the encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionSet {
    pub source: AttributionSource,
    pub feature_names: Vec<String>,
    /// Instance id of each row; `None` means row `r` is instance `r`.
    pub instances: Option<Vec<usize>>,
    pub values: Vec<Vec<f64>>,
}

impl AttributionSet {
    pub fn new(
        source: AttributionSource,
        feature_names: Vec<String>,
        instances: Option<Vec<usize>>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if let Some(r) = values.iter().position(|v| v.len() != d) {
            return Err(Error::Schema(format!(
                "attribution row {r} has {} values, expected {d}",
                values[r].len()
            )));
        }
        if let Some(ids) = &instances {
            if ids.len() != values.len() {
                return Err(Error::Consistency(format!(
                    "{} instance ids for {} rows",
                    ids.len(),
                    values.len()
                )));
            }
        }
        Ok(Self {
            source,
            feature_names,
            instances,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn instance_ids(&self) -> Vec<usize> {
        self.instances.clone().unwrap_or_else(|| (0..self.len()).collect())
    }

    /// Row for instance `id`.
    pub fn row_for(&self, id: usize) -> Option<&[f64]> {
        match &self.instances {
            Some(ids) => ids.iter().position(|&i| i == id).map(|r| self.values[r].as_slice()),
            None => self.values.get(id).map(Vec::as_slice),
        }
    }

    /// Writes the set with a header of feature names, preceded by an
    /// `instance` column when ids are present.
    pub fn write<W: Write>(&self, mut out: W) -> Result<()> {
        let io = |e| Error::io("<attribution output>", e);
        let mut header = Vec::new();
        if self.instances.is_some() {
            header.push("instance".to_string());
        }
        header.extend(self.feature_names.iter().cloned());
        writeln!(out, "{}", header.join(",")).map_err(io)?;
        for (r, row) in self.values.iter().enumerate() {
            let mut cells: Vec<String> = Vec::with_capacity(row.len() + 1);
            if let Some(ids) = &self.instances {
                cells.push(ids[r].to_string());
            }
            cells.extend(row.iter().map(f64::to_string));
            writeln!(out, "{}", cells.join(",")).map_err(io)?;
        }
        Ok(())
    }
}

const INSTANCE_COLUMN: &str = "instance";

/// Reads an attribution file whose header names the schema's encoded
/// features in any order, optionally with an `instance` column. With
/// `expected` ids, the file must cover exactly those instances.
pub fn import_attributions(
    path: impl AsRef<Path>,
    schema: &FeatureSchema,
    expected: Option<&[usize]>,
) -> Result<AttributionSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_attributions(&text, schema, expected)
}

pub fn parse_attributions(text: &str, schema: &FeatureSchema, expected: Option<&[usize]>) -> Result<AttributionSet> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header_line) = lines
        .next()
        .ok_or_else(|| Error::Schema("attribution file is empty".into()))?;
    let comma = header_line.contains(',');
    let split = |line: &str| -> Vec<String> {
        if comma {
            line.split(',').map(|c| c.trim().to_string()).collect()
        } else {
            line.split_whitespace().map(str::to_string).collect()
        }
    };
    let header = split(header_line);
    let instance_pos = header.iter().position(|h| h == INSTANCE_COLUMN);
    let d = schema.len();
    // file column -> schema position
    let mut target = vec![None; header.len()];
    let mut seen = vec![false; d];
    for (c, name) in header.iter().enumerate() {
        if Some(c) == instance_pos {
            continue;
        }
        let f = schema
            .position(name)
            .ok_or_else(|| Error::Schema(format!("attribution column '{name}' is not a feature of the dataset")))?;
        if std::mem::replace(&mut seen[f], true) {
            return Err(Error::Schema(format!("attribution column '{name}' appears twice")));
        }
        target[c] = Some(f);
    }
    if let Some(f) = seen.iter().position(|s| !s) {
        return Err(Error::Schema(format!(
            "attribution file lacks feature '{}'",
            schema.feature_names()[f]
        )));
    }
    let mut values = Vec::new();
    let mut ids = Vec::new();
    for (lineno, line) in lines {
        let cells = split(line);
        if cells.len() != header.len() {
            return Err(Error::Parse {
                row: lineno + 1,
                column: String::new(),
                message: format!("{} cells, header has {}", cells.len(), header.len()),
            });
        }
        let mut row = vec![0.0; d];
        for (c, cell) in cells.iter().enumerate() {
            let bad = |m: String| Error::Parse {
                row: lineno + 1,
                column: header[c].clone(),
                message: m,
            };
            if Some(c) == instance_pos {
                ids.push(
                    cell.parse::<usize>()
                        .map_err(|e| bad(format!("instance id '{cell}': {e}")))?,
                );
                continue;
            }
            let v: f64 = cell.parse().map_err(|e| bad(format!("'{cell}': {e}")))?;
            if !v.is_finite() {
                return Err(bad(format!("non-finite attribution '{cell}'")));
            }
            row[target[c].expect("feature column")] = v;
        }
        values.push(row);
    }
    let instances = instance_pos.map(|_| ids);
    if let Some(exp) = expected {
        let got = instances.clone().unwrap_or_else(|| (0..values.len()).collect());
        if instances.is_none() && got.len() != exp.len() {
            return Err(Error::Consistency(format!(
                "attribution file has {} rows, {} instances declared",
                got.len(),
                exp.len()
            )));
        }
        let instances = instances.unwrap_or_else(|| exp.to_vec());
        if instances != exp {
            return Err(Error::Consistency(
                "attribution instance ids differ from the declared instance list".into(),
            ));
        }
        return AttributionSet::new(
            AttributionSource::Imported,
            schema.feature_names().to_vec(),
            Some(instances),
            values,
        );
    }
    AttributionSet::new(
        AttributionSource::Imported,
        schema.feature_names().to_vec(),
        instances,
        values,
    )
}

/// Feature indices by `|value|` descending, lowest index first on ties.
pub fn rank_features(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].abs().total_cmp(&row[a].abs()).then(a.cmp(&b)));
    order
}

/// `instance` with its first `k` ranked features replaced by the
/// counterfactual's values.
pub fn perturb_topk(instance: &[f64], counterfactual: &[f64], ranking: &[usize], k: usize) -> Result<Vec<f64>> {
    if instance.len() != counterfactual.len() || ranking.len() != instance.len() {
        return Err(Error::Argument(
            "instance, counterfactual and ranking lengths differ".into(),
        ));
    }
    if k > ranking.len() {
        return Err(Error::Argument(format!("k = {k} exceeds {} features", ranking.len())));
    }
    let mut x = instance.to_vec();
    for &f in &ranking[..k] {
        x[f] = counterfactual[f];
    }
    Ok(x)
}

/// Groups in order of their best-ranked member column.
pub fn rank_groups(ranking: &[usize], schema: &FeatureSchema) -> Vec<usize> {
    let mut seen = vec![false; schema.groups().len()];
    let mut out = Vec::new();
    for &f in ranking {
        let g = schema.group_of(f);
        if !std::mem::replace(&mut seen[g], true) {
            out.push(g);
        }
    }
    out
}

/// Like [`perturb_topk`] but moves the first `k` ranked groups as units.
pub fn perturb_top_groups(
    instance: &[f64],
    counterfactual: &[f64],
    group_ranking: &[usize],
    k: usize,
    schema: &FeatureSchema,
) -> Result<Vec<f64>> {
    if k > group_ranking.len() {
        return Err(Error::Argument(format!(
            "k = {k} exceeds {} groups",
            group_ranking.len()
        )));
    }
    let mut x = instance.to_vec();
    for &g in &group_ranking[..k] {
        for &f in &schema.groups()[g].columns {
            x[f] = counterfactual[f];
        }
    }
    Ok(x)
}
