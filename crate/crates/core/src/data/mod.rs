//! Tabular and image datasets in a uniform encoded feature space.
//!
//! Every loader produces a [`Dataset`]: a dense row-major matrix of real
//! feature values, one class index per row, and a [`FeatureSchema`] that
//! remembers how the encoded columns map back onto the original features.

mod idx;
mod split;
mod tabular;

pub use idx::{load_idx_images, IdxOptions};
pub use split::{split, SplitIndices};
pub use tabular::{load_tabular, Delimiter, TabularOptions};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Numeric,
    OneHot,
}

/// One original feature and the encoded columns it expands into.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub name: String,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SchemaRepr", into = "SchemaRepr")]
pub struct FeatureSchema {
    feature_names: Vec<String>,
    kinds: Vec<FeatureKind>,
    groups: Vec<FeatureGroup>,
    group_of: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct SchemaRepr {
    feature_names: Vec<String>,
    kinds: Vec<FeatureKind>,
    groups: Vec<FeatureGroup>,
}

impl TryFrom<SchemaRepr> for FeatureSchema {
    type Error = Error;

    fn try_from(r: SchemaRepr) -> Result<Self> {
        FeatureSchema::new(r.feature_names, r.kinds, r.groups)
    }
}

impl From<FeatureSchema> for SchemaRepr {
    fn from(s: FeatureSchema) -> Self {
        SchemaRepr {
            feature_names: s.feature_names,
            kinds: s.kinds,
            groups: s.groups,
        }
    }
}

impl FeatureSchema {
    /// Builds a schema and checks that every encoded column belongs to
    /// exactly one group.
    pub fn new(feature_names: Vec<String>, kinds: Vec<FeatureKind>, groups: Vec<FeatureGroup>) -> Result<Self> {
        if feature_names.len() != kinds.len() {
            return Err(Error::Schema(format!(
                "{} feature names but {} kinds",
                feature_names.len(),
                kinds.len()
            )));
        }
        let d = feature_names.len();
        let mut group_of = vec![usize::MAX; d];
        for (g, group) in groups.iter().enumerate() {
            if group.columns.is_empty() {
                return Err(Error::Schema(format!("group '{}' is empty", group.name)));
            }
            for &c in &group.columns {
                if c >= d {
                    return Err(Error::Schema(format!(
                        "group '{}' references column {c} of {d}",
                        group.name
                    )));
                }
                if group_of[c] != usize::MAX {
                    return Err(Error::Schema(format!("column {c} belongs to more than one group")));
                }
                group_of[c] = g;
            }
        }
        if let Some(c) = group_of.iter().position(|&g| g == usize::MAX) {
            return Err(Error::Schema(format!("column {c} belongs to no group")));
        }
        Ok(Self {
            feature_names,
            kinds,
            groups,
            group_of,
        })
    }

    /// All-numeric schema with one singleton group per column.
    pub fn numeric(feature_names: Vec<String>) -> Self {
        let d = feature_names.len();
        let groups = feature_names
            .iter()
            .enumerate()
            .map(|(c, name)| FeatureGroup {
                name: name.clone(),
                columns: vec![c],
            })
            .collect();
        Self::new(feature_names, vec![FeatureKind::Numeric; d], groups)
            .expect("singleton groups always form a valid schema")
    }

    pub fn len(&self) -> usize {
        self.feature_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.feature_names.is_empty()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn kinds(&self) -> &[FeatureKind] {
        &self.kinds
    }

    pub fn groups(&self) -> &[FeatureGroup] {
        &self.groups
    }

    /// Index of the group that owns encoded column `column`.
    pub fn group_of(&self, column: usize) -> usize {
        self.group_of[column]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }

    /// Checks that one-hot columns of `row` hold 0/1 values with exactly one
    /// active column per categorical group.
    pub fn validate_row(&self, row: &[f64]) -> Result<()> {
        if row.len() != self.len() {
            return Err(Error::Argument(format!(
                "row has {} values, schema has {}",
                row.len(),
                self.len()
            )));
        }
        for group in &self.groups {
            if self.kinds[group.columns[0]] != FeatureKind::OneHot {
                continue;
            }
            let mut active = 0;
            for &c in &group.columns {
                match row[c] {
                    1.0 => active += 1,
                    0.0 => {}
                    v => {
                        return Err(Error::Consistency(format!(
                            "one-hot column '{}' holds {v}",
                            self.feature_names[c]
                        )))
                    }
                }
            }
            if active != 1 {
                return Err(Error::Consistency(format!(
                    "group '{}' has {active} active columns",
                    group.name
                )));
            }
        }
        Ok(())
    }
}

/// Dense labelled dataset over an encoded feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    values: Vec<f64>,
    labels: Vec<usize>,
    classes: Vec<String>,
    schema: FeatureSchema,
}

impl Dataset {
    /// `values` is row-major with `schema.len()` columns; `labels` index
    /// into `classes`.
    pub fn new(values: Vec<f64>, labels: Vec<usize>, classes: Vec<String>, schema: FeatureSchema) -> Result<Self> {
        let d = schema.len();
        if d == 0 {
            return Err(Error::Schema("dataset has no features".into()));
        }
        if values.len() != labels.len() * d {
            return Err(Error::Consistency(format!(
                "{} values do not form {} rows of width {d}",
                values.len(),
                labels.len()
            )));
        }
        if classes.is_empty() {
            return Err(Error::Schema("empty class set".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(Error::Consistency(format!(
                "label index {bad} outside class set of size {}",
                classes.len()
            )));
        }
        Ok(Self {
            values,
            labels,
            classes,
            schema,
        })
    }

    pub fn from_rows(
        rows: &[Vec<f64>],
        labels: Vec<usize>,
        classes: Vec<String>,
        schema: FeatureSchema,
    ) -> Result<Self> {
        let d = schema.len();
        if let Some(r) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::Consistency(format!(
                "row {r} has {} values, expected {d}",
                rows[r].len()
            )));
        }
        Self::new(rows.concat(), labels, classes, schema)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.n_features())
    }

    pub fn value(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.n_features() + feature]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    /// Copies the given rows, in order, into a new dataset that shares the
    /// class set and schema.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let d = self.n_features();
        let mut values = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            values.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            values,
            labels,
            classes: self.classes.clone(),
            schema: self.schema.clone(),
        }
    }

    /// Re-expresses the labels against another class list (for example a
    /// trained forest's). Fails when a present class is missing from it.
    pub fn with_classes(&self, classes: &[String]) -> Result<Dataset> {
        let mut map = Vec::with_capacity(self.classes.len());
        for c in &self.classes {
            map.push(classes.iter().position(|k| k == c));
        }
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                map[l].ok_or_else(|| {
                    Error::Consistency(format!("class '{}' unknown to target class set", self.classes[l]))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Dataset {
            values: self.values.clone(),
            labels,
            classes: classes.to_vec(),
            schema: self.schema.clone(),
        })
    }

    /// Per-column mean over all rows.
    pub fn feature_means(&self) -> Vec<f64> {
        let d = self.n_features();
        let mut mean = vec![0.0; d];
        for row in self.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        let n = self.n_rows().max(1) as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Per-column z-scoring fitted on one dataset and applied to any point.
///
/// Only used by the Euclidean baseline; forest-derived distances are
/// insensitive to monotone feature rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(data: &Dataset) -> Self {
        let mean = data.feature_means();
        let mut var = vec![0.0; data.n_features()];
        for row in data.rows() {
            for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let n = data.n_rows().max(1) as f64;
        let scale = var
            .into_iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

/// Orders class labels numerically when every label parses as a number,
/// lexicographically otherwise.
pub(crate) fn sort_class_names(names: &mut [String]) {
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.trim().parse::<f64>().ok()).collect();
    if numeric.is_some() {
        names.sort_by(|a, b| {
            let (x, y) = (a.trim().parse::<f64>().unwrap(), b.trim().parse::<f64>().unwrap());
            x.total_cmp(&y).then_with(|| a.cmp(b))
        });
    } else {
        names.sort();
    }
}
