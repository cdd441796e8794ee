use super::{l2, Distance, DistanceMatrix, ReferenceWeights, RfGap};
use crate::data::{Dataset, Standardizer};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::registry::Registry;

/// Distances from a point to every row of a fixed reference set.
///
/// Points are either reference rows (by index) or unseen query vectors.
pub trait DistanceBackend: Send + Sync {
    /// Registry name of the metric (`euclidean`, `rf_gap`, ...).
    fn name(&self) -> &str;

    /// Size of the reference set.
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn reference_distances(&self, i: usize) -> Result<Vec<Distance>>;

    fn query_distances(&self, x: &[f64]) -> Result<Vec<Distance>>;
}

/// Everything a metric builder may draw on.
#[derive(Clone, Copy)]
pub struct BackendContext<'a> {
    pub forest: &'a Forest,
    pub reference: &'a Dataset,
    pub weights: ReferenceWeights,
    /// z-score features before Euclidean distances.
    pub standardize: bool,
}

pub type MetricBuilder = for<'a> fn(&BackendContext<'a>) -> Result<Box<dyn DistanceBackend + 'a>>;

fn build_euclidean<'a>(ctx: &BackendContext<'a>) -> Result<Box<dyn DistanceBackend + 'a>> {
    Ok(Box::new(EuclideanBackend::new(ctx.reference, ctx.standardize)?))
}

fn build_rf_gap<'a>(ctx: &BackendContext<'a>) -> Result<Box<dyn DistanceBackend + 'a>> {
    Ok(Box::new(RfGapBackend::new(ctx.forest, ctx.reference, ctx.weights)?))
}

/// Builtin distance metrics.
pub fn metrics() -> Registry<MetricBuilder> {
    Registry::new("metric")
        .with(
            "euclidean",
            "L2 distance over encoded features",
            build_euclidean as MetricBuilder,
        )
        .with(
            "rf_gap",
            "symmetric RF-GAP distance from the forest",
            build_rf_gap as MetricBuilder,
        )
}

/// Names of the builtin metrics.
pub const METRICS: [&str; 2] = ["euclidean", "rf_gap"];

pub struct EuclideanBackend {
    d: usize,
    rows: Vec<f64>,
    scaler: Option<Standardizer>,
}

impl EuclideanBackend {
    pub fn new(reference: &Dataset, standardize: bool) -> Result<Self> {
        if reference.is_empty() {
            return Err(Error::EmptyReference);
        }
        let scaler = standardize.then(|| Standardizer::fit(reference));
        let rows = match &scaler {
            Some(s) => reference.rows().flat_map(|r| s.apply(r)).collect(),
            None => reference.rows().flatten().copied().collect(),
        };
        Ok(Self {
            d: reference.n_features(),
            rows,
            scaler,
        })
    }

    fn to_all(&self, x: &[f64]) -> Vec<Distance> {
        self.rows
            .chunks_exact(self.d)
            .map(|r| Distance::finite(l2(x, r)))
            .collect()
    }
}

impl DistanceBackend for EuclideanBackend {
    fn name(&self) -> &str {
        "euclidean"
    }

    fn len(&self) -> usize {
        self.rows.len() / self.d
    }

    fn reference_distances(&self, i: usize) -> Result<Vec<Distance>> {
        if i >= self.len() {
            return Err(Error::Argument(format!("reference row {i} of {}", self.len())));
        }
        let x = self.rows[i * self.d..(i + 1) * self.d].to_vec();
        Ok(self.to_all(&x))
    }

    fn query_distances(&self, x: &[f64]) -> Result<Vec<Distance>> {
        if x.len() != self.d {
            return Err(Error::Argument(format!(
                "query has {} features, expected {}",
                x.len(),
                self.d
            )));
        }
        Ok(match &self.scaler {
            Some(s) => self.to_all(&s.apply(x)),
            None => self.to_all(x),
        })
    }
}

pub struct RfGapBackend<'a> {
    gap: RfGap<'a>,
}

impl<'a> RfGapBackend<'a> {
    pub fn new(forest: &'a Forest, reference: &Dataset, weights: ReferenceWeights) -> Result<Self> {
        Ok(Self {
            gap: RfGap::new(forest, reference, weights)?,
        })
    }

    pub fn proximity(&self) -> &RfGap<'a> {
        &self.gap
    }
}

impl DistanceBackend for RfGapBackend<'_> {
    fn name(&self) -> &str {
        "rf_gap"
    }

    fn len(&self) -> usize {
        self.gap.len()
    }

    fn reference_distances(&self, i: usize) -> Result<Vec<Distance>> {
        self.gap.distances_from_row(i)
    }

    fn query_distances(&self, x: &[f64]) -> Result<Vec<Distance>> {
        self.gap.distances_from_query(x)
    }
}

/// Precomputed distances among reference points; no query support.
pub struct MatrixBackend {
    name: String,
    matrix: DistanceMatrix,
}

impl MatrixBackend {
    pub fn new(name: impl Into<String>, matrix: DistanceMatrix) -> Self {
        Self {
            name: name.into(),
            matrix,
        }
    }
}

impl DistanceBackend for MatrixBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn len(&self) -> usize {
        self.matrix.len()
    }

    fn reference_distances(&self, i: usize) -> Result<Vec<Distance>> {
        if i >= self.matrix.len() {
            return Err(Error::Argument(format!("reference row {i} of {}", self.matrix.len())));
        }
        Ok(self.matrix.row(i).to_vec())
    }

    fn query_distances(&self, _x: &[f64]) -> Result<Vec<Distance>> {
        Err(Error::Argument(format!(
            "metric '{}' is precomputed over reference points only",
            self.name
        )))
    }
}
