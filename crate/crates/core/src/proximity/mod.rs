//! RF-GAP proximities, the symmetric RF-GAP distance, and Euclidean
//! distances, either as dense matrices or as on-demand rows through a
//! [`DistanceBackend`].

mod backend;
mod export;
mod gap;

pub use backend::{
    metrics, BackendContext, DistanceBackend, EuclideanBackend, MatrixBackend, MetricBuilder, RfGapBackend, METRICS,
};
pub use export::{read_triplets, write_dsv, write_triplets};
pub use gap::{ReferenceWeights, RfGap};

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};

/// Non-negative distance with a dedicated unreachable value.
///
/// `Distance::INFINITE` compares greater than every finite distance, so
/// argmin searches never pick it while a finite candidate exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Distance(f64);

impl Distance {
    pub const ZERO: Distance = Distance(0.0);
    pub const INFINITE: Distance = Distance(f64::INFINITY);

    pub fn finite(value: f64) -> Self {
        assert!(value.is_finite() && value >= 0.0, "invalid distance {value}");
        Distance(value)
    }

    /// `1 / (0.5 * (p_ij + p_ji))`, infinite when both proximities vanish.
    pub fn from_proximities(p_ij: f64, p_ji: f64) -> Self {
        let s = 0.5 * (p_ij + p_ji);
        if s > 0.0 {
            Distance(1.0 / s)
        } else {
            Distance::INFINITE
        }
    }

    pub fn is_infinite(self) -> bool {
        self.0.is_infinite()
    }

    /// Finite value, `None` for the unreachable sentinel.
    pub fn value(self) -> Option<f64> {
        (!self.is_infinite()).then_some(self.0)
    }

    /// Raw value with `f64::INFINITY` for the sentinel.
    pub fn as_f64(self) -> f64 {
        self.0
    }
}

impl Eq for Distance {}

impl PartialOrd for Distance {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Distance {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for Distance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.value() {
            Some(v) => write!(f, "{v}"),
            None => f.write_str("inf"),
        }
    }
}

/// Dense `n x n` RF-GAP proximity matrix over a reference set.
#[derive(Debug, Clone, PartialEq)]
pub struct ProximityMatrix {
    n: usize,
    values: Vec<f64>,
    /// Rows of the reference set whose proximity row is undefined (no
    /// out-of-bag trees); those rows are left at zero and listed here.
    pub no_oob: Vec<usize>,
}

impl ProximityMatrix {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Argument("proximity matrix must be square".into()));
        }
        Ok(Self {
            n,
            values: rows.concat(),
            no_oob: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Symmetric distance matrix with zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<Distance>,
}

impl DistanceMatrix {
    /// Builds from a full square matrix; checks symmetry and zero diagonal.
    pub fn new(n: usize, values: Vec<Distance>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Argument(format!(
                "{} entries for a {n}x{n} matrix",
                values.len()
            )));
        }
        for i in 0..n {
            if values[i * n + i] != Distance::ZERO {
                return Err(Error::Argument(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if values[i * n + j] != values[j * n + i] {
                    return Err(Error::Argument(format!("asymmetric entry ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, values })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Distance) -> Result<Self> {
        let mut values = vec![Distance::ZERO; n * n];
        for i in 0..n {
            for j in 0..i {
                let d = f(i, j);
                values[i * n + j] = d;
                values[j * n + i] = d;
            }
        }
        Self::new(n, values)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> Distance {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[Distance] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

/// Symmetric RF-GAP distance from a proximity matrix.
pub fn gap_distance(prox: &ProximityMatrix) -> DistanceMatrix {
    let n = prox.len();
    DistanceMatrix::from_fn(n, |i, j| Distance::from_proximities(prox.get(i, j), prox.get(j, i)))
        .expect("construction is symmetric with zero diagonal")
}

fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise L2 distances between the rows of `data`.
pub fn euclidean_distance(data: &Dataset) -> Result<DistanceMatrix> {
    if data.is_empty() {
        return Err(Error::EmptyReference);
    }
    DistanceMatrix::from_fn(data.n_rows(), |i, j| Distance::finite(l2(data.row(i), data.row(j))))
}
