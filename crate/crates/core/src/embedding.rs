//! Two-dimensional classical MDS of a distance matrix.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proximity::DistanceMatrix;

pub const DEFAULT_INF_CAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingCoords {
    pub coords: Vec<[f64; 2]>,
    /// The two retained eigenvalues after clamping at zero.
    pub eigenvalues: [f64; 2],
    /// Kruskal stress-1 of the embedded distances against the (capped)
    /// input distances.
    pub stress: f64,
    /// Share of total absolute spectrum not represented by the two axes,
    /// negative eigenvalues included.
    pub discarded_mass: f64,
}

impl EmbeddingCoords {
    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.coords[i], self.coords[j]);
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
    }
}

/// Classical MDS. Unreachable entries are replaced by `inf_cap_factor`
/// times the largest finite distance first.
pub fn mds_embed(distances: &DistanceMatrix, inf_cap_factor: f64) -> Result<EmbeddingCoords> {
    let n = distances.len();
    if n < 2 {
        return Err(Error::Argument(format!("embedding needs at least 2 points, got {n}")));
    }
    if !(inf_cap_factor > 1.0 && inf_cap_factor.is_finite()) {
        return Err(Error::Argument(format!(
            "inf_cap_factor must be > 1, got {inf_cap_factor}"
        )));
    }
    let max_finite = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter_map(|(i, j)| distances.get(i, j).value())
        .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
        .ok_or_else(|| Error::Degenerate("every pairwise distance is infinite".into()))?;
    let cap = inf_cap_factor * max_finite;
    let d = DMatrix::from_fn(n, n, |i, j| distances.get(i, j).value().unwrap_or(cap));

    // B = -1/2 J D^2 J
    let sq = d.map(|v| v * v);
    let row_means: Vec<f64> = (0..n).map(|i| sq.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (sq[(i, j)] - row_means[i] - row_means[j] + grand));

    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &c| eig.eigenvalues[c].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&c)));
    let total: f64 = eig.eigenvalues.iter().map(|v| v.abs()).sum();

    let mut coords = vec![[0.0; 2]; n];
    let mut kept = [0.0; 2];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        kept[axis] = lambda;
        let v = eig.eigenvectors.column(k);
        let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let flip = v.iter().find(|x| x.abs() > 1e-10 * scale).is_some_and(|x| *x < 0.0);
        let s = if flip { -lambda.sqrt() } else { lambda.sqrt() };
        for i in 0..n {
            coords[i][axis] = v[i] * s;
        }
    }

    let mut out = EmbeddingCoords {
        coords,
        eigenvalues: kept,
        stress: 0.0,
        discarded_mass: if total > 0.0 {
            (total - kept[0] - kept[1]).max(0.0) / total
        } else {
            0.0
        },
    };
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n {
        for j in 0..i {
            num += (d[(i, j)] - out.distance(i, j)).powi(2);
            den += d[(i, j)].powi(2);
        }
    }
    out.stress = if den > 0.0 { (num / den).sqrt() } else { 0.0 };
    Ok(out)
}

/// Writes `index,u,v,label,trajectory_flag` rows. `indices[r]` is the
/// caller's id for embedded point `r`.
pub fn write_coords<W: Write>(
    emb: &EmbeddingCoords,
    indices: &[usize],
    labels: &[String],
    on_trajectory: &[bool],
    mut out: W,
) -> Result<()> {
    let n = emb.len();
    if indices.len() != n || labels.len() != n || on_trajectory.len() != n {
        return Err(Error::Argument(
            "coordinate annotations must match the point count".into(),
        ));
    }
    let io = |e| Error::io("<coordinate output>", e);
    writeln!(out, "index,u,v,label,trajectory_flag").map_err(io)?;
    for r in 0..n {
        let [u, v] = emb.coords[r];
        writeln!(
            out,
            "{},{u},{v},{},{}",
            indices[r],
            labels[r],
            u8::from(on_trajectory[r])
        )
        .map_err(io)?;
    }
    Ok(())
}
