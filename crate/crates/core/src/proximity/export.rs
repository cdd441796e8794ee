use std::io::{Read, Write};

use super::{Distance, DistanceMatrix};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"GAPT";
const VERSION: u32 = 1;

fn io_err(e: std::io::Error) -> Error {
    Error::Format(format!("triplet stream: {e}"))
}

/// Writes the matrix as delimiter-separated text, one row per line, with a
/// header of row indices. Unreachable pairs are written as `inf`.
pub fn write_dsv<W: Write>(m: &DistanceMatrix, delimiter: char, mut out: W) -> std::io::Result<()> {
    let d = delimiter.to_string();
    let header: Vec<String> = (0..m.len()).map(|j| j.to_string()).collect();
    writeln!(out, "{}", header.join(&d))?;
    for i in 0..m.len() {
        let row: Vec<String> = m.row(i).iter().map(Distance::to_string).collect();
        writeln!(out, "{}", row.join(&d))?;
    }
    Ok(())
}

/// Binary stream of the finite upper-triangle entries.
///
/// Layout (little endian): `GAPT`, `u32` version, `u64` n, `u64` count,
/// then `count` records of `(u32 i, u32 j, f64 d)` with `i < j`. Pairs
/// absent from the stream are unreachable.
pub fn write_triplets<W: Write>(m: &DistanceMatrix, mut out: W) -> std::io::Result<()> {
    let n = m.len();
    let count = (0..n)
        .map(|i| m.row(i)[i + 1..].iter().filter(|d| !d.is_infinite()).count())
        .sum::<usize>();
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(n as u64).to_le_bytes())?;
    out.write_all(&(count as u64).to_le_bytes())?;
    for i in 0..n {
        for j in i + 1..n {
            if let Some(v) = m.get(i, j).value() {
                out.write_all(&(i as u32).to_le_bytes())?;
                out.write_all(&(j as u32).to_le_bytes())?;
                out.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

fn read_array<const N: usize, R: Read>(r: &mut R) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(io_err)?;
    Ok(b)
}

pub fn read_triplets<R: Read>(mut r: R) -> Result<DistanceMatrix> {
    if &read_array::<4, _>(&mut r)? != MAGIC {
        return Err(Error::Format("not a distance triplet stream".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported triplet stream version {version}")));
    }
    let n = usize::try_from(u64::from_le_bytes(read_array(&mut r)?))
        .map_err(|_| Error::Format("matrix too large".into()))?;
    let count = u64::from_le_bytes(read_array(&mut r)?);
    let mut values = vec![
        Distance::INFINITE;
        n.checked_mul(n)
            .ok_or_else(|| Error::Format("matrix too large".into()))?
    ];
    for i in 0..n {
        values[i * n + i] = Distance::ZERO;
    }
    for _ in 0..count {
        let i = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let j = u32::from_le_bytes(read_array(&mut r)?) as usize;
        let v = f64::from_le_bytes(read_array(&mut r)?);
        if i >= j || j >= n || !v.is_finite() || v < 0.0 {
            return Err(Error::Format(format!("bad triplet ({i}, {j}, {v})")));
        }
        values[i * n + j] = Distance::finite(v);
        values[j * n + i] = Distance::finite(v);
    }
    DistanceMatrix::new(n, values)
}
