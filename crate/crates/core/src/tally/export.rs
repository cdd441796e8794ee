use std::io::Write;

use super::PartitionTally;
use crate::error::{Error, Result};

/// `(feature name, count)` sorted by `|count|` descending, then by feature
/// position.
pub fn sorted_records(tally: &PartitionTally, names: &[String]) -> Result<Vec<(String, i64)>> {
    if names.len() != tally.len() {
        return Err(Error::Schema(format!(
            "{} names for {} tally entries",
            names.len(),
            tally.len()
        )));
    }
    let mut order: Vec<usize> = (0..tally.len()).collect();
    order.sort_by_key(|&f| (std::cmp::Reverse(tally.counts[f].unsigned_abs()), f));
    Ok(order.into_iter().map(|f| (names[f].clone(), tally.counts[f])).collect())
}

/// Writes `feature,count` lines with a header; `limit` keeps the first rows.
pub fn write_records<W: Write>(
    tally: &PartitionTally,
    names: &[String],
    limit: Option<usize>,
    mut out: W,
) -> Result<()> {
    let io = |e| Error::io("<tally output>", e);
    writeln!(out, "feature,count").map_err(io)?;
    let records = sorted_records(tally, names)?;
    for (name, c) in records.iter().take(limit.unwrap_or(usize::MAX)) {
        writeln!(out, "{name},{c}").map_err(io)?;
    }
    Ok(())
}

/// Writes the tally as a `width`-column grid of space-separated counts,
/// row-major (28 for MNIST images).
pub fn write_grid<W: Write>(tally: &PartitionTally, width: usize, mut out: W) -> Result<()> {
    if width == 0 || !tally.len().is_multiple_of(width) {
        return Err(Error::Argument(format!(
            "{} entries do not form rows of {width}",
            tally.len()
        )));
    }
    for row in tally.counts.chunks(width) {
        let cells: Vec<String> = row.iter().map(i64::to_string).collect();
        writeln!(out, "{}", cells.join(" ")).map_err(|e| Error::io("<grid output>", e))?;
    }
    Ok(())
}
