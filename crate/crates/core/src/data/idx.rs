use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureSchema};
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IdxOptions {
    /// Keep at most this many images (from the start of the file).
    #[serde(default)]
    pub limit: Option<usize>,
    /// Scale pixels from [0, 255] to [0, 1].
    #[serde(default)]
    pub normalize: bool,
}

fn read_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Format(format!("truncated {what} header")))?;
    Ok(u32::from_be_bytes(buf))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?))
}

/// Loads an IDX image file (ubyte, rank 3) and its matching IDX label file.
///
/// Each image is flattened row-major into `rows * cols` features named
/// `px_<row>_<col>`. The class set is the digits `0..=max(9, max label)` so
/// that separately loaded train and test files share class indices.
pub fn load_idx_images(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    options: &IdxOptions,
) -> Result<Dataset> {
    let mut images = open(images_path.as_ref())?;
    let mut labels = open(labels_path.as_ref())?;

    let magic = read_u32(&mut images, "image")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let n_images = read_u32(&mut images, "image")? as usize;
    let rows = read_u32(&mut images, "image")? as usize;
    let cols = read_u32(&mut images, "image")? as usize;

    let magic = read_u32(&mut labels, "label")?;
    if magic != LABEL_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let n_labels = read_u32(&mut labels, "label")? as usize;
    if n_images != n_labels {
        return Err(Error::Consistency(format!("{n_images} images but {n_labels} labels")));
    }

    let n = options.limit.map_or(n_images, |l| l.min(n_images));
    let d = rows * cols;
    if d == 0 {
        return Err(Error::Format("images have zero pixels".into()));
    }
    let mut pixels = vec![0u8; n * d];
    images
        .read_exact(&mut pixels)
        .map_err(|_| Error::Format(format!("image file truncated before {n} images")))?;
    let mut raw_labels = vec![0u8; n];
    labels
        .read_exact(&mut raw_labels)
        .map_err(|_| Error::Format(format!("label file truncated before {n} labels")))?;

    let scale = if options.normalize { 1.0 / 255.0 } else { 1.0 };
    let values = pixels.iter().map(|&p| f64::from(p) * scale).collect();
    let max_label = raw_labels.iter().copied().max().unwrap_or(0).max(9);
    let classes = (0..=max_label).map(|c| c.to_string()).collect();
    let names = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| format!("px_{r}_{c}")))
        .collect();
    Dataset::new(
        values,
        raw_labels.into_iter().map(usize::from).collect(),
        classes,
        FeatureSchema::numeric(names),
    )
}
