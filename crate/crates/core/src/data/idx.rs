//! IDX binary container parsing (big-endian, MNIST family).

use std::path::Path;

use crate::data::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn ingest_err(file: &Path, msg: impl Into<String>) -> Error {
    Error::Ingest { file: file.to_path_buf(), msg: msg.into() }
}

fn read_be_u32(bytes: &[u8], off: usize, file: &Path) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| ingest_err(file, "truncated header"))
}

/// Parses an IDX image file into `(n, rows, cols, pixel bytes)`.
pub fn parse_idx_images<'a>(bytes: &'a [u8], file: &Path) -> Result<(usize, usize, usize, &'a [u8])> {
    let magic = read_be_u32(bytes, 0, file)?;
    if magic != IMAGES_MAGIC {
        return Err(ingest_err(file, format!("bad magic {magic:#010x}, want 0x00000803")));
    }
    let n = read_be_u32(bytes, 4, file)? as usize;
    let rows = read_be_u32(bytes, 8, file)? as usize;
    let cols = read_be_u32(bytes, 12, file)? as usize;
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(ingest_err(
            file,
            format!("expected {} pixel bytes, found {}", n * rows * cols, body.len()),
        ));
    }
    Ok((n, rows, cols, body))
}

/// Parses an IDX label file into label bytes.
pub fn parse_idx_labels<'a>(bytes: &'a [u8], file: &Path) -> Result<&'a [u8]> {
    let magic = read_be_u32(bytes, 0, file)?;
    if magic != LABELS_MAGIC {
        return Err(ingest_err(file, format!("bad magic {magic:#010x}, want 0x00000801")));
    }
    let n = read_be_u32(bytes, 4, file)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(ingest_err(file, format!("expected {n} labels, found {}", body.len())));
    }
    Ok(body)
}

/// Loads an image/label IDX pair. Pixels are scaled by 1/255 into `[0, 1]`.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<LabeledDataset> {
    let img_bytes = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = std::fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (n, rows, cols, pixels) = parse_idx_images(&img_bytes, images_path)?;
    let labels = parse_idx_labels(&lbl_bytes, labels_path)?;
    if labels.len() != n {
        return Err(ingest_err(
            labels_path,
            format!("{} labels for {} images", labels.len(), n),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(ingest_err(labels_path, format!("label {bad} outside 0..10")));
    }
    let data: Vec<f32> = pixels.iter().map(|&b| b as f32 / 255.0).collect();
    Ok(LabeledDataset {
        images: Tensor::from_vec(&[n, 1, rows, cols], data)?,
        labels: labels.to_vec(),
        split,
    })
}
