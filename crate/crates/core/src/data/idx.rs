//! IDX reader for the MNIST family.
//!
//! Layout: 4-byte big-endian magic, one big-endian u32 per dimension, then
//! unsigned bytes. Labels use magic `0x00000801` (1 dim), images `0x00000803`
//! (3 dims).

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{FedError, Result};

pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;

fn ingestion(path: &Path, detail: impl Into<String>) -> FedError {
    FedError::Ingestion {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Parses an IDX payload, returning its dimensions and the raw data bytes.
fn parse_idx<'a>(path: &Path, bytes: &'a [u8], magic: u32, ndims: usize) -> Result<(Vec<usize>, &'a [u8])> {
    let header_len = 4 + 4 * ndims;
    if bytes.len() < header_len {
        return Err(ingestion(path, format!("file is {} bytes, shorter than its header", bytes.len())));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().expect("4 bytes"));
    let found = word(0);
    if found != magic {
        return Err(ingestion(
            path,
            format!("magic number {found:#010x}, expected {magic:#010x}"),
        ));
    }
    let dims: Vec<usize> = (1..=ndims).map(|i| word(i) as usize).collect();
    let expected: usize = dims.iter().product();
    let data = &bytes[header_len..];
    if data.len() < expected {
        return Err(ingestion(
            path,
            format!("truncated: header declares {expected} data bytes, found {}", data.len()),
        ));
    }
    Ok((dims, &data[..expected]))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| ingestion(path, e.to_string()))
}

/// Loads an image/label IDX pair. Pixels are scaled by 1/255.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let image_bytes = read(images_path)?;
    let label_bytes = read(labels_path)?;
    let (img_dims, pixels) = parse_idx(images_path, &image_bytes, IDX_IMAGES_MAGIC, 3)?;
    let (lbl_dims, labels) = parse_idx(labels_path, &label_bytes, IDX_LABELS_MAGIC, 1)?;
    if img_dims[0] != lbl_dims[0] {
        return Err(ingestion(
            labels_path,
            format!(
                "{} labels do not match {} images in {}",
                lbl_dims[0],
                img_dims[0],
                images_path.display()
            ),
        ));
    }
    let input_dim = img_dims[1] * img_dims[2];
    if input_dim == 0 {
        return Err(ingestion(images_path, "zero-sized images"));
    }
    let labels: Vec<usize> = labels.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1).max(10);
    let features = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Dataset::new(name, features, labels, input_dim, num_classes)
}
