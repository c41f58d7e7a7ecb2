//! CIFAR-10 binary batches: each record is one label byte followed by
//! 3072 pixel bytes (1024 red, 1024 green, 1024 blue).

use std::path::Path;

use super::{DataSplit, Dataset};
use crate::error::{FedError, Result};

const RECORD_LEN: usize = 1 + 3072;

fn load_batches(name: &str, paths: &[std::path::PathBuf]) -> Result<Dataset> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path).map_err(|e| FedError::Ingestion {
            path: path.clone(),
            detail: e.to_string(),
        })?;
        if bytes.is_empty() || bytes.len() % RECORD_LEN != 0 {
            return Err(FedError::Ingestion {
                path: path.clone(),
                detail: format!("{} bytes is not a whole number of {RECORD_LEN}-byte records", bytes.len()),
            });
        }
        for record in bytes.chunks_exact(RECORD_LEN) {
            if record[0] > 9 {
                return Err(FedError::Ingestion {
                    path: path.clone(),
                    detail: format!("label {} outside [0, 10)", record[0]),
                });
            }
            labels.push(record[0] as usize);
            features.extend(record[1..].iter().map(|&p| p as f64 / 255.0));
        }
    }
    Dataset::new(name, features, labels, 3072, 10)
}

/// Loads `data_batch_1..5.bin` and `test_batch.bin` from `dir`.
pub fn load_cifar10(dir: &Path) -> Result<DataSplit> {
    let train: Vec<_> = (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect();
    Ok(DataSplit {
        train: load_batches("cifar10", &train)?,
        test: load_batches("cifar10-test", &[dir.join("test_batch.bin")])?,
    })
}
