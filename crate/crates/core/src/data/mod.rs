//! Datasets, their loaders and client partitioning.

mod cifar;
mod idx;
mod partition;
mod synthetic;

use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::model::Batch;

pub use cifar::load_cifar10;
pub use idx::{load_idx_dataset, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use partition::{
    class_counts, mean_total_variation, partition, Partition, PartitionMode, PartitionSpec,
};
pub use synthetic::generate_synthetic;

/// Row-major feature matrix with one class label per row. Features lie in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
    pub input_dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        features: Vec<f64>,
        labels: Vec<usize>,
        input_dim: usize,
        num_classes: usize,
    ) -> Result<Self> {
        if input_dim == 0 || features.len() != labels.len() * input_dim {
            return Err(FedError::Shape(format!(
                "{} features cannot form {} rows of width {input_dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(FedError::Shape(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Dataset {
            name: name.into(),
            features,
            labels,
            input_dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.input_dim..(i + 1) * self.input_dim]
    }

    /// Contiguous rows `[start, end)` as a batch.
    pub fn slice(&self, start: usize, end: usize) -> Batch<'_> {
        Batch::new(
            &self.features[start * self.input_dim..end * self.input_dim],
            &self.labels[start..end],
        )
    }

    /// First `n` rows (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            name: self.name.clone(),
            features: self.features[..n * self.input_dim].to_vec(),
            labels: self.labels[..n].to_vec(),
            input_dim: self.input_dim,
            num_classes: self.num_classes,
        }
    }

    /// Copies the selected rows into `features`/`labels`, replacing their contents.
    pub fn gather_into(&self, indices: &[usize], features: &mut Vec<f64>, labels: &mut Vec<usize>) {
        features.clear();
        labels.clear();
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
    }
}

/// Train and held-out test split of one benchmark.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Datasets the runner knows how to locate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Mnist,
    Fmnist,
    Cifar10,
    Synthetic,
}

impl DatasetKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fmnist => "fmnist",
            DatasetKind::Cifar10 => "cifar10",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "mnist" => Ok(DatasetKind::Mnist),
            "fmnist" => Ok(DatasetKind::Fmnist),
            "cifar10" => Ok(DatasetKind::Cifar10),
            "synthetic" => Ok(DatasetKind::Synthetic),
            other => Err(format!(
                "unknown dataset `{other}` (expected mnist | fmnist | cifar10 | synthetic)"
            )),
        }
    }
}

/// Loads an IDX benchmark from `dir/<name>/` or, failing that, `dir/` itself,
/// using the conventional `train-*`/`t10k-*` file names.
pub fn load_idx_split(dir: &std::path::Path, kind: DatasetKind) -> Result<DataSplit> {
    let nested = dir.join(kind.as_str());
    let base = if nested.join("train-images-idx3-ubyte").exists() {
        nested
    } else {
        dir.to_path_buf()
    };
    let mut train = load_idx_dataset(
        &base.join("train-images-idx3-ubyte"),
        &base.join("train-labels-idx1-ubyte"),
    )?;
    let mut test = load_idx_dataset(
        &base.join("t10k-images-idx3-ubyte"),
        &base.join("t10k-labels-idx1-ubyte"),
    )?;
    train.name = kind.as_str().into();
    test.name = format!("{}-test", kind.as_str());
    Ok(DataSplit { train, test })
}
