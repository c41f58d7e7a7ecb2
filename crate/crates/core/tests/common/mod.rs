#![allow(dead_code)]

pub mod oracle;

use std::path::PathBuf;

use fedbench::data::{load_idx_split, DataSplit, DatasetKind};
use fedbench::model::ParameterVector;
use fedbench::strategy::ClientUpdate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> Vec<f64> {
    (0..len).map(|_| rng.random_range(-scale..scale)).collect()
}

/// `k` updates of length `len` with client ids 0..k and sample counts 1..=100.
pub fn random_updates(rng: &mut ChaCha8Rng, k: usize, len: usize) -> Vec<ClientUpdate> {
    (0..k)
        .map(|id| {
            let n = rng.random_range(1..=100);
            ClientUpdate::new(id, ParameterVector::new(random_vec(rng, len, 2.0)), n)
        })
        .collect()
}

pub fn data_dir() -> PathBuf {
    std::env::var_os("FEDBENCH_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

/// MNIST from the data directory, or `None` when the files are absent.
pub fn mnist() -> Option<DataSplit> {
    load_idx_split(&data_dir(), DatasetKind::Mnist).ok()
}

pub const MNIST_HINT: &str = "MNIST not found; run scripts/fetch-mnist.sh or set FEDBENCH_DATA_DIR";
