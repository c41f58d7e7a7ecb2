use serde::{Deserialize, Serialize};

use crate::adversary::AdversarySpec;
use std::path::{Path, PathBuf};

use crate::data::{generate_synthetic, load_cifar10, load_idx_split, DataSplit, DatasetKind, PartitionSpec};
use crate::error::{FedError, Result};
use crate::model::{LocalOptimizerConfig, ModelSpec};
use crate::seed::{derive_seed, stream};
use crate::strategy::{StrategyConfig, StrategyKind};

/// Shape of the generated dataset when `dataset = synthetic`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub samples_per_class: usize,
    pub test_samples_per_class: usize,
    pub input_dim: usize,
    /// Seed of the generated data; independent of the experiment seed so that
    /// replicates share one dataset.
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 10,
            samples_per_class: 200,
            test_samples_per_class: 50,
            input_dim: 20,
            seed: 0,
        }
    }
}

/// One fully resolved simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetKind,
    pub partition: PartitionSpec,
    pub model: ModelSpec,
    pub local: LocalOptimizerConfig,
    pub strategy_kind: StrategyKind,
    pub strategy: StrategyConfig,
    pub rounds: usize,
    pub num_clients: usize,
    pub master_seed: u64,
    pub train_subset: Option<usize>,
    pub eval_subset: Option<usize>,
    pub adversary: AdversarySpec,
    pub synthetic: SyntheticSpec,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `dataset` with seeds derived from `master_seed`.
    pub fn new(dataset: DatasetKind, strategy_kind: StrategyKind, num_clients: usize, rounds: usize, master_seed: u64) -> Self {
        let synthetic = SyntheticSpec::default();
        let (input_dim, hidden) = match dataset {
            DatasetKind::Mnist | DatasetKind::Fmnist => (784, vec![128]),
            DatasetKind::Cifar10 => (3072, vec![256]),
            DatasetKind::Synthetic => (synthetic.input_dim, vec![32]),
        };
        let classes = if dataset == DatasetKind::Synthetic { synthetic.classes } else { 10 };
        ExperimentConfig {
            name: "experiment".into(),
            dataset,
            partition: PartitionSpec::iid(num_clients, derive_seed(master_seed, &[stream::PARTITION])),
            model: ModelSpec::new(input_dim, hidden, classes, derive_seed(master_seed, &[stream::MODEL_INIT])),
            local: LocalOptimizerConfig::adam(),
            strategy_kind,
            strategy: StrategyConfig::defaults(strategy_kind, dataset),
            rounds,
            num_clients,
            master_seed,
            train_subset: None,
            eval_subset: None,
            adversary: AdversarySpec::default(),
            synthetic,
        }
    }

    /// Re-derives the partition and model-init seeds from a new master seed.
    pub fn reseed(&mut self, master_seed: u64) {
        self.master_seed = master_seed;
        self.partition.seed = derive_seed(master_seed, &[stream::PARTITION]);
        self.model.init_seed = derive_seed(master_seed, &[stream::MODEL_INIT]);
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(FedError::config("experiment.rounds", "must be >= 1"));
        }
        if self.num_clients < 1 {
            return Err(FedError::config("experiment.num_clients", "must be >= 1"));
        }
        if self.partition.num_clients != self.num_clients {
            return Err(FedError::config(
                "partition.num_clients",
                format!("({}) must equal experiment.num_clients ({})", self.partition.num_clients, self.num_clients),
            ));
        }
        if self.train_subset == Some(0) {
            return Err(FedError::config("experiment.train_subset", "must be >= 1"));
        }
        if self.eval_subset == Some(0) {
            return Err(FedError::config("experiment.eval_subset", "must be >= 1"));
        }
        if self.dataset == DatasetKind::Synthetic {
            let s = &self.synthetic;
            if s.classes < 2 || s.samples_per_class < 1 || s.test_samples_per_class < 1 || s.input_dim < 1 {
                return Err(FedError::config("synthetic", "needs classes >= 2 and positive sample counts and input_dim"));
            }
        }
        self.partition.validate()?;
        self.model.validate()?;
        self.local.validate()?;
        self.strategy.validate()?;
        self.adversary.validate(self.num_clients)?;
        Ok(())
    }

    /// Human-readable run identifier, e.g. `mnist-fedavg-dirichlet-a0.5`.
    pub fn run_id(&self) -> String {
        let mut id = format!("{}-{}-{}", self.dataset, self.strategy_kind, self.partition.mode.as_str());
        if self.partition.mode == crate::data::PartitionMode::Dirichlet {
            id.push_str(&format!("-a{}", self.partition.alpha));
        }
        if self.adversary.is_active() {
            id.push_str(&format!("-{}", self.adversary.kind.as_str()));
        }
        id
    }
}

/// Environment variable consulted when no data directory is given.
pub const DATA_DIR_ENV: &str = "FEDBENCH_DATA_DIR";

/// Loads (or generates) the data for `cfg`. Real datasets are looked up in
/// `data_dir`, then `$FEDBENCH_DATA_DIR`, then `./data`.
pub fn load_data(cfg: &ExperimentConfig, data_dir: Option<&Path>) -> Result<DataSplit> {
    if cfg.dataset == DatasetKind::Synthetic {
        let s = &cfg.synthetic;
        return Ok(DataSplit {
            train: generate_synthetic(s.classes, s.samples_per_class, s.input_dim, derive_seed(s.seed, &[0]))?,
            test: generate_synthetic(s.classes, s.test_samples_per_class, s.input_dim, derive_seed(s.seed, &[1]))?,
        });
    }
    let dir = match data_dir {
        Some(d) => d.to_path_buf(),
        None => std::env::var_os(DATA_DIR_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("data")),
    };
    match cfg.dataset {
        DatasetKind::Cifar10 => {
            let nested = dir.join("cifar10");
            load_cifar10(if nested.is_dir() { &nested } else { &dir })
        }
        kind => load_idx_split(&dir, kind),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PartitionMode;

    #[test]
    fn defaults_validate() {
        let cfg = ExperimentConfig::new(DatasetKind::Mnist, StrategyKind::FedAvg, 10, 25, 42);
        cfg.validate().unwrap();
        assert_eq!(cfg.model.num_params(), 101_770);
        assert_eq!(cfg.run_id(), "mnist-fedavg-iid");
    }

    #[test]
    fn zero_rounds_rejected() {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, StrategyKind::FedAvg, 3, 1, 0);
        cfg.rounds = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("experiment.rounds"));
    }

    #[test]
    fn reseed_changes_derived_seeds() {
        let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, StrategyKind::FedAvg, 3, 1, 0);
        let before = (cfg.partition.seed, cfg.model.init_seed);
        cfg.reseed(1);
        assert_ne!(before, (cfg.partition.seed, cfg.model.init_seed));
        cfg.partition.mode = PartitionMode::Dirichlet;
        cfg.partition.alpha = 0.5;
        assert_eq!(cfg.run_id(), "synthetic-fedavg-dirichlet-a0.5");
    }
}
