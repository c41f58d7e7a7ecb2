//! IID and Dirichlet label-skew partitioning of a dataset across clients.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{FedError, Result};
use crate::seed::{rng_from_seed, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionMode {
    Iid,
    Dirichlet,
}

impl PartitionMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PartitionMode::Iid => "iid",
            PartitionMode::Dirichlet => "dirichlet",
        }
    }
}

impl std::str::FromStr for PartitionMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "iid" => Ok(PartitionMode::Iid),
            "dirichlet" => Ok(PartitionMode::Dirichlet),
            other => Err(format!("unknown partition mode `{other}` (expected iid | dirichlet)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSpec {
    pub mode: PartitionMode,
    pub num_clients: usize,
    /// Dirichlet concentration; ignored for IID.
    pub alpha: f64,
    pub seed: u64,
}

impl PartitionSpec {
    pub fn iid(num_clients: usize, seed: u64) -> Self {
        PartitionSpec {
            mode: PartitionMode::Iid,
            num_clients,
            alpha: 0.5,
            seed,
        }
    }

    pub fn dirichlet(num_clients: usize, alpha: f64, seed: u64) -> Self {
        PartitionSpec {
            mode: PartitionMode::Dirichlet,
            num_clients,
            alpha,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_clients < 1 {
            return Err(FedError::config("experiment.num_clients", "must be >= 1"));
        }
        if self.mode == PartitionMode::Dirichlet && !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(FedError::config("partition.alpha", "must be a finite value > 0"));
        }
        Ok(())
    }
}

/// Per-client lists of dataset row indices; a disjoint cover of `0..N`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub assignments: Vec<Vec<usize>>,
}

impl Partition {
    pub fn num_clients(&self) -> usize {
        self.assignments.len()
    }

    /// Checks disjointness, cover of `0..num_samples` and that no client is empty.
    pub fn check_cover(&self, num_samples: usize) -> Result<()> {
        let mut seen = vec![false; num_samples];
        for (client, indices) in self.assignments.iter().enumerate() {
            if indices.is_empty() {
                return Err(FedError::Protocol(format!("client {client} has no samples")));
            }
            for &i in indices {
                if i >= num_samples {
                    return Err(FedError::Protocol(format!("index {i} out of range")));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(FedError::Protocol(format!("index {i} assigned twice")));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|&s| !s) {
            return Err(FedError::Protocol(format!("index {missing} unassigned")));
        }
        Ok(())
    }
}

fn sample_dirichlet(rng: &mut SimRng, alpha: f64, k: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated positive");
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|d| *d /= total);
    } else {
        // every draw underflowed: the alpha -> 0 limit is a random vertex
        draws.iter_mut().for_each(|d| *d = 0.0);
        draws[rng.random_range(0..k)] = 1.0;
    }
    draws
}

/// Splits `dataset` across `spec.num_clients` clients.
///
/// IID shuffles all indices and cuts them into near-equal contiguous chunks.
/// Dirichlet draws per-class proportions `p_c ~ Dir(alpha)` and hands each
/// class's shuffled samples out by cumulative proportion; afterwards every
/// empty client takes one sample from the currently largest client.
pub fn partition(dataset: &Dataset, spec: &PartitionSpec) -> Result<Partition> {
    spec.validate()?;
    let n = dataset.len();
    let k = spec.num_clients;
    if n == 0 {
        return Err(FedError::config("dataset", "must contain at least one sample"));
    }
    if k > n {
        return Err(FedError::config(
            "experiment.num_clients",
            format!("({k}) exceeds the number of samples ({n})"),
        ));
    }
    let mut rng = rng_from_seed(spec.seed);
    let mut assignments = match spec.mode {
        PartitionMode::Iid => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng);
            let (base, extra) = (n / k, n % k);
            let mut start = 0;
            (0..k)
                .map(|c| {
                    let len = base + usize::from(c < extra);
                    let chunk = order[start..start + len].to_vec();
                    start += len;
                    chunk
                })
                .collect::<Vec<_>>()
        }
        PartitionMode::Dirichlet => {
            let mut assignments = vec![Vec::new(); k];
            for class in 0..dataset.num_classes {
                let mut members: Vec<usize> =
                    (0..n).filter(|&i| dataset.labels[i] == class).collect();
                if members.is_empty() {
                    continue;
                }
                members.shuffle(&mut rng);
                let props = sample_dirichlet(&mut rng, spec.alpha, k);
                let m = members.len();
                let mut cumulative = 0.0;
                let mut start = 0;
                for (client, p) in props.iter().enumerate() {
                    cumulative += p;
                    let end = if client + 1 == k {
                        m
                    } else {
                        ((cumulative * m as f64) as usize).clamp(start, m)
                    };
                    assignments[client].extend_from_slice(&members[start..end]);
                    start = end;
                }
            }
            repair_empty(&mut assignments);
            assignments
        }
    };
    for a in &mut assignments {
        a.sort_unstable();
    }
    Ok(Partition { assignments })
}

fn repair_empty(assignments: &mut [Vec<usize>]) {
    while let Some(empty) = assignments.iter().position(Vec::is_empty) {
        let donor = (0..assignments.len())
            .max_by_key(|&c| (assignments[c].len(), std::cmp::Reverse(c)))
            .expect("at least one client");
        let moved = assignments[donor].pop().expect("donor holds at least two samples");
        assignments[empty].push(moved);
    }
}

/// `counts[client][class]`.
pub fn class_counts(partition: &Partition, dataset: &Dataset) -> Vec<Vec<usize>> {
    partition
        .assignments
        .iter()
        .map(|indices| {
            let mut counts = vec![0; dataset.num_classes];
            for &i in indices {
                counts[dataset.labels[i]] += 1;
            }
            counts
        })
        .collect()
}

/// Mean over clients of the total-variation distance between the client's
/// label distribution and the global one.
pub fn mean_total_variation(partition: &Partition, dataset: &Dataset) -> f64 {
    let mut global = vec![0.0; dataset.num_classes];
    for &y in &dataset.labels {
        global[y] += 1.0 / dataset.len() as f64;
    }
    let counts = class_counts(partition, dataset);
    let total: f64 = counts
        .iter()
        .map(|row| {
            let size: usize = row.iter().sum();
            0.5 * row
                .iter()
                .zip(&global)
                .map(|(&c, g)| (c as f64 / size as f64 - g).abs())
                .sum::<f64>()
        })
        .sum();
    total / counts.len() as f64
}
