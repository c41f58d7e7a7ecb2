//! The round loop: broadcast, concurrent local training, collection,
//! aggregation and centralized evaluation, with per-round metrics.

mod client;
mod experiment;

use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversary::{corrupt, AdversarySpec};
use crate::data::{class_counts, partition, DataSplit, Dataset};
use crate::error::{FedError, Result};
use crate::model::{evaluate_batch, init_model, EvalTally, LocalOptimizerConfig, ModelSpec, ParameterVector};
use crate::seed::{derive_seed, rng_from_seed, stream};
use crate::strategy::{ClientUpdate, Strategy, StrategyState, TimingRecord};

pub use client::{train_client, RoundInstruction};
pub use experiment::{load_data, ExperimentConfig, SyntheticSpec, DATA_DIR_ENV};

/// Metrics recorded after every round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    /// 1-based round index.
    pub round: usize,
    pub centralized_accuracy: f64,
    pub centralized_loss: f64,
    pub agg_time_s: f64,
    pub train_time_s: f64,
    pub comm_time_s: f64,
    /// Clip norm applied this round (DP only).
    pub clip_norm: Option<f64>,
}

const EVAL_CHUNK: usize = 1000;

/// Accuracy and mean cross-entropy of `params` on `test`.
pub fn evaluate_centralized(params: &ParameterVector, spec: &ModelSpec, test: &Dataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(FedError::Shape("empty evaluation set".into()));
    }
    let starts: Vec<usize> = (0..test.len()).step_by(EVAL_CHUNK).collect();
    let tallies = starts
        .par_iter()
        .map(|&s| evaluate_batch(params, spec, test.slice(s, (s + EVAL_CHUNK).min(test.len()))))
        .collect::<Result<Vec<EvalTally>>>()?;
    // summed in chunk order so the result does not depend on thread scheduling
    let total = tallies.iter().fold(EvalTally::default(), |acc, t| EvalTally {
        loss_sum: acc.loss_sum + t.loss_sum,
        correct: acc.correct + t.correct,
        count: acc.count + t.count,
    });
    Ok((
        total.correct as f64 / total.count as f64,
        total.loss_sum / total.count as f64,
    ))
}

/// A client: its id and the rows of the training set it holds.
#[derive(Debug, Clone)]
pub struct ClientShard {
    pub id: usize,
    pub indices: Vec<usize>,
}

/// Everything fixed for the lifetime of a simulation.
pub struct Federation<'d> {
    pub spec: ModelSpec,
    pub local: LocalOptimizerConfig,
    pub train: &'d Dataset,
    pub test: &'d Dataset,
    pub clients: Vec<ClientShard>,
    pub adversary: AdversarySpec,
    pub master_seed: u64,
}

fn seconds_since(start: Instant) -> f64 {
    start.elapsed().as_secs_f64()
}

impl Federation<'_> {
    /// One communication round. Every client participates; updates are
    /// committed in client-id order regardless of which finishes first.
    pub fn run_round(
        &self,
        global: &ParameterVector,
        strategy: &mut Strategy,
        round: usize,
    ) -> Result<(ParameterVector, RoundMetrics)> {
        if self.clients.is_empty() {
            return Err(FedError::Protocol("no clients".into()));
        }
        let proximal_mu = strategy.proximal_mu();
        let clip_norm = strategy.clip_norm();

        let distribute = Instant::now();
        let results: Vec<Result<(ClientUpdate, Vec<u8>)>> = self
            .clients
            .par_iter()
            .map(|client| {
                if client.indices.is_empty() {
                    return Err(FedError::Protocol(format!("client {} has an empty shard", client.id)));
                }
                let mut timing = TimingRecord::default();
                // server -> client
                let t = Instant::now();
                let payload = global.to_bytes();
                timing.serialize_seconds += seconds_since(t);
                let t = Instant::now();
                let received = ParameterVector::from_bytes(&payload)?;
                timing.deserialize_seconds += seconds_since(t);

                let instruction = RoundInstruction {
                    round,
                    client_id: client.id,
                    seed: derive_seed(self.master_seed, &[stream::CLIENT_TRAIN, round as u64, client.id as u64]),
                    proximal_mu,
                    local: &self.local,
                };
                let t = Instant::now();
                let trained = train_client(&received, &self.spec, self.train, &client.indices, &instruction)?;
                timing.train_seconds = seconds_since(t);

                let t = Instant::now();
                let upload = trained.to_bytes();
                timing.serialize_seconds += seconds_since(t);
                let mut update = ClientUpdate::new(client.id, ParameterVector::zeros(0), client.indices.len());
                update.timing = timing;
                Ok((update, upload))
            })
            .collect();
        let train_time_s = seconds_since(distribute);

        let mut updates = Vec::with_capacity(results.len());
        for result in results {
            let (mut update, upload) = result?;
            // client -> server
            let t = Instant::now();
            update.new_params = ParameterVector::from_bytes(&upload)?;
            update.timing.deserialize_seconds += seconds_since(t);
            if self.adversary.is_active() {
                let seed = derive_seed(self.master_seed, &[stream::ADVERSARY, round as u64, update.client_id as u64]);
                update = corrupt(update, global, &self.adversary, seed);
            }
            updates.push(update);
        }
        let comm_time_s = updates
            .iter()
            .map(|u| u.timing.serialize_seconds + u.timing.deserialize_seconds)
            .sum();

        let mut noise_rng = rng_from_seed(derive_seed(self.master_seed, &[stream::DP_NOISE, round as u64]));
        let t = Instant::now();
        let next = strategy.aggregate(global, &mut updates, &mut noise_rng)?;
        let agg_time_s = seconds_since(t);
        if let Some(i) = next.first_non_finite() {
            return Err(FedError::Numeric {
                round,
                origin: "server".into(),
                detail: format!("aggregate has non-finite parameter {i}"),
            });
        }

        let (accuracy, loss) = evaluate_centralized(&next, &self.spec, self.test)?;
        if !loss.is_finite() {
            return Err(FedError::Numeric {
                round,
                origin: "server".into(),
                detail: format!("centralized loss is {loss}"),
            });
        }
        let metrics = RoundMetrics {
            round,
            centralized_accuracy: accuracy,
            centralized_loss: loss,
            agg_time_s,
            train_time_s,
            comm_time_s,
            clip_norm,
        };
        debug!("round {round}: acc {accuracy:.4} loss {loss:.4}");
        Ok((next, metrics))
    }
}

/// Where a run resumes from: the global model and server state after `round`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub round: usize,
    pub global: ParameterVector,
    pub strategy: StrategyState,
}

/// Result of [`run_experiment`]. A run that fails mid-way keeps the rounds it
/// completed and reports the failure in `failure`.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub rounds: Vec<RoundMetrics>,
    pub checkpoint: Checkpoint,
    /// `counts[client][class]` of the training partition.
    pub partition_counts: Vec<Vec<usize>>,
    pub failure: Option<FedError>,
}

/// Applies the train/eval subsets of `cfg` to `data`.
fn prepare<'a>(cfg: &ExperimentConfig, data: &'a DataSplit) -> (std::borrow::Cow<'a, Dataset>, std::borrow::Cow<'a, Dataset>) {
    use std::borrow::Cow;
    let cut = |ds: &'a Dataset, n: Option<usize>| match n {
        Some(n) if n < ds.len() => Cow::Owned(ds.truncated(n)),
        _ => Cow::Borrowed(ds),
    };
    (cut(&data.train, cfg.train_subset), cut(&data.test, cfg.eval_subset))
}

/// Runs `cfg.rounds` rounds on `data`.
///
/// Configuration and data problems are returned as `Err` before round 1.
pub fn run_experiment(cfg: &ExperimentConfig, data: &DataSplit) -> Result<ExperimentOutcome> {
    run_experiment_from(cfg, data, None)
}

/// Like [`run_experiment`], optionally continuing from a checkpoint.
pub fn run_experiment_from(
    cfg: &ExperimentConfig,
    data: &DataSplit,
    resume: Option<Checkpoint>,
) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    let (train, test) = prepare(cfg, data);
    for (key, ds) in [("train", &*train), ("test", &*test)] {
        if ds.input_dim != cfg.model.input_dim {
            return Err(FedError::config(
                "model.input_dim",
                format!("({}) does not match the {key} data width ({})", cfg.model.input_dim, ds.input_dim),
            ));
        }
        if ds.num_classes > cfg.model.output_classes {
            return Err(FedError::config(
                "model.output_classes",
                format!("({}) is fewer than the {key} data classes ({})", cfg.model.output_classes, ds.num_classes),
            ));
        }
    }
    let split = partition(&train, &cfg.partition)?;
    let partition_counts = class_counts(&split, &train);
    let federation = Federation {
        spec: cfg.model.clone(),
        local: cfg.local.clone(),
        train: &train,
        test: &test,
        clients: split
            .assignments
            .into_iter()
            .enumerate()
            .map(|(id, indices)| ClientShard { id, indices })
            .collect(),
        adversary: cfg.adversary.clone(),
        master_seed: cfg.master_seed,
    };
    let mut strategy = Strategy::new(cfg.strategy_kind, cfg.strategy.clone())?;
    let (mut global, first_round) = match resume {
        Some(cp) => {
            if cp.strategy.kind != cfg.strategy_kind || cp.global.len() != cfg.model.num_params() {
                return Err(FedError::config("resume", "checkpoint does not match the configuration"));
            }
            strategy.state = cp.strategy;
            (cp.global, cp.round + 1)
        }
        None => (init_model(&cfg.model)?, 1),
    };

    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut failure = None;
    let mut last_round = first_round - 1;
    for round in first_round..=cfg.rounds {
        match federation.run_round(&global, &mut strategy, round) {
            Ok((next, metrics)) => {
                info!(
                    "{} round {round}/{}: acc {:.4} loss {:.4}",
                    cfg.run_id(),
                    cfg.rounds,
                    metrics.centralized_accuracy,
                    metrics.centralized_loss
                );
                global = next;
                rounds.push(metrics);
                last_round = round;
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    Ok(ExperimentOutcome {
        rounds,
        checkpoint: Checkpoint {
            round: last_round,
            global,
            strategy: strategy.state,
        },
        partition_counts,
        failure,
    })
}
