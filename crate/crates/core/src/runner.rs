//! Executes a list of experiments with replicas and a bounded number of
//! concurrent runs, writing each run's files as soon as it finishes.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use log::{error, info};

use crate::data::{DataSplit, DatasetKind};
use crate::error::{FedError, Result};
use crate::orchestrator::{load_data, run_experiment, ExperimentConfig, SyntheticSpec};
use crate::results::{summarize, unix_now, write_results, write_rounds_csv, write_summary_csv, ResultsBundle};
use crate::seed::{derive_seed, stream};

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub replicas: usize,
    pub jobs: usize,
    /// Replaces every configuration's master seed.
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub write_checkpoints: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions {
            out_dir: out_dir.into(),
            replicas: 1,
            jobs: 1,
            seed: None,
            data_dir: None,
            write_checkpoints: true,
        }
    }
}

/// The runs to execute: each configuration once per replicate. Replicate 0
/// keeps the configured seeds; replicate r > 0 re-derives all seeds from
/// `hash(master_seed, r)`.
pub fn expand_replicas(configs: &[ExperimentConfig], replicas: usize, seed: Option<u64>) -> Result<Vec<(ExperimentConfig, Option<usize>)>> {
    if replicas < 1 {
        return Err(FedError::config("--replicas", "must be >= 1"));
    }
    let mut runs = Vec::with_capacity(configs.len() * replicas);
    for cfg in configs {
        let mut base = cfg.clone();
        if let Some(s) = seed {
            base.reseed(s);
        }
        if replicas == 1 {
            runs.push((base, None));
            continue;
        }
        for r in 0..replicas {
            let mut c = base.clone();
            if r > 0 {
                c.reseed(derive_seed(base.master_seed, &[stream::REPLICA, r as u64]));
            }
            runs.push((c, Some(r)));
        }
    }
    Ok(runs)
}

type DataKey = (DatasetKind, Option<SyntheticSpec>);

fn data_key(cfg: &ExperimentConfig) -> DataKey {
    let synth = (cfg.dataset == DatasetKind::Synthetic).then(|| cfg.synthetic.clone());
    (cfg.dataset, synth)
}

/// Runs every configuration and writes results below `opts.out_dir`.
///
/// Returns `Err` only for problems found before any run starts (bad options,
/// missing data). Runs that fail mid-way are reported through
/// [`ResultsBundle::failure`] with their completed rounds written out.
pub fn run_all(configs: &[ExperimentConfig], opts: &RunOptions) -> Result<Vec<ResultsBundle>> {
    if opts.jobs < 1 {
        return Err(FedError::config("--jobs", "must be >= 1"));
    }
    let runs = expand_replicas(configs, opts.replicas, opts.seed)?;
    for (cfg, _) in &runs {
        cfg.validate()?;
    }

    let mut cache: Vec<(DataKey, DataSplit)> = Vec::new();
    for (cfg, _) in &runs {
        let key = data_key(cfg);
        if !cache.iter().any(|(k, _)| *k == key) {
            info!("loading {}", cfg.dataset);
            cache.push((key, load_data(cfg, opts.data_dir.as_deref())?));
        }
    }
    std::fs::create_dir_all(&opts.out_dir).map_err(|e| FedError::io(&opts.out_dir, e))?;

    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<ResultsBundle>>>> = Mutex::new((0..runs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..opts.jobs.min(runs.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((cfg, replicate)) = runs.get(i) else { break };
                let data = &cache.iter().find(|(k, _)| *k == data_key(cfg)).expect("data loaded above").1;
                let result = execute(cfg, *replicate, data, &opts.out_dir, opts.write_checkpoints);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(result);
            });
        }
    });
    let bundles = slots
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|slot| slot.expect("every run executed"))
        .collect::<Result<Vec<_>>>()?;

    let rows: Vec<_> = bundles.iter().flat_map(|b| b.round_rows()).collect();
    write_rounds_csv(&opts.out_dir.join("rounds.csv"), &rows)?;
    write_summary_csv(&opts.out_dir.join("summary.csv"), &summarize(&rows))?;
    Ok(bundles)
}

fn execute(cfg: &ExperimentConfig, replicate: Option<usize>, data: &DataSplit, out_dir: &Path, checkpoint: bool) -> Result<ResultsBundle> {
    let started = unix_now();
    let outcome = run_experiment(cfg, data)?;
    let failure = outcome.failure.as_ref().map(|e| e.to_string());
    if let Some(msg) = &failure {
        error!("{} stopped after {} rounds: {msg}", cfg.run_id(), outcome.rounds.len());
    }
    let bundle = ResultsBundle::new(cfg.clone(), replicate, outcome.rounds, outcome.partition_counts, failure, started);
    let dir = out_dir.join(bundle.dir_name());
    write_results(&bundle, checkpoint.then_some(&outcome.checkpoint), &dir)?;
    Ok(bundle)
}
