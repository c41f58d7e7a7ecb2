//! Result files.
//!
//! A run directory holds `rounds.csv`, `summary.csv`, `run.json` (the full
//! [`ResultsBundle`]), `config.ini` (a snapshot that parses back to the same
//! configuration) and `checkpoint.json` (final model and server state).
//!
//! `rounds.csv` columns, in order:
//! `run_id, [replicate], strategy, dataset, partition_mode, alpha, round, acc,
//! loss, agg_time_s, train_time_s, comm_time_s`. The replicate column is
//! present only for replicated runs; `alpha` is empty for IID runs.
//!
//! `summary.csv` has one row per run (and one `mean` row per replicated
//! run id): `run_id, [replicate], strategy, dataset, partition_mode, alpha,
//! rounds, acc, loss, agg_time_s, train_time_s, comm_time_s`, where acc/loss
//! are final-round values and the timings are per-round means.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::to_ini;
use crate::data::PartitionMode;
use crate::error::{FedError, Result};
use crate::orchestrator::{Checkpoint, ExperimentConfig, RoundMetrics};
use crate::seed::GENERATOR_NAME;

/// Seconds since the Unix epoch.
pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub fedbench_version: String,
    pub generator: String,
    pub master_seed: u64,
    pub partition_seed: u64,
    pub init_seed: u64,
    pub train_subset: Option<usize>,
    pub eval_subset: Option<usize>,
    pub started_unix_s: f64,
    pub finished_unix_s: f64,
    /// `partition_counts[client][class]`
    pub partition_counts: Vec<Vec<usize>>,
}

/// Everything recorded about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsBundle {
    pub run_id: String,
    pub replicate: Option<usize>,
    pub config: ExperimentConfig,
    pub rounds: Vec<RoundMetrics>,
    pub summary: SummaryRow,
    pub metadata: Metadata,
    /// Set when the run stopped early; `rounds` then holds the completed ones.
    pub failure: Option<String>,
}

impl ResultsBundle {
    pub fn new(
        config: ExperimentConfig,
        replicate: Option<usize>,
        rounds: Vec<RoundMetrics>,
        partition_counts: Vec<Vec<usize>>,
        failure: Option<String>,
        started_unix_s: f64,
    ) -> Self {
        let metadata = Metadata {
            fedbench_version: env!("CARGO_PKG_VERSION").into(),
            generator: GENERATOR_NAME.into(),
            master_seed: config.master_seed,
            partition_seed: config.partition.seed,
            init_seed: config.model.init_seed,
            train_subset: config.train_subset,
            eval_subset: config.eval_subset,
            started_unix_s,
            finished_unix_s: unix_now(),
            partition_counts,
        };
        let mut bundle = ResultsBundle {
            run_id: config.run_id(),
            replicate,
            config,
            rounds,
            summary: SummaryRow::default(),
            metadata,
            failure,
        };
        bundle.summary = summarize(&bundle.round_rows()).into_iter().next().unwrap_or_else(|| SummaryRow {
            run_id: bundle.run_id.clone(),
            replicate: replicate.map(|r| r.to_string()),
            ..SummaryRow::default()
        });
        bundle
    }

    pub fn round_rows(&self) -> Vec<RoundRow> {
        let alpha = match self.config.partition.mode {
            PartitionMode::Iid => None,
            PartitionMode::Dirichlet => Some(self.config.partition.alpha),
        };
        self.rounds
            .iter()
            .map(|m| RoundRow {
                run_id: self.run_id.clone(),
                replicate: self.replicate,
                strategy: self.config.strategy_kind.as_str().into(),
                dataset: self.config.dataset.as_str().into(),
                partition_mode: self.config.partition.mode.as_str().into(),
                alpha,
                round: m.round,
                acc: m.centralized_accuracy,
                loss: m.centralized_loss,
                agg_time_s: m.agg_time_s,
                train_time_s: m.train_time_s,
                comm_time_s: m.comm_time_s,
            })
            .collect()
    }

    /// Directory name of this run inside an output directory.
    pub fn dir_name(&self) -> String {
        match self.replicate {
            Some(r) => format!("{}-r{r}", self.run_id),
            None => self.run_id.clone(),
        }
    }
}

/// One line of `rounds.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRow {
    pub run_id: String,
    #[serde(default)]
    pub replicate: Option<usize>,
    pub strategy: String,
    pub dataset: String,
    pub partition_mode: String,
    pub alpha: Option<f64>,
    pub round: usize,
    pub acc: f64,
    pub loss: f64,
    pub agg_time_s: f64,
    pub train_time_s: f64,
    pub comm_time_s: f64,
}

/// One line of `summary.csv`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub run_id: String,
    /// Replicate index, `mean` for the across-replicate row, or absent.
    #[serde(default)]
    pub replicate: Option<String>,
    pub strategy: String,
    pub dataset: String,
    pub partition_mode: String,
    pub alpha: Option<f64>,
    pub rounds: usize,
    pub acc: f64,
    pub loss: f64,
    pub agg_time_s: f64,
    pub train_time_s: f64,
    pub comm_time_s: f64,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    values.sum::<f64>() / n as f64
}

/// Summary rows for `rows`, grouped by (run_id, replicate) in order of first
/// appearance. Run ids seen with more than one replicate get a trailing
/// `mean` row.
pub fn summarize(rows: &[RoundRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<((String, Option<usize>), Vec<&RoundRow>)> = Vec::new();
    for row in rows {
        let key = (row.run_id.clone(), row.replicate);
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, g)) => g.push(row),
            None => groups.push((key, vec![row])),
        }
    }
    let per_run: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((run_id, replicate), mut g)| {
            g.sort_by_key(|r| r.round);
            let last = g[g.len() - 1];
            SummaryRow {
                run_id,
                replicate: replicate.map(|r| r.to_string()),
                strategy: last.strategy.clone(),
                dataset: last.dataset.clone(),
                partition_mode: last.partition_mode.clone(),
                alpha: last.alpha,
                rounds: g.len(),
                acc: last.acc,
                loss: last.loss,
                agg_time_s: mean(g.iter().map(|r| r.agg_time_s)),
                train_time_s: mean(g.iter().map(|r| r.train_time_s)),
                comm_time_s: mean(g.iter().map(|r| r.comm_time_s)),
            }
        })
        .collect();

    let mut out = Vec::with_capacity(per_run.len());
    let mut seen: Vec<&str> = Vec::new();
    for row in &per_run {
        if seen.contains(&row.run_id.as_str()) {
            continue;
        }
        seen.push(&row.run_id);
        let reps: Vec<&SummaryRow> = per_run.iter().filter(|r| r.run_id == row.run_id).collect();
        out.extend(reps.iter().map(|r| (*r).clone()));
        if reps.len() > 1 {
            out.push(SummaryRow {
                replicate: Some("mean".into()),
                rounds: reps[0].rounds,
                acc: mean(reps.iter().map(|r| r.acc)),
                loss: mean(reps.iter().map(|r| r.loss)),
                agg_time_s: mean(reps.iter().map(|r| r.agg_time_s)),
                train_time_s: mean(reps.iter().map(|r| r.train_time_s)),
                comm_time_s: mean(reps.iter().map(|r| r.comm_time_s)),
                ..row.clone()
            });
        }
    }
    out
}

fn csv_error(path: &Path, e: csv::Error) -> FedError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => FedError::io(path, io),
        other => FedError::Ingestion {
            path: path.into(),
            detail: format!("{other:?}"),
        },
    }
}

fn fmt_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

const ROUND_COLUMNS: [&str; 11] = [
    "run_id",
    "strategy",
    "dataset",
    "partition_mode",
    "alpha",
    "round",
    "acc",
    "loss",
    "agg_time_s",
    "train_time_s",
    "comm_time_s",
];

const SUMMARY_COLUMNS: [&str; 11] = [
    "run_id",
    "strategy",
    "dataset",
    "partition_mode",
    "alpha",
    "rounds",
    "acc",
    "loss",
    "agg_time_s",
    "train_time_s",
    "comm_time_s",
];

fn header(columns: &[&str], with_replicate: bool) -> Vec<String> {
    let mut h: Vec<String> = columns.iter().map(|c| c.to_string()).collect();
    if with_replicate {
        h.insert(1, "replicate".into());
    }
    h
}

fn write_csv(path: &Path, header: Vec<String>, records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(&header).map_err(|e| csv_error(path, e))?;
    for record in records {
        w.write_record(&record).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| FedError::io(path, e))
}

/// Floats are written in shortest round-trip form so re-reading is lossless.
pub fn write_rounds_csv(path: &Path, rows: &[RoundRow]) -> Result<()> {
    let with_rep = rows.iter().any(|r| r.replicate.is_some());
    write_csv(
        path,
        header(&ROUND_COLUMNS, with_rep),
        rows.iter().map(|r| {
            let mut rec = vec![
                r.run_id.clone(),
                r.strategy.clone(),
                r.dataset.clone(),
                r.partition_mode.clone(),
                fmt_opt(&r.alpha),
                r.round.to_string(),
                r.acc.to_string(),
                r.loss.to_string(),
                r.agg_time_s.to_string(),
                r.train_time_s.to_string(),
                r.comm_time_s.to_string(),
            ];
            if with_rep {
                rec.insert(1, fmt_opt(&r.replicate));
            }
            rec
        }),
    )
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let with_rep = rows.iter().any(|r| r.replicate.is_some());
    write_csv(
        path,
        header(&SUMMARY_COLUMNS, with_rep),
        rows.iter().map(|r| {
            let mut rec = vec![
                r.run_id.clone(),
                r.strategy.clone(),
                r.dataset.clone(),
                r.partition_mode.clone(),
                fmt_opt(&r.alpha),
                r.rounds.to_string(),
                r.acc.to_string(),
                r.loss.to_string(),
                r.agg_time_s.to_string(),
                r.train_time_s.to_string(),
                r.comm_time_s.to_string(),
            ];
            if with_rep {
                rec.insert(1, r.replicate.clone().unwrap_or_default());
            }
            rec
        }),
    )
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn read_rounds_csv(path: &Path) -> Result<Vec<RoundRow>> {
    read_csv(path)
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_csv(path)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("result types serialize");
    fs::write(path, text).map_err(|e| FedError::io(path, e))
}

/// Writes one run's files into `dir`, creating it if needed.
pub fn write_results(bundle: &ResultsBundle, checkpoint: Option<&Checkpoint>, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| FedError::io(dir, e))?;
    write_rounds_csv(&dir.join("rounds.csv"), &bundle.round_rows())?;
    write_summary_csv(&dir.join("summary.csv"), std::slice::from_ref(&bundle.summary))?;
    write_json(&dir.join("run.json"), bundle)?;
    let ini = dir.join("config.ini");
    fs::write(&ini, to_ini(&bundle.config)).map_err(|e| FedError::io(&ini, e))?;
    if let Some(cp) = checkpoint {
        write_json(&dir.join("checkpoint.json"), cp)?;
    }
    Ok(())
}

pub fn read_bundle(path: &Path) -> Result<ResultsBundle> {
    let text = fs::read_to_string(path).map_err(|e| FedError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FedError::Ingestion {
        path: path.into(),
        detail: e.to_string(),
    })
}

/// Per-run `rounds.csv` files directly under `dir`, in name order.
fn run_round_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| FedError::io(dir, e))? {
        let path = entry.map_err(|e| FedError::io(dir, e))?.path().join("rounds.csv");
        if path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Rebuilds `dir/rounds.csv` and `dir/summary.csv` from the per-run
/// directories inside `dir`; with no run directories, summarizes
/// `dir/rounds.csv` itself. Returns the summary rows.
pub fn summarize_dir(dir: &Path) -> Result<Vec<SummaryRow>> {
    let files = run_round_files(dir)?;
    let rows = if files.is_empty() {
        read_rounds_csv(&dir.join("rounds.csv"))?
    } else {
        let mut rows = Vec::new();
        for f in &files {
            rows.extend(read_rounds_csv(f)?);
        }
        write_rounds_csv(&dir.join("rounds.csv"), &rows)?;
        rows
    };
    let summary = summarize(&rows);
    write_summary_csv(&dir.join("summary.csv"), &summary)?;
    Ok(summary)
}
