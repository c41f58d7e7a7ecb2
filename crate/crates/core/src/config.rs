//! INI experiment files.
//!
//! ```ini
//! [experiment]
//! dataset = mnist
//! rounds = 25
//! num_clients = 10
//! master_seed = 42
//! train_subset = 10000
//!
//! [partition]
//! mode = iid, dirichlet
//! alpha = 0.1, 0.5
//!
//! [strategy]
//! kind = fedavg, fedmedian
//! ```
//!
//! `experiment.dataset`, `partition.mode`, `partition.alpha` and
//! `strategy.kind` accept comma-separated lists; the file expands to their
//! cross product, with IID runs ignoring `alpha`. Comments go on their own
//! line. Unset hyperparameters take per-strategy defaults and unset seeds are
//! derived from `master_seed`.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use ini::{Ini, Properties};

use crate::adversary::AdversarySpec;
use crate::data::{DatasetKind, PartitionMode, PartitionSpec};
use crate::error::{FedError, Result};
use crate::model::{LocalOptimizerConfig, OptimizerKind};
use crate::orchestrator::{ExperimentConfig, SyntheticSpec};
use crate::seed::{derive_seed, stream};
use crate::strategy::{StrategyConfig, StrategyKind};

const SCHEMA: &[(&str, &[&str])] = &[
    (
        "experiment",
        &["name", "dataset", "rounds", "num_clients", "master_seed", "train_subset", "eval_subset"],
    ),
    ("partition", &["mode", "alpha", "seed"]),
    ("model", &["hidden", "input_dim", "output_classes", "init_seed"]),
    (
        "local",
        &["optimizer", "learning_rate", "adam_beta1", "adam_beta2", "adam_epsilon", "batch_size", "local_epochs"],
    ),
    (
        "strategy",
        &[
            "kind",
            "server_lr",
            "momentum",
            "beta1",
            "beta2",
            "tau",
            "prox_mu",
            "dp_noise_multiplier",
            "dp_target_quantile",
            "dp_clip_lr",
            "dp_initial_clip",
        ],
    ),
    ("synthetic", &["classes", "samples_per_class", "test_samples_per_class", "input_dim", "seed"]),
    ("adversary", &["kind", "factor", "clients"]),
];

struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl Section<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.props?.get(key).map(str::trim).filter(|v| !v.is_empty())
    }

    fn bad<E: Display>(&self, key: &str, value: &str, e: E) -> FedError {
        FedError::config(format!("{}.{key}", self.name), format!("cannot parse `{value}`: {e}"))
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: Display,
    {
        self.raw(key)
            .map(|v| v.parse().map_err(|e| self.bad(key, v, e)))
            .transpose()
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: Display,
    {
        let Some(raw) = self.raw(key) else { return Ok(None) };
        if raw == "none" {
            return Ok(Some(Vec::new()));
        }
        raw.split(',')
            .map(|item| {
                let item = item.trim();
                item.parse().map_err(|e| self.bad(key, item, e))
            })
            .collect::<Result<Vec<T>>>()
            .map(Some)
    }

    fn set<T: FromStr>(&self, key: &str, slot: &mut T) -> Result<()>
    where
        T::Err: Display,
    {
        if let Some(v) = self.get(key)? {
            *slot = v;
        }
        Ok(())
    }
}

fn check_schema(ini: &Ini) -> Result<()> {
    for (section, props) in ini.iter() {
        let Some(name) = section else {
            if let Some((key, _)) = props.iter().next() {
                return Err(FedError::config(key, "appears outside any section"));
            }
            continue;
        };
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| *s == name) else {
            return Err(FedError::config(format!("[{name}]"), "is not a known section"));
        };
        for (key, _) in props.iter() {
            if !keys.contains(&key) {
                return Err(FedError::config(format!("{name}.{key}"), "is not a known key"));
            }
        }
    }
    Ok(())
}

fn non_empty<T>(key: &str, v: Vec<T>) -> Result<Vec<T>> {
    if v.is_empty() {
        Err(FedError::config(key, "needs at least one value"))
    } else {
        Ok(v)
    }
}

/// Parses INI text into validated experiment configurations, one per grid cell.
pub fn parse_config_str(text: &str) -> Result<Vec<ExperimentConfig>> {
    let ini = Ini::load_from_str_noescape(text).map_err(|e| FedError::config("<file>", e.to_string()))?;
    check_schema(&ini)?;
    let section = |name: &'static str| Section {
        name,
        props: ini.section(Some(name)),
    };
    let (exp, part, model, local, strat, synth, adv) = (
        section("experiment"),
        section("partition"),
        section("model"),
        section("local"),
        section("strategy"),
        section("synthetic"),
        section("adversary"),
    );

    let datasets: Vec<DatasetKind> = exp
        .list("dataset")?
        .ok_or_else(|| FedError::config("experiment.dataset", "is required"))?;
    let datasets = non_empty("experiment.dataset", datasets)?;
    let rounds: usize = exp.get("rounds")?.unwrap_or(25);
    let num_clients: usize = exp.get("num_clients")?.unwrap_or(10);
    let master_seed: u64 = exp.get("master_seed")?.unwrap_or(0);

    let modes = part.list("mode")?.unwrap_or_else(|| vec![PartitionMode::Iid]);
    let modes = non_empty("partition.mode", modes)?;
    let alphas: Vec<f64> = non_empty("partition.alpha", part.list("alpha")?.unwrap_or_else(|| vec![0.5]))?;
    if let Some(bad) = alphas.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
        return Err(FedError::config("partition.alpha", format!("must be a finite value > 0, got {bad}")));
    }
    let kinds: Vec<StrategyKind> = strat.list("kind")?.unwrap_or_else(|| vec![StrategyKind::FedAvg]);
    let kinds = non_empty("strategy.kind", kinds)?;

    let mut partitions = Vec::new();
    for &mode in &modes {
        match mode {
            // alpha has no effect on IID splits; keep one run and record the first value
            PartitionMode::Iid => partitions.push((mode, alphas[0])),
            PartitionMode::Dirichlet => partitions.extend(alphas.iter().map(|&a| (mode, a))),
        }
    }

    let mut synthetic = SyntheticSpec::default();
    synth.set("classes", &mut synthetic.classes)?;
    synth.set("samples_per_class", &mut synthetic.samples_per_class)?;
    synth.set("test_samples_per_class", &mut synthetic.test_samples_per_class)?;
    synth.set("input_dim", &mut synthetic.input_dim)?;
    synth.set("seed", &mut synthetic.seed)?;

    let mut local_cfg = match local.get::<OptimizerKind>("optimizer")? {
        Some(OptimizerKind::Sgd) => LocalOptimizerConfig::sgd(),
        _ => LocalOptimizerConfig::adam(),
    };
    local.set("learning_rate", &mut local_cfg.learning_rate)?;
    local.set("adam_beta1", &mut local_cfg.adam_beta1)?;
    local.set("adam_beta2", &mut local_cfg.adam_beta2)?;
    local.set("adam_epsilon", &mut local_cfg.adam_epsilon)?;
    local.set("batch_size", &mut local_cfg.batch_size)?;
    local.set("local_epochs", &mut local_cfg.local_epochs)?;

    let mut adversary = AdversarySpec::default();
    adv.set("kind", &mut adversary.kind)?;
    adv.set("factor", &mut adversary.scale_factor)?;
    if let Some(clients) = adv.list::<usize>("clients")? {
        adversary.affected_clients = clients.into_iter().collect::<BTreeSet<_>>();
    }

    let mut configs = Vec::new();
    for &dataset in &datasets {
        for &(mode, alpha) in &partitions {
            for &kind in &kinds {
                let mut cfg = ExperimentConfig::new(dataset, kind, num_clients, rounds, master_seed);
                exp.set("name", &mut cfg.name)?;
                cfg.train_subset = exp.get("train_subset")?;
                cfg.eval_subset = exp.get("eval_subset")?;
                cfg.synthetic = synthetic.clone();
                if dataset == DatasetKind::Synthetic {
                    cfg.model.input_dim = synthetic.input_dim;
                    cfg.model.output_classes = synthetic.classes;
                }

                cfg.partition = PartitionSpec {
                    mode,
                    num_clients,
                    alpha,
                    seed: part
                        .get("seed")?
                        .unwrap_or_else(|| derive_seed(master_seed, &[stream::PARTITION])),
                };

                if let Some(hidden) = model.list::<usize>("hidden")? {
                    cfg.model.hidden_dims = hidden;
                }
                model.set("input_dim", &mut cfg.model.input_dim)?;
                model.set("output_classes", &mut cfg.model.output_classes)?;
                model.set("init_seed", &mut cfg.model.init_seed)?;

                cfg.local = local_cfg.clone();
                cfg.strategy = StrategyConfig::defaults(kind, dataset);
                let s = &mut cfg.strategy;
                strat.set("server_lr", &mut s.server_lr)?;
                strat.set("momentum", &mut s.momentum)?;
                strat.set("beta1", &mut s.beta1)?;
                strat.set("beta2", &mut s.beta2)?;
                strat.set("tau", &mut s.tau)?;
                strat.set("prox_mu", &mut s.prox_mu)?;
                strat.set("dp_noise_multiplier", &mut s.dp_noise_multiplier)?;
                strat.set("dp_target_quantile", &mut s.dp_target_quantile)?;
                strat.set("dp_clip_lr", &mut s.dp_clip_lr)?;
                strat.set("dp_initial_clip", &mut s.dp_initial_clip)?;

                cfg.adversary = adversary.clone();
                cfg.validate()?;
                configs.push(cfg);
            }
        }
    }
    Ok(configs)
}

/// Reads and expands an experiment file.
pub fn parse_config(path: &Path) -> Result<Vec<ExperimentConfig>> {
    let text = std::fs::read_to_string(path).map_err(|e| FedError::io(path, e))?;
    parse_config_str(&text)
}

fn join<T: Display>(items: impl IntoIterator<Item = T>) -> String {
    let parts: Vec<String> = items.into_iter().map(|x| x.to_string()).collect();
    if parts.is_empty() {
        "none".into()
    } else {
        parts.join(", ")
    }
}

/// Writes a single configuration with every value explicit, so that
/// [`parse_config_str`] reproduces it exactly.
pub fn to_ini(cfg: &ExperimentConfig) -> String {
    let mut ini = Ini::new();
    let mut exp = ini.with_section(Some("experiment"));
    exp.set("name", cfg.name.as_str())
        .set("dataset", cfg.dataset.as_str())
        .set("rounds", cfg.rounds.to_string())
        .set("num_clients", cfg.num_clients.to_string())
        .set("master_seed", cfg.master_seed.to_string());
    if let Some(n) = cfg.train_subset {
        exp.set("train_subset", n.to_string());
    }
    if let Some(n) = cfg.eval_subset {
        exp.set("eval_subset", n.to_string());
    }
    ini.with_section(Some("partition"))
        .set("mode", cfg.partition.mode.as_str())
        .set("alpha", cfg.partition.alpha.to_string())
        .set("seed", cfg.partition.seed.to_string());
    ini.with_section(Some("model"))
        .set("hidden", join(&cfg.model.hidden_dims))
        .set("input_dim", cfg.model.input_dim.to_string())
        .set("output_classes", cfg.model.output_classes.to_string())
        .set("init_seed", cfg.model.init_seed.to_string());
    let l = &cfg.local;
    ini.with_section(Some("local"))
        .set("optimizer", l.kind.as_str())
        .set("learning_rate", l.learning_rate.to_string())
        .set("adam_beta1", l.adam_beta1.to_string())
        .set("adam_beta2", l.adam_beta2.to_string())
        .set("adam_epsilon", l.adam_epsilon.to_string())
        .set("batch_size", l.batch_size.to_string())
        .set("local_epochs", l.local_epochs.to_string());
    let s = &cfg.strategy;
    ini.with_section(Some("strategy"))
        .set("kind", cfg.strategy_kind.as_str())
        .set("server_lr", s.server_lr.to_string())
        .set("momentum", s.momentum.to_string())
        .set("beta1", s.beta1.to_string())
        .set("beta2", s.beta2.to_string())
        .set("tau", s.tau.to_string())
        .set("prox_mu", s.prox_mu.to_string())
        .set("dp_noise_multiplier", s.dp_noise_multiplier.to_string())
        .set("dp_target_quantile", s.dp_target_quantile.to_string())
        .set("dp_clip_lr", s.dp_clip_lr.to_string())
        .set("dp_initial_clip", s.dp_initial_clip.to_string());
    let y = &cfg.synthetic;
    ini.with_section(Some("synthetic"))
        .set("classes", y.classes.to_string())
        .set("samples_per_class", y.samples_per_class.to_string())
        .set("test_samples_per_class", y.test_samples_per_class.to_string())
        .set("input_dim", y.input_dim.to_string())
        .set("seed", y.seed.to_string());
    let a = &cfg.adversary;
    ini.with_section(Some("adversary"))
        .set("kind", a.kind.as_str())
        .set("factor", a.scale_factor.to_string())
        .set("clients", join(&a.affected_clients));

    let mut buf = Vec::new();
    ini.write_to_policy(&mut buf, ini::EscapePolicy::Nothing)
        .expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ini output is utf-8")
}
