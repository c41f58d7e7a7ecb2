//! Acceptance criteria. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the harness capture) before asserting.
//!
//! The MNIST criteria need the IDX files under `data/mnist` or
//! `$FEDBENCH_DATA_DIR/mnist`. Runs shared between criteria are cached.

mod common;

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};
use std::time::{Duration, Instant};

use common::oracle::{loop_weighted_mean, scalar_loss, sort_median, ScalarAdaptive};
use common::{random_updates, random_vec, rng, MNIST_HINT};
use fedbench::adversary::AdversarySpec;
use fedbench::config::parse_config;
use fedbench::data::{
    generate_synthetic, mean_total_variation, partition, DataSplit, DatasetKind, PartitionMode, PartitionSpec,
};
use fedbench::model::{forward_loss_grad, Batch, ModelSpec, ParameterVector};
use fedbench::orchestrator::{run_experiment, ExperimentConfig};
use fedbench::runner::{expand_replicas, run_all, RunOptions};
use fedbench::seed::rng_from_seed;
use fedbench::strategy::{
    aggregate_dp, aggregate_fedadagrad, aggregate_fedadam, aggregate_fedavg, aggregate_fedmedian, next_clip_norm,
    ClientUpdate, Strategy as Server, StrategyConfig, StrategyKind, StrategyState,
};
use rand::Rng;

fn verdict(id: u8, title: &str, pass: bool, detail: String) {
    let line = format!("{} C{id} {title}: {detail}", if pass { "PASS" } else { "FAIL" });
    let _ = writeln!(std::io::stderr(), "{line}");
    assert!(pass, "{line}");
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn mnist_or_fail(id: u8, title: &str) -> &'static DataSplit {
    static DATA: OnceLock<Option<DataSplit>> = OnceLock::new();
    match DATA.get_or_init(common::mnist) {
        Some(d) => d,
        None => {
            verdict(id, title, false, MNIST_HINT.to_string());
            unreachable!()
        }
    }
}

fn baseline(kind: StrategyKind, mode: PartitionMode) -> ExperimentConfig {
    parse_config(&configs_dir().join("baseline.ini"))
        .unwrap()
        .into_iter()
        .find(|c| c.strategy_kind == kind && c.partition.mode == mode)
        .unwrap()
}

/// Final accuracy and wall time of `cfg`, computed at most once per key.
fn final_accuracy(key: String, cfg: &ExperimentConfig, data: &DataSplit) -> (f64, Duration) {
    static CACHE: OnceLock<Mutex<HashMap<String, Arc<OnceLock<(f64, Duration)>>>>> = OnceLock::new();
    let cell = CACHE.get_or_init(Default::default).lock().unwrap().entry(key.clone()).or_default().clone();
    *cell.get_or_init(|| {
        let start = Instant::now();
        let out = run_experiment(cfg, data).unwrap();
        assert!(out.failure.is_none(), "{key}: {:?}", out.failure);
        assert_eq!(out.rounds.len(), cfg.rounds);
        (out.rounds.last().unwrap().centralized_accuracy, start.elapsed())
    })
}

/// Mean final accuracy over three replicates: replicate 0 keeps the
/// configured seeds, the others re-derive them.
fn replicate_mean(cfg: &ExperimentConfig, data: &DataSplit) -> (f64, Vec<f64>) {
    let accs: Vec<f64> = expand_replicas(std::slice::from_ref(cfg), 3, None)
        .unwrap()
        .into_iter()
        .map(|(c, r)| final_accuracy(format!("{}-r{}", c.run_id(), r.unwrap()), &c, data).0)
        .collect();
    (accs.iter().sum::<f64>() / 3.0, accs)
}

fn fmt_accs(accs: &[f64]) -> String {
    accs.iter().map(|a| format!("{a:.4}")).collect::<Vec<_>>().join("/")
}

fn sci(values: &[f64]) -> Vec<String> {
    values.iter().map(|v| format!("{v:.1e}")).collect()
}

fn max_abs_diff(a: &ParameterVector, b: &ParameterVector) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn c01_fedavg_iid_baseline() {
    let title = "FedAvg IID MNIST, 10 clients, 25 rounds";
    let data = mnist_or_fail(1, title);
    let cfg = baseline(StrategyKind::FedAvg, PartitionMode::Iid);
    let (acc, took) = final_accuracy(format!("{}-r0", cfg.run_id()), &cfg, data);
    let pass = acc >= 0.90 && took <= Duration::from_secs(600);
    verdict(1, title, pass, format!("accuracy {acc:.4} (>= 0.90), {:.1}s (<= 600s)", took.as_secs_f64()));
}

#[test]
fn c02_label_skew_costs_fedavg_accuracy() {
    let title = "FedAvg accuracy under label skew";
    let data = mnist_or_fail(2, title);
    let iid = baseline(StrategyKind::FedAvg, PartitionMode::Iid);
    let skew = baseline(StrategyKind::FedAvg, PartitionMode::Dirichlet);
    let mut severe = skew.clone();
    severe.partition.alpha = 0.1;
    let (m_iid, a_iid) = replicate_mean(&iid, data);
    let (m_half, a_half) = replicate_mean(&skew, data);
    let (m_tenth, a_tenth) = replicate_mean(&severe, data);
    let pass = m_half <= m_iid + 0.02 && m_tenth <= m_iid - 0.01;
    verdict(
        2,
        title,
        pass,
        format!(
            "mean of 3: iid {m_iid:.4} [{}], alpha=0.5 {m_half:.4} [{}] (<= iid + 0.02), alpha=0.1 {m_tenth:.4} [{}] (<= iid - 0.01)",
            fmt_accs(&a_iid),
            fmt_accs(&a_half),
            fmt_accs(&a_tenth)
        ),
    );
}

#[test]
fn c03_dp_at_default_noise_halves_accuracy() {
    let title = "DP (z = 1) against FedAvg, IID";
    let data = mnist_or_fail(3, title);
    let (m_avg, a_avg) = replicate_mean(&baseline(StrategyKind::FedAvg, PartitionMode::Iid), data);
    let (m_dp, a_dp) = replicate_mean(&baseline(StrategyKind::Dp, PartitionMode::Iid), data);
    let pass = m_dp <= 0.5 * m_avg;
    verdict(
        3,
        title,
        pass,
        format!("mean of 3: dp {m_dp:.4} [{}] <= 0.5 x fedavg {m_avg:.4} [{}]", fmt_accs(&a_dp), fmt_accs(&a_avg)),
    );
}

#[test]
fn c04_median_survives_a_scaling_client() {
    let title = "one client scaling its update by 100";
    let data = mnist_or_fail(4, title);
    let run = |kind: StrategyKind, attacked: bool| {
        let mut cfg = baseline(kind, PartitionMode::Iid);
        let mut key = format!("{}-r0", cfg.run_id());
        if attacked {
            cfg.adversary = AdversarySpec::scale(100.0, [3]);
            key.push_str("-scaled");
        }
        final_accuracy(key, &cfg, data).0
    };
    let (avg_clean, avg_bad) = (run(StrategyKind::FedAvg, false), run(StrategyKind::FedAvg, true));
    let (med_clean, med_bad) = (run(StrategyKind::FedMedian, false), run(StrategyKind::FedMedian, true));
    let pass = (med_clean - med_bad).abs() <= 0.05 && avg_clean - avg_bad >= 0.20;
    verdict(
        4,
        title,
        pass,
        format!(
            "fedmedian {med_clean:.4} -> {med_bad:.4} (within 0.05), fedavg {avg_clean:.4} -> {avg_bad:.4} (drop >= 0.20)"
        ),
    );
}

fn synthetic_round(kind: StrategyKind, tweak: impl Fn(&mut StrategyConfig)) -> (ParameterVector, Vec<Vec<usize>>) {
    let data = DataSplit {
        train: generate_synthetic(10, 100, 20, 31).unwrap(),
        test: generate_synthetic(10, 20, 20, 32).unwrap(),
    };
    let mut cfg = ExperimentConfig::new(DatasetKind::Synthetic, kind, 10, 1, 17);
    cfg.model = ModelSpec::new(20, vec![16], 10, 5);
    tweak(&mut cfg.strategy);
    let out = run_experiment(&cfg, &data).unwrap();
    (out.checkpoint.global, out.partition_counts)
}

#[test]
fn c05_strategies_reduce_to_fedavg() {
    let mut r = rng(50);
    let len = 200;
    let global = ParameterVector::new(random_vec(&mut r, len, 1.0));
    let mut updates = random_updates(&mut r, 10, len);
    let avg = aggregate_fedavg(&global, &updates).unwrap();
    let mut cfg = StrategyConfig::defaults(StrategyKind::FedAvgM, DatasetKind::Mnist);
    cfg.momentum = 0.0;
    cfg.server_lr = 1.0;
    let mut noise = rng_from_seed(1);
    let avgm = Server::new(StrategyKind::FedAvgM, cfg).unwrap().aggregate(&global, &mut updates, &mut noise).unwrap();
    let mut cfg = StrategyConfig::defaults(StrategyKind::FedProx, DatasetKind::Mnist);
    cfg.prox_mu = 0.0;
    let prox = Server::new(StrategyKind::FedProx, cfg).unwrap().aggregate(&global, &mut updates, &mut noise).unwrap();
    let mut uniform: Vec<ClientUpdate> = updates.iter().map(|u| ClientUpdate::new(u.client_id, u.new_params.clone(), 1)).collect();
    let uniform_avg = aggregate_fedavg(&global, &uniform).unwrap();
    let mut cfg = StrategyConfig::defaults(StrategyKind::Dp, DatasetKind::Mnist);
    cfg.dp_noise_multiplier = 0.0;
    cfg.dp_initial_clip = 1e9;
    let dp = Server::new(StrategyKind::Dp, cfg).unwrap().aggregate(&global, &mut uniform, &mut noise).unwrap();
    let server_errs = [max_abs_diff(&avgm, &avg), max_abs_diff(&prox, &avg), max_abs_diff(&dp, &uniform_avg)];

    // one full round including local training; the IID shards are equal,
    // so FedAvg's sample weights are uniform as DP's are
    let (fedavg, counts) = synthetic_round(StrategyKind::FedAvg, |_| {});
    let sizes: Vec<usize> = counts.iter().map(|c| c.iter().sum()).collect();
    assert!(sizes.iter().all(|&s| s == sizes[0]), "{sizes:?}");
    let round_errs = [
        max_abs_diff(&synthetic_round(StrategyKind::FedAvgM, |c| { c.momentum = 0.0; c.server_lr = 1.0 }).0, &fedavg),
        max_abs_diff(&synthetic_round(StrategyKind::FedProx, |c| c.prox_mu = 0.0).0, &fedavg),
        max_abs_diff(&synthetic_round(StrategyKind::Dp, |c| { c.dp_noise_multiplier = 0.0; c.dp_initial_clip = 1e9 }).0, &fedavg),
    ];
    let worst = server_errs.iter().chain(&round_errs).fold(0.0f64, |a, &b| a.max(b));
    verdict(
        5,
        "FedAvgM(beta=0, lr=1), FedProx(mu=0), DP(z=0, C=1e9) equal FedAvg",
        worst <= 1e-12,
        format!("max |diff| server-only {:?}, full round {:?} (<= 1e-12)", sci(&server_errs), sci(&round_errs)),
    );
}

#[test]
fn c06_aggregators_match_oracles() {
    let mut r = rng(60);
    let mut median_mismatches = 0;
    for _ in 0..1000 {
        let k = r.random_range(1..=20);
        let len = r.random_range(1..=30);
        let updates = random_updates(&mut r, k, len);
        let got = aggregate_fedmedian(&ParameterVector::zeros(len), &updates).unwrap();
        for i in 0..len {
            let mut column: Vec<f64> = updates.iter().map(|u| u.new_params[i]).collect();
            median_mismatches += usize::from(got[i] != sort_median(&mut column));
        }
    }

    let mut mean_err: f64 = 0.0;
    for _ in 0..200 {
        let len = r.random_range(1..=30);
        let k = r.random_range(1..=12);
        let updates = random_updates(&mut r, k, len);
        let got = aggregate_fedavg(&ParameterVector::zeros(len), &updates).unwrap();
        for (a, b) in got.iter().zip(loop_weighted_mean(&updates, len)) {
            mean_err = mean_err.max((a - b).abs());
        }
    }

    let mut adaptive_err: f64 = 0.0;
    for kind in [StrategyKind::FedAdam, StrategyKind::FedAdagrad] {
        for _ in 0..20 {
            let len = r.random_range(1..=20);
            let cfg = StrategyConfig::defaults(kind, DatasetKind::Mnist);
            let mut state = StrategyState::new(kind, &cfg);
            let mut global = ParameterVector::new(random_vec(&mut r, len, 1.0));
            let mut oracle: Vec<ScalarAdaptive> = global
                .iter()
                .map(|&w| ScalarAdaptive { m: 0.0, v: 0.0, w, adagrad: kind == StrategyKind::FedAdagrad })
                .collect();
            for _ in 0..5 {
                let updates: Vec<ClientUpdate> = (0..r.random_range(1..=8))
                    .map(|id| {
                        let w: Vec<f64> = global.iter().map(|g| g + r.random_range(-0.5..0.5)).collect();
                        ClientUpdate::new(id, ParameterVector::new(w), r.random_range(1..50))
                    })
                    .collect();
                global = match kind {
                    StrategyKind::FedAdam => aggregate_fedadam(&global, &updates, &mut state, &cfg).unwrap(),
                    _ => aggregate_fedadagrad(&global, &updates, &mut state, &cfg).unwrap(),
                };
                for (i, o) in oracle.iter_mut().enumerate() {
                    let clients: Vec<(f64, usize)> = updates.iter().map(|u| (u.new_params[i], u.num_samples)).collect();
                    o.step(&clients, &cfg);
                    adaptive_err = adaptive_err.max((o.w - global[i]).abs());
                }
            }
        }
    }
    let pass = median_mismatches == 0 && mean_err <= 1e-12 && adaptive_err <= 1e-12;
    verdict(
        6,
        "aggregators against brute-force oracles",
        pass,
        format!(
            "median mismatches {median_mismatches}/1000 instances, weighted mean {mean_err:.1e}, 5-round FedAdam/FedAdagrad {adaptive_err:.1e} (<= 1e-12)"
        ),
    );
}

#[test]
fn c07_gradient_matches_finite_differences() {
    let (d, h, c) = (6, 8, 4);
    let spec = ModelSpec::new(d, vec![h], c, 0);
    let mut r = rng(70);
    let step = 1e-5;
    let (mut checked, mut worst) = (0, 0.0f64);
    while checked < 100 {
        let batch = r.random_range(1..=8);
        let params = random_vec(&mut r, spec.num_params(), 1.0);
        let x = random_vec(&mut r, batch * d, 1.0);
        let y: Vec<usize> = (0..batch).map(|_| r.random_range(0..c)).collect();
        if scalar_loss(&params, &x, &y, d, h, c).1 < 1e-3 {
            continue;
        }
        let (_, grad) = forward_loss_grad(&ParameterVector::new(params.clone()), &spec, Batch::new(&x, &y)).unwrap();
        for i in 0..params.len() {
            let mut plus = params.clone();
            plus[i] += step;
            let mut minus = params.clone();
            minus[i] -= step;
            let numeric = (scalar_loss(&plus, &x, &y, d, h, c).0 - scalar_loss(&minus, &x, &y, d, h, c).0) / (2.0 * step);
            let scale = grad[i].abs().max(numeric.abs());
            let err = if scale < 1e-8 { (grad[i] - numeric).abs() } else { (grad[i] - numeric).abs() / scale };
            worst = worst.max(err);
        }
        checked += 1;
    }
    verdict(7, "analytic gradient", worst < 1e-4, format!("max relative error {worst:.2e} over 100 instances (< 1e-4)"));
}

#[test]
fn c08_partitions_cover_and_skew_with_alpha() {
    let title = "partitioner";
    let train = &mnist_or_fail(8, title).train;
    let mut r = rng(80);
    let mut bad_covers = 0;
    for _ in 0..100 {
        let clients = r.random_range(2..=50);
        let seed = r.random();
        let spec = if r.random_bool(0.5) {
            PartitionSpec::iid(clients, seed)
        } else {
            PartitionSpec::dirichlet(clients, 10f64.powf(r.random_range(-1.5..2.0)), seed)
        };
        let p = partition(train, &spec).unwrap();
        bad_covers += usize::from(p.check_cover(train.len()).is_err() || p.num_clients() != clients);
    }
    let mut non_monotone = 0;
    let mut means = [0.0; 3];
    for seed in 0..20 {
        let tv: Vec<f64> = [0.1, 0.5, 100.0]
            .iter()
            .map(|&a| mean_total_variation(&partition(train, &PartitionSpec::dirichlet(10, a, seed)).unwrap(), train))
            .collect();
        non_monotone += usize::from(!(tv[0] > tv[1] && tv[1] > tv[2]));
        for (m, t) in means.iter_mut().zip(&tv) {
            *m += t / 20.0;
        }
    }
    verdict(
        8,
        title,
        bad_covers == 0 && non_monotone == 0,
        format!(
            "{bad_covers}/100 draws not a disjoint cover; TV(0.1) > TV(0.5) > TV(100) failed for {non_monotone}/20 seeds (mean TV {:.3} > {:.3} > {:.3})",
            means[0], means[1], means[2]
        ),
    );
}

#[test]
fn c09_adaptive_clip_norm() {
    let mut r = rng(90);
    let mut closed_form_err: f64 = 0.0;
    for _ in 0..1000 {
        let mut cfg = StrategyConfig::defaults(StrategyKind::Dp, DatasetKind::Mnist);
        cfg.dp_clip_lr = r.random_range(0.01..1.0);
        cfg.dp_target_quantile = r.random_range(0.05..0.95);
        let c = r.random_range(0.01..10.0);
        let b = r.random_range(0..=20) as f64 / 20.0;
        let expected = c * (-cfg.dp_clip_lr * (b - cfg.dp_target_quantile)).exp();
        closed_form_err = closed_form_err.max((next_clip_norm(c, b, &cfg) - expected).abs());
    }

    // every delta below the clip norm: it must shrink every round
    let cfg = StrategyConfig::defaults(StrategyKind::Dp, DatasetKind::Mnist);
    let mut state = StrategyState::new(StrategyKind::Dp, &cfg);
    let mut noise = rng_from_seed(9);
    let mut global = ParameterVector::zeros(10);
    let mut clips = vec![state.clip_norm];
    for _ in 0..10 {
        let updates: Vec<ClientUpdate> = (0..5)
            .map(|id| {
                let w: Vec<f64> = global.iter().map(|g| g + r.random_range(-1e-6..1e-6)).collect();
                ClientUpdate::new(id, ParameterVector::new(w), 10)
            })
            .collect();
        let (next, report) = aggregate_dp(&global, &updates, &mut state, &cfg, &mut noise).unwrap();
        assert_eq!(report.below_fraction, 1.0);
        global = next;
        clips.push(state.clip_norm);
    }
    let decreasing = clips.windows(2).all(|w| w[1] < w[0]);
    verdict(
        9,
        "adaptive clip norm",
        closed_form_err <= 1e-12 && decreasing,
        format!(
            "closed-form error {closed_form_err:.1e} (<= 1e-12); clip norm over 10 all-below rounds {:.4} -> {:.4}, strictly decreasing: {decreasing}",
            clips[0],
            clips[10]
        ),
    );
}

/// rounds.csv with the timing columns dropped.
fn learning_columns(path: &std::path::Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    let keep: Vec<usize> = (0..header.len()).filter(|&i| !header[i].ends_with("_time_s")).collect();
    text.lines()
        .map(|l| {
            let cells: Vec<&str> = l.split(',').collect();
            keep.iter().map(|&i| cells[i]).collect::<Vec<_>>().join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn c10_reproducible_exports() {
    let title = "reproducibility and exported metrics, 20 clients";
    mnist_or_fail(10, title);
    let configs: Vec<ExperimentConfig> = parse_config(&configs_dir().join("baseline.ini"))
        .unwrap()
        .into_iter()
        .filter(|c| c.partition.mode == PartitionMode::Dirichlet)
        .map(|mut c| {
            c.rounds = 3;
            c.num_clients = 20;
            c.partition.num_clients = 20;
            c
        })
        .collect();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut bundles = Vec::new();
    for d in &dirs {
        let mut opts = RunOptions::new(d.path());
        opts.data_dir = Some(common::data_dir());
        opts.write_checkpoints = false;
        bundles.push(run_all(&configs, &opts).unwrap());
    }
    let identical = learning_columns(&dirs[0].path().join("rounds.csv")) == learning_columns(&dirs[1].path().join("rounds.csv"));

    let rows = fedbench::results::read_rounds_csv(&dirs[0].path().join("rounds.csv")).unwrap();
    let summary = fedbench::results::read_summary_csv(&dirs[0].path().join("summary.csv")).unwrap();
    let mut summary_err: f64 = 0.0;
    for s in &summary {
        let runs: Vec<_> = rows.iter().filter(|r| r.run_id == s.run_id).collect();
        let mean = |f: fn(&fedbench::results::RoundRow) -> f64| runs.iter().map(|r| f(r)).sum::<f64>() / runs.len() as f64;
        for (got, want) in [
            (s.agg_time_s, mean(|r| r.agg_time_s)),
            (s.train_time_s, mean(|r| r.train_time_s)),
            (s.comm_time_s, mean(|r| r.comm_time_s)),
        ] {
            summary_err = summary_err.max((got - want).abs());
        }
    }
    let failures = bundles.iter().flatten().filter(|b| b.failure.is_some()).count();
    let positive = rows.iter().all(|r| r.agg_time_s > 0.0 && r.train_time_s > 0.0 && r.comm_time_s > 0.0);
    let worst_agg = rows.iter().map(|r| r.agg_time_s).fold(0.0, f64::max);
    let pass = failures == 0 && identical && summary_err <= 1e-12 && positive && worst_agg < 1.0;
    verdict(
        10,
        title,
        pass,
        format!(
            "{} runs x 3 rounds, {failures} failed; learning columns identical: {identical}; summary mean error {summary_err:.1e} (<= 1e-12); timings positive: {positive}; max AggTime {worst_agg:.4}s (< 1s)",
            configs.len()
        ),
    );
}

#[test]
fn c11_fedadam_keeps_up_at_scale() {
    let title = "FedAdam vs FedAvg, 20 clients, 50 rounds";
    let data = mnist_or_fail(11, title);
    let configs = parse_config(&configs_dir().join("scaleup.ini")).unwrap();
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for mode in [PartitionMode::Iid, PartitionMode::Dirichlet] {
        let acc = |kind| {
            let cfg = configs.iter().find(|c| c.strategy_kind == kind && c.partition.mode == mode).unwrap();
            assert_eq!((cfg.num_clients, cfg.rounds), (20, 50));
            final_accuracy(format!("scaleup-{}", cfg.run_id()), cfg, data).0
        };
        let (adam, avg) = (acc(StrategyKind::FedAdam), acc(StrategyKind::FedAvg));
        pass &= adam >= avg;
        parts.push(format!("{}: fedadam {adam:.4} >= fedavg {avg:.4}", mode.as_str()));
    }
    let took = start.elapsed();
    pass &= took <= Duration::from_secs(1800);
    verdict(11, title, pass, format!("{}; {:.0}s (<= 1800s)", parts.join(", "), took.as_secs_f64()));
}
