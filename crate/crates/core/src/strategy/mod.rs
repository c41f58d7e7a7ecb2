//! Server-side aggregation strategies.
//!
//! Every strategy consumes the current global weights `w_t` and the round's
//! client updates and returns `w_{t+1}`. Strategies that keep server state
//! (momentum, moment estimates, clip norm) carry it in [`StrategyState`].
//! Where a pseudo-gradient is needed it is the sample-weighted mean delta
//! `Δ_t = Σ_k (n_k / n) (w_k - w_t)`.

mod adaptive;
mod averaging;
mod dp;
mod median;
mod update;

use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::data::DatasetKind;
use crate::error::{FedError, Result};
use crate::model::ParameterVector;
use crate::seed::SimRng;

pub use adaptive::{aggregate_fedadagrad, aggregate_fedadam};
pub use averaging::{aggregate_fedavg, aggregate_fedavgm, aggregate_fedprox, pseudo_gradient};
pub use dp::{aggregate_dp, dp_clip, next_clip_norm, DpRoundReport};
pub use median::aggregate_fedmedian;
pub use update::{ClientUpdate, TimingRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyKind {
    FedAvg,
    FedAvgM,
    FedAdam,
    FedAdagrad,
    FedMedian,
    FedProx,
    Dp,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::FedAvg,
        StrategyKind::FedAvgM,
        StrategyKind::FedAdam,
        StrategyKind::FedAdagrad,
        StrategyKind::FedMedian,
        StrategyKind::FedProx,
        StrategyKind::Dp,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StrategyKind::FedAvg => "fedavg",
            StrategyKind::FedAvgM => "fedavgm",
            StrategyKind::FedAdam => "fedadam",
            StrategyKind::FedAdagrad => "fedadagrad",
            StrategyKind::FedMedian => "fedmedian",
            StrategyKind::FedProx => "fedprox",
            StrategyKind::Dp => "dp",
        }
    }
}

impl std::fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| {
                format!(
                    "unknown strategy `{s}` (expected fedavg | fedavgm | fedadam | fedadagrad | fedmedian | fedprox | dp)"
                )
            })
    }
}

/// Server hyperparameters. Fields that a strategy does not use are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub server_lr: f64,
    pub momentum: f64,
    pub beta1: f64,
    pub beta2: f64,
    /// Adaptivity constant added to `sqrt(v)` by FedAdam/FedAdagrad.
    pub tau: f64,
    pub prox_mu: f64,
    pub dp_noise_multiplier: f64,
    pub dp_target_quantile: f64,
    pub dp_clip_lr: f64,
    pub dp_initial_clip: f64,
}

impl StrategyConfig {
    /// Defaults for `kind` on `dataset`. Only the server learning rate depends
    /// on the pair: FedAvgM uses 1.0, the adaptive optimizers 0.1 (0.01 on
    /// CIFAR-10).
    pub fn defaults(kind: StrategyKind, dataset: DatasetKind) -> Self {
        let server_lr = match kind {
            StrategyKind::FedAdam | StrategyKind::FedAdagrad if dataset == DatasetKind::Cifar10 => 0.01,
            StrategyKind::FedAdam | StrategyKind::FedAdagrad => 0.1,
            _ => 1.0,
        };
        StrategyConfig {
            server_lr,
            momentum: 0.9,
            beta1: 0.9,
            beta2: 0.99,
            tau: 1e-3,
            prox_mu: 0.01,
            dp_noise_multiplier: 1.0,
            dp_target_quantile: 0.5,
            dp_clip_lr: 0.2,
            dp_initial_clip: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("strategy.server_lr", self.server_lr),
            ("strategy.tau", self.tau),
            ("strategy.dp_clip_lr", self.dp_clip_lr),
            ("strategy.dp_initial_clip", self.dp_initial_clip),
        ];
        for (key, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FedError::config(key, "must be a finite value > 0"));
            }
        }
        let unit = [
            ("strategy.momentum", self.momentum),
            ("strategy.beta1", self.beta1),
            ("strategy.beta2", self.beta2),
        ];
        for (key, v) in unit {
            if !(0.0..1.0).contains(&v) {
                return Err(FedError::config(key, "must lie in [0, 1)"));
            }
        }
        for (key, v) in [
            ("strategy.prox_mu", self.prox_mu),
            ("strategy.dp_noise_multiplier", self.dp_noise_multiplier),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FedError::config(key, "must be a finite value >= 0"));
            }
        }
        if !(self.dp_target_quantile > 0.0 && self.dp_target_quantile < 1.0) {
            return Err(FedError::config("strategy.dp_target_quantile", "must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Persistent server state. Buffers are created lazily on first use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyState {
    pub kind: StrategyKind,
    /// FedAvgM momentum buffer `v`.
    pub momentum_buffer: Option<ParameterVector>,
    /// FedAdam/FedAdagrad first moment `m`.
    pub first_moment: Option<ParameterVector>,
    /// FedAdam/FedAdagrad second moment, elementwise nonnegative.
    pub second_moment: Option<ParameterVector>,
    pub clip_norm: f64,
    pub round_index: usize,
}

impl StrategyState {
    pub fn new(kind: StrategyKind, cfg: &StrategyConfig) -> Self {
        StrategyState {
            kind,
            momentum_buffer: None,
            first_moment: None,
            second_moment: None,
            clip_norm: cfg.dp_initial_clip,
            round_index: 0,
        }
    }
}

/// Returns the buffer, allocating zeros of length `len` on first use.
pub(crate) fn buffer(slot: &mut Option<ParameterVector>, len: usize) -> Result<&mut ParameterVector> {
    let buf = slot.get_or_insert_with(|| ParameterVector::zeros(len));
    if buf.len() != len {
        return Err(FedError::Shape(format!(
            "server buffer has {} entries, global model has {len}",
            buf.len()
        )));
    }
    Ok(buf)
}

/// A configured strategy with its evolving server state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub config: StrategyConfig,
    pub state: StrategyState,
}

impl Strategy {
    pub fn new(kind: StrategyKind, config: StrategyConfig) -> Result<Self> {
        config.validate()?;
        let state = StrategyState::new(kind, &config);
        Ok(Strategy { config, state })
    }

    pub fn kind(&self) -> StrategyKind {
        self.state.kind
    }

    /// Proximal coefficient shipped to clients with the round instruction.
    pub fn proximal_mu(&self) -> Option<f64> {
        (self.kind() == StrategyKind::FedProx).then_some(self.config.prox_mu)
    }

    /// Clip norm the next DP round will use.
    pub fn clip_norm(&self) -> Option<f64> {
        (self.kind() == StrategyKind::Dp).then_some(self.state.clip_norm)
    }

    /// Aggregates one round. `rng` is only drawn from by the DP strategy. The DP
    /// path also records each update's pre-clip delta norm.
    pub fn aggregate(
        &mut self,
        global: &ParameterVector,
        updates: &mut [ClientUpdate],
        rng: &mut SimRng,
    ) -> Result<ParameterVector> {
        let cfg = &self.config;
        let state = &mut self.state;
        let next = match state.kind {
            StrategyKind::FedAvg => aggregate_fedavg(global, updates)?,
            StrategyKind::FedProx => aggregate_fedprox(global, updates)?,
            StrategyKind::FedMedian => aggregate_fedmedian(global, updates)?,
            StrategyKind::FedAvgM => aggregate_fedavgm(global, updates, state, cfg)?,
            StrategyKind::FedAdam => aggregate_fedadam(global, updates, state, cfg)?,
            StrategyKind::FedAdagrad => aggregate_fedadagrad(global, updates, state, cfg)?,
            StrategyKind::Dp => {
                let (next, report) = aggregate_dp(global, updates, state, cfg, rng)?;
                for u in updates.iter_mut() {
                    if let Some(&(_, norm)) =
                        report.pre_clip_norms.iter().find(|(id, _)| *id == u.client_id)
                    {
                        u.pre_clip_norm = norm;
                    }
                }
                next
            }
        };
        if !matches!(
            state.kind,
            StrategyKind::FedAvgM | StrategyKind::FedAdam | StrategyKind::FedAdagrad | StrategyKind::Dp
        ) {
            state.round_index += 1;
        }
        Ok(next)
    }
}

/// Zero-mean Gaussian with the given standard deviation; `None` when it is zero.
pub(crate) fn gaussian(std_dev: f64) -> Option<Normal<f64>> {
    (std_dev > 0.0).then(|| Normal::new(0.0, std_dev).expect("finite positive std"))
}
