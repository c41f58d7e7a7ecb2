use super::update::{canonical, sample_weights};
use super::{buffer, ClientUpdate, StrategyConfig, StrategyState};
use crate::error::Result;
use crate::model::ParameterVector;

/// `Δ_t = Σ_k (n_k / n) (w_k - w_t)`.
pub fn pseudo_gradient(global: &ParameterVector, updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let ordered = canonical(global, updates)?;
    let weights = sample_weights(&ordered);
    let w_t = global.as_slice();
    let mut delta = vec![0.0; global.len()];
    for (u, &weight) in ordered.iter().zip(&weights) {
        for ((d, &w_k), &w) in delta.iter_mut().zip(u.new_params.iter()).zip(w_t) {
            *d += weight * (w_k - w);
        }
    }
    Ok(ParameterVector::new(delta))
}

/// Sample-weighted elementwise mean of the client weights.
pub fn aggregate_fedavg(global: &ParameterVector, updates: &[ClientUpdate]) -> Result<ParameterVector> {
    let ordered = canonical(global, updates)?;
    let weights = sample_weights(&ordered);
    let mut out = vec![0.0; global.len()];
    for (u, &weight) in ordered.iter().zip(&weights) {
        for (o, &w_k) in out.iter_mut().zip(u.new_params.iter()) {
            *o += weight * w_k;
        }
    }
    Ok(ParameterVector::new(out))
}

/// Server side of FedProx is plain FedAvg; the proximal term acts during
/// local training.
pub fn aggregate_fedprox(global: &ParameterVector, updates: &[ClientUpdate]) -> Result<ParameterVector> {
    aggregate_fedavg(global, updates)
}

/// Server momentum: `v' = β v + Δ_t`, `w_{t+1} = w_t + η v'`.
pub fn aggregate_fedavgm(
    global: &ParameterVector,
    updates: &[ClientUpdate],
    state: &mut StrategyState,
    cfg: &StrategyConfig,
) -> Result<ParameterVector> {
    let delta = pseudo_gradient(global, updates)?;
    let v = buffer(&mut state.momentum_buffer, global.len())?;
    let next = v
        .as_mut_slice()
        .iter_mut()
        .zip(delta.iter())
        .zip(global.iter())
        .map(|((v, &d), &w)| {
            *v = cfg.momentum * *v + d;
            w + cfg.server_lr * *v
        })
        .collect();
    state.round_index += 1;
    Ok(ParameterVector::new(next))
}
