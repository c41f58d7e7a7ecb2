//! Adaptive server optimizers driven by the pseudo-gradient.
//!
//! Both keep `m' = β1 m + (1 - β1) Δ` and step `w + η m' / (sqrt(v') + τ)`,
//! without bias correction. FedAdam averages the squared pseudo-gradient,
//! FedAdagrad accumulates it, which anneals the effective step.

use super::averaging::pseudo_gradient;
use super::{buffer, ClientUpdate, StrategyConfig, StrategyState};
use crate::error::Result;
use crate::model::ParameterVector;

#[derive(Clone, Copy)]
enum SecondMoment {
    Ema(f64),
    Accumulate,
}

fn adaptive_step(
    global: &ParameterVector,
    updates: &[ClientUpdate],
    state: &mut StrategyState,
    cfg: &StrategyConfig,
    rule: SecondMoment,
) -> Result<ParameterVector> {
    let delta = pseudo_gradient(global, updates)?;
    let len = global.len();
    buffer(&mut state.first_moment, len)?;
    buffer(&mut state.second_moment, len)?;
    let m = state.first_moment.as_mut().expect("allocated").as_mut_slice();
    let v = state.second_moment.as_mut().expect("allocated").as_mut_slice();
    let b1 = cfg.beta1;
    let mut next = Vec::with_capacity(len);
    for i in 0..len {
        let d = delta[i];
        m[i] = b1 * m[i] + (1.0 - b1) * d;
        v[i] = match rule {
            SecondMoment::Ema(b2) => b2 * v[i] + (1.0 - b2) * d * d,
            SecondMoment::Accumulate => v[i] + d * d,
        };
        next.push(global[i] + cfg.server_lr * m[i] / (v[i].sqrt() + cfg.tau));
    }
    state.round_index += 1;
    Ok(ParameterVector::new(next))
}

pub fn aggregate_fedadam(
    global: &ParameterVector,
    updates: &[ClientUpdate],
    state: &mut StrategyState,
    cfg: &StrategyConfig,
) -> Result<ParameterVector> {
    adaptive_step(global, updates, state, cfg, SecondMoment::Ema(cfg.beta2))
}

pub fn aggregate_fedadagrad(
    global: &ParameterVector,
    updates: &[ClientUpdate],
    state: &mut StrategyState,
    cfg: &StrategyConfig,
) -> Result<ParameterVector> {
    adaptive_step(global, updates, state, cfg, SecondMoment::Accumulate)
}
