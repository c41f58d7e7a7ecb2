//! Server-side differential privacy with adaptive clipping.
//!
//! Client deltas are clipped to `C`, averaged with uniform weights and
//! perturbed with Gaussian noise of standard deviation `z C / K`. The clip
//! norm then moves geometrically toward the target quantile `γ` of the
//! delta-norm distribution: `C' = C exp(-η_C (b - γ))`, where `b` is the
//! fraction of clients whose delta norm was at most `C`.

use rand_distr::Distribution;

use super::update::canonical;
use super::{gaussian, ClientUpdate, StrategyConfig, StrategyState};
use crate::error::Result;
use crate::model::ParameterVector;
use crate::seed::SimRng;

/// Scales `delta` by `min(1, C / ||delta||)`. The flag is true iff
/// `||delta|| <= C`.
pub fn dp_clip(delta: &ParameterVector, clip_norm: f64) -> (ParameterVector, bool) {
    let norm = delta.l2_norm();
    if norm <= clip_norm {
        return (delta.clone(), true);
    }
    let scale = clip_norm / norm;
    (
        ParameterVector::new(delta.iter().map(|d| d * scale).collect()),
        false,
    )
}

/// Geometric clip-norm update toward the target quantile.
pub fn next_clip_norm(clip_norm: f64, below_fraction: f64, cfg: &StrategyConfig) -> f64 {
    clip_norm * (-cfg.dp_clip_lr * (below_fraction - cfg.dp_target_quantile)).exp()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DpRoundReport {
    /// Clip norm applied this round.
    pub clip_norm: f64,
    /// Fraction of clients with delta norm at or below the clip norm.
    pub below_fraction: f64,
    /// `(client_id, ||w_k - w_t||)` in client-id order.
    pub pre_clip_norms: Vec<(usize, f64)>,
}

pub fn aggregate_dp(
    global: &ParameterVector,
    updates: &[ClientUpdate],
    state: &mut StrategyState,
    cfg: &StrategyConfig,
    rng: &mut SimRng,
) -> Result<(ParameterVector, DpRoundReport)> {
    let ordered = canonical(global, updates)?;
    let k = ordered.len() as f64;
    let clip = state.clip_norm;
    let mut sum = vec![0.0; global.len()];
    let mut below = 0usize;
    let mut norms = Vec::with_capacity(ordered.len());
    for u in &ordered {
        let delta = u.new_params.sub(global)?;
        norms.push((u.client_id, delta.l2_norm()));
        let (clipped, was_below) = dp_clip(&delta, clip);
        below += usize::from(was_below);
        for (s, c) in sum.iter_mut().zip(clipped.iter()) {
            *s += c;
        }
    }
    let noise = gaussian(cfg.dp_noise_multiplier * clip / k);
    let next = sum
        .iter()
        .zip(global.iter())
        .map(|(s, w)| {
            let n = noise.as_ref().map_or(0.0, |dist| dist.sample(rng));
            w + (s / k + n)
        })
        .collect();
    let below_fraction = below as f64 / k;
    state.clip_norm = next_clip_norm(clip, below_fraction, cfg);
    state.round_index += 1;
    Ok((
        ParameterVector::new(next),
        DpRoundReport {
            clip_norm: clip,
            below_fraction,
            pre_clip_norms: norms,
        },
    ))
}
