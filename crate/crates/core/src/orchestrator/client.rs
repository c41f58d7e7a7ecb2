use rand::seq::SliceRandom;

use crate::data::Dataset;
use crate::error::{FedError, Result};
use crate::model::{forward_loss_grad, Batch, LocalOptimizer, LocalOptimizerConfig, ModelSpec, ParameterVector};
use crate::seed::rng_from_seed;

/// What the server sends a client at the start of a round.
#[derive(Debug, Clone, Copy)]
pub struct RoundInstruction<'a> {
    pub round: usize,
    pub client_id: usize,
    pub seed: u64,
    /// FedProx coefficient; the local gradient gains `mu (w - w_t)`.
    pub proximal_mu: Option<f64>,
    pub local: &'a LocalOptimizerConfig,
}

/// Trains a copy of `global` on the client's shard for `local_epochs`,
/// reshuffling the shard every epoch and keeping the final partial batch.
pub fn train_client(
    global: &ParameterVector,
    spec: &ModelSpec,
    data: &Dataset,
    shard: &[usize],
    instruction: &RoundInstruction<'_>,
) -> Result<ParameterVector> {
    let numeric = |detail: String| FedError::Numeric {
        round: instruction.round,
        origin: format!("client {}", instruction.client_id),
        detail,
    };
    let cfg = instruction.local;
    let mut rng = rng_from_seed(instruction.seed);
    let mut params = global.clone();
    let mut optimizer = LocalOptimizer::new(cfg, params.len());
    let mut order = shard.to_vec();
    let (mut features, mut labels) = (Vec::new(), Vec::new());
    for _ in 0..cfg.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            data.gather_into(chunk, &mut features, &mut labels);
            let (_, mut grad) = forward_loss_grad(&params, spec, Batch::new(&features, &labels))?;
            if let Some(mu) = instruction.proximal_mu {
                for ((g, &w), &anchor) in grad.as_mut_slice().iter_mut().zip(params.iter()).zip(global.iter()) {
                    *g += mu * (w - anchor);
                }
            }
            optimizer
                .step(&mut params, &grad)
                .map_err(|e| numeric(format!("non-finite gradient at parameter {}", e.index)))?;
        }
    }
    if let Some(i) = params.first_non_finite() {
        return Err(numeric(format!("non-finite parameter {i} after local training")));
    }
    Ok(params)
}
