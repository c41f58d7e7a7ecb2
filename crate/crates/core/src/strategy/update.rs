use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::model::ParameterVector;

/// Wall-clock seconds spent by one client in a round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub train_seconds: f64,
    pub serialize_seconds: f64,
    pub deserialize_seconds: f64,
}

/// One client's contribution to a round.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: usize,
    /// Weights after local training.
    pub new_params: ParameterVector,
    pub num_samples: usize,
    /// L2 norm of the client delta before clipping; set by the DP path.
    pub pre_clip_norm: f64,
    pub timing: TimingRecord,
}

impl ClientUpdate {
    pub fn new(client_id: usize, new_params: ParameterVector, num_samples: usize) -> Self {
        ClientUpdate {
            client_id,
            new_params,
            num_samples,
            pre_clip_norm: 0.0,
            timing: TimingRecord::default(),
        }
    }
}

/// Validates a round's updates against the global model and returns them in
/// ascending client-id order, so that every aggregate is independent of the
/// order in which updates arrived.
pub(crate) fn canonical<'a>(
    global: &ParameterVector,
    updates: &'a [ClientUpdate],
) -> Result<Vec<&'a ClientUpdate>> {
    if updates.is_empty() {
        return Err(FedError::Protocol("no client updates to aggregate".into()));
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by_key(|u| u.client_id);
    for pair in ordered.windows(2) {
        if pair[0].client_id == pair[1].client_id {
            return Err(FedError::Protocol(format!(
                "duplicate update from client {}",
                pair[0].client_id
            )));
        }
    }
    for u in &ordered {
        if u.new_params.len() != global.len() {
            return Err(FedError::Shape(format!(
                "client {} sent {} parameters, global model has {}",
                u.client_id,
                u.new_params.len(),
                global.len()
            )));
        }
        if u.num_samples == 0 {
            return Err(FedError::Protocol(format!(
                "client {} reported zero samples",
                u.client_id
            )));
        }
    }
    Ok(ordered)
}

/// Sample weights `n_k / n` in canonical order.
pub(crate) fn sample_weights(ordered: &[&ClientUpdate]) -> Vec<f64> {
    let total: usize = ordered.iter().map(|u| u.num_samples).sum();
    ordered
        .iter()
        .map(|u| u.num_samples as f64 / total as f64)
        .collect()
}
