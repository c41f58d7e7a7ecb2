//! Client corruption used by robustness experiments.
//!
//! Attacks act on the delta `w_k - w_t`, so a scale attack is meaningful
//! regardless of the magnitude of the weights themselves.

use std::collections::BTreeSet;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FedError, Result};
use crate::model::ParameterVector;
use crate::seed::rng_from_seed;
use crate::strategy::ClientUpdate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdversaryKind {
    None,
    /// `w_t + factor (w_k - w_t)`
    Scale,
    /// Replace the weights with a standard normal vector.
    Random,
}

impl AdversaryKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            AdversaryKind::None => "none",
            AdversaryKind::Scale => "scale",
            AdversaryKind::Random => "random",
        }
    }
}

impl std::str::FromStr for AdversaryKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "none" => Ok(AdversaryKind::None),
            "scale" => Ok(AdversaryKind::Scale),
            "random" => Ok(AdversaryKind::Random),
            other => Err(format!("unknown adversary `{other}` (expected none | scale | random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarySpec {
    pub kind: AdversaryKind,
    pub scale_factor: f64,
    pub affected_clients: BTreeSet<usize>,
}

impl Default for AdversarySpec {
    fn default() -> Self {
        AdversarySpec {
            kind: AdversaryKind::None,
            scale_factor: 1.0,
            affected_clients: BTreeSet::new(),
        }
    }
}

impl AdversarySpec {
    pub fn scale(factor: f64, clients: impl IntoIterator<Item = usize>) -> Self {
        AdversarySpec {
            kind: AdversaryKind::Scale,
            scale_factor: factor,
            affected_clients: clients.into_iter().collect(),
        }
    }

    pub fn random(clients: impl IntoIterator<Item = usize>) -> Self {
        AdversarySpec {
            kind: AdversaryKind::Random,
            scale_factor: 1.0,
            affected_clients: clients.into_iter().collect(),
        }
    }

    pub fn is_active(&self) -> bool {
        self.kind != AdversaryKind::None && !self.affected_clients.is_empty()
    }

    pub fn validate(&self, num_clients: usize) -> Result<()> {
        if !self.scale_factor.is_finite() {
            return Err(FedError::config("adversary.factor", "must be finite"));
        }
        if let Some(&bad) = self.affected_clients.iter().find(|&&c| c >= num_clients) {
            return Err(FedError::config(
                "adversary.clients",
                format!("client {bad} is not among the {num_clients} clients"),
            ));
        }
        Ok(())
    }
}

/// Applies `spec` to one update; clients outside the affected set pass
/// through untouched. `seed` drives the random attack only.
pub fn corrupt(update: ClientUpdate, global: &ParameterVector, spec: &AdversarySpec, seed: u64) -> ClientUpdate {
    if !spec.affected_clients.contains(&update.client_id) {
        return update;
    }
    let new_params = match spec.kind {
        AdversaryKind::None => return update,
        AdversaryKind::Scale => ParameterVector::new(
            update
                .new_params
                .iter()
                .zip(global.iter())
                .map(|(&w, &g)| g + spec.scale_factor * (w - g))
                .collect(),
        ),
        AdversaryKind::Random => {
            let mut rng = rng_from_seed(seed);
            ParameterVector::new(
                (0..update.new_params.len())
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect(),
            )
        }
    };
    ClientUpdate { new_params, ..update }
}
