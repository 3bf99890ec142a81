//! Configuration enumeration and the selection algorithms: network-wise
//! exhaustive search, layer-wise greedy search over weights, and
//! sparsity-driven selection for activations.

mod greedy;
mod menu;
mod select;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use greedy::{
    greedy_apply, layer_wise_greedy, network_wise_search, sort_pairs, CandidatePair, GreedyOutcome,
    GreedyParams, GreedyStep, NetworkCandidate, NetworkChoice, StepOutcome, StopPolicy,
};
pub use menu::PatternMenu;
pub use select::{
    effective_sparsity, profile_calibration, pseudo_density, select_activation_configs,
    sparsity_select, ActStatistic, ActivationSelectParams, LayerStats, Spread,
};

use crate::error::{Result, TasdError};

/// Per-layer configurations; layers without an entry execute dense.
///
/// Serialized as `{"layer_id": {"terms": [[n, m], ...]}, ...}`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Assignment(BTreeMap<String, crate::matrix::TasdConfig>);

impl Assignment {
    pub fn get(&self, layer_id: &str) -> Option<&crate::matrix::TasdConfig> {
        self.0.get(layer_id)
    }

    pub fn set(&mut self, layer_id: &str, config: crate::matrix::TasdConfig) {
        self.0.insert(layer_id.to_string(), config);
    }

    pub fn remove(&mut self, layer_id: &str) -> Option<crate::matrix::TasdConfig> {
        self.0.remove(layer_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &crate::matrix::TasdConfig)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Checks every entry against the menu.
    pub fn validate(&self, menu: &PatternMenu) -> Result<()> {
        for (id, c) in &self.0 {
            if !menu.expresses(c) {
                return Err(TasdError::NotExpressible(format!("{c} (layer {id})")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("assignment serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| TasdError::Schema(e.to_string()))
    }
}
