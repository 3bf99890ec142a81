//! Sparsity-driven selection for runtime (activation) decomposition.

use serde::{Deserialize, Serialize};

use super::{Assignment, PatternMenu};
use crate::error::{Result, TasdError};
use crate::matrix::{DenseMatrix, TasdConfig};

/// Picks the config with the largest approximated sparsity strictly below
/// `sparsity + alpha`. `configs` must hold the dense option; it is returned
/// whenever nothing sparser qualifies (including `sparsity + alpha <= 0`).
pub fn sparsity_select(sparsity: f64, alpha: f64, configs: &[TasdConfig]) -> TasdConfig {
    let target = sparsity + alpha;
    let dense = || {
        configs
            .iter()
            .find(|c| c.approximated_sparsity() == 0.0)
            .cloned()
            .expect("config list includes the dense option")
    };
    if target <= 0.0 {
        return dense();
    }
    configs
        .iter()
        .filter(|c| c.approximated_sparsity() < target)
        .max_by(|a, b| {
            a.approximated_sparsity()
                .total_cmp(&b.approximated_sparsity())
        })
        .cloned()
        .unwrap_or_else(dense)
}

/// Smallest fraction of entries whose largest magnitudes sum to at least
/// `rho` of the total. All-zero (or empty) input gives 0.
pub fn pseudo_density(magnitudes: &[f64], rho: f64) -> f64 {
    if magnitudes.is_empty() {
        return 0.0;
    }
    let mut sorted: Vec<f64> = magnitudes.iter().map(|v| v.abs()).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let goal = rho * total;
    let mut prefix = 0.0;
    for (k, v) in sorted.iter().enumerate() {
        prefix += v;
        if prefix >= goal {
            return (k + 1) as f64 / sorted.len() as f64;
        }
    }
    1.0
}

/// Spread of per-sample sparsity across a calibration set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub min: f64,
    pub max: f64,
    pub std: f64,
}

/// Per-layer sparsity statistics.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weight_sparsity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_sparsity_mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_sparsity_p99: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub act_sparsity_spread: Option<Spread>,
    /// Absolute values of each calibration sample, for pseudo-density.
    #[serde(skip)]
    pub act_magnitude_samples: Vec<Vec<f64>>,
}

impl LayerStats {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("weight_sparsity", self.weight_sparsity),
            ("act_sparsity_mean", self.act_sparsity_mean),
            ("act_sparsity_p99", self.act_sparsity_p99),
        ] {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(&v) {
                    return Err(TasdError::Schema(format!(
                        "layer {}: {name} = {v} outside [0, 1]",
                        self.layer_id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Mean over samples of the per-sample pseudo-density.
    pub fn pseudo_density(&self, rho: f64) -> Option<f64> {
        if self.act_magnitude_samples.is_empty() {
            return None;
        }
        let sum: f64 = self
            .act_magnitude_samples
            .iter()
            .map(|s| pseudo_density(s, rho))
            .sum();
        Some(sum / self.act_magnitude_samples.len() as f64)
    }
}

/// Nearest-rank percentile of `sorted` (ascending), `q` in `(0, 1]`.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Profiles one layer's calibration samples: mean, p99 (nearest rank) and
/// spread of per-sample sparsity, plus the magnitudes for pseudo-density.
pub fn profile_calibration(layer_id: &str, samples: &[DenseMatrix]) -> Result<LayerStats> {
    if samples.is_empty() {
        return Err(TasdError::EmptyCalibration(layer_id.to_string()));
    }
    let mut sparsities: Vec<f64> = samples.iter().map(|s| s.sparsity()).collect();
    let (mean, std) = crate::approxmm::mean_std(&sparsities);
    sparsities.sort_by(f64::total_cmp);
    Ok(LayerStats {
        layer_id: layer_id.to_string(),
        weight_sparsity: None,
        act_sparsity_mean: Some(mean),
        act_sparsity_p99: Some(nearest_rank(&sparsities, 0.99)),
        act_sparsity_spread: Some(Spread {
            min: sparsities[0],
            max: sparsities[sparsities.len() - 1],
            std,
        }),
        act_magnitude_samples: samples
            .iter()
            .map(|s| s.data().iter().map(|v| v.abs()).collect())
            .collect(),
    })
}

/// Which activation statistic drives selection for ReLU-style layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActStatistic {
    Mean,
    #[default]
    P99,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationSelectParams {
    pub alpha: f64,
    pub rho: f64,
    pub statistic: ActStatistic,
    /// ReLU-style layers use measured sparsity; others use 1 - pseudo-density.
    pub relu_based: bool,
}

impl Default for ActivationSelectParams {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            rho: 0.99,
            statistic: ActStatistic::P99,
            relu_based: true,
        }
    }
}

/// Effective sparsity used for selection.
pub fn effective_sparsity(stats: &LayerStats, params: &ActivationSelectParams) -> Result<f64> {
    let missing = || TasdError::MissingStats(stats.layer_id.clone());
    if params.relu_based {
        match params.statistic {
            ActStatistic::Mean => stats.act_sparsity_mean,
            ActStatistic::P99 => stats.act_sparsity_p99,
        }
        .ok_or_else(missing)
    } else {
        stats
            .pseudo_density(params.rho)
            .map(|d| 1.0 - d)
            .ok_or_else(missing)
    }
}

/// Per-layer selection; layers that land on dense are left unassigned.
pub fn select_activation_configs(
    stats: &[LayerStats],
    params: &ActivationSelectParams,
    menu: &PatternMenu,
) -> Result<Assignment> {
    let configs = menu.enumerate_configs();
    let mut out = Assignment::default();
    for s in stats {
        let sparsity = effective_sparsity(s, params)?;
        let chosen = sparsity_select(sparsity, params.alpha, &configs);
        if !chosen.is_dense() {
            out.set(&s.layer_id, chosen);
        }
    }
    Ok(out)
}
