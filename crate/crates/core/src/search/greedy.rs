//! Quality-constrained configuration search over a workload.

use super::{Assignment, PatternMenu};
use crate::decomp::{decompose, drop_metrics};
use crate::error::{Result, TasdError};
use crate::exec::Execution;
use crate::hwmodel::{workload_cost, HwSpec};
use crate::matrix::TasdConfig;
use crate::workload::{total_macs, QualityOracle, Workload};

/// One evaluated uniform configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCandidate {
    pub config: TasdConfig,
    pub quality: f64,
    pub cost: f64,
    pub qualifies: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkChoice {
    pub config: TasdConfig,
    pub quality: f64,
    pub cost: f64,
    pub candidates: Vec<NetworkCandidate>,
}

fn uniform_assignment(workload: &Workload, config: &TasdConfig) -> Assignment {
    let mut a = Assignment::default();
    if !config.is_dense() {
        for l in &workload.layers {
            a.set(&l.layer_id, config.clone());
        }
    }
    a
}

/// Tries every enumerated configuration on all layers at once and returns the
/// cheapest whose quality reaches `threshold * baseline`. Cost is total cycles
/// from the hardware model when `hw` is given, else total MACs; equal costs
/// prefer the larger coverage. Falls back to dense (reported at baseline
/// quality) when nothing qualifies.
pub fn network_wise_search(
    workload: &Workload,
    menu: &PatternMenu,
    oracle: &mut dyn QualityOracle,
    threshold: f64,
    hw: Option<&HwSpec>,
) -> Result<NetworkChoice> {
    let gate = threshold * workload.baseline_quality;
    let mut candidates = Vec::new();
    for config in menu.enumerate_configs() {
        let assignment = uniform_assignment(workload, &config);
        let quality = oracle.evaluate(workload, &assignment)?;
        if !quality.is_finite() {
            return Err(TasdError::OracleFailure(format!(
                "non-finite quality for {config}"
            )));
        }
        let cost = match hw {
            Some(hw) => {
                workload_cost(hw, workload, &assignment, &Default::default())?
                    .total
                    .cycles as f64
            }
            None => total_macs(workload, &assignment) as f64,
        };
        candidates.push(NetworkCandidate {
            config,
            quality,
            cost,
            qualifies: quality >= gate,
        });
    }
    let best = candidates.iter().filter(|c| c.qualifies).min_by(|a, b| {
        a.cost
            .total_cmp(&b.cost)
            .then(b.config.coverage().total_cmp(&a.config.coverage()))
    });
    let (config, quality, cost) = match best {
        Some(c) => (c.config.clone(), c.quality, c.cost),
        None => {
            let dense = TasdConfig::dense(menu.m)?.with_label("dense");
            let cost = candidates
                .iter()
                .find(|c| c.config.is_dense())
                .map_or(f64::NAN, |c| c.cost);
            (dense, workload.baseline_quality, cost)
        }
    };
    Ok(NetworkChoice {
        config,
        quality,
        cost,
        candidates,
    })
}

/// A `(layer, config)` option with its dropped non-zero fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePair {
    pub layer_index: usize,
    pub layer_id: String,
    pub config: TasdConfig,
    pub drop: f64,
}

/// What happens after a pair pushes quality below the gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopPolicy {
    /// Revert the offending pair and stop.
    #[default]
    RevertAndStop,
    /// Revert the offending pair and keep trying later pairs.
    SkipAndContinue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreedyParams {
    pub threshold: f64,
    pub policy: StopPolicy,
}

impl Default for GreedyParams {
    fn default() -> Self {
        Self {
            threshold: 0.99,
            policy: StopPolicy::RevertAndStop,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOutcome {
    Applied,
    Reverted,
    /// The layer already runs a lower-coverage config.
    SkippedDowngrade,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyStep {
    pub layer_id: String,
    pub config: TasdConfig,
    pub drop: f64,
    pub quality: Option<f64>,
    pub outcome: StepOutcome,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyOutcome {
    pub assignment: Assignment,
    pub quality: f64,
    pub steps: Vec<GreedyStep>,
}

/// Ascending drop; ties prefer larger coverage, then earlier layers.
pub fn sort_pairs(pairs: &mut [CandidatePair]) {
    pairs.sort_by(|a, b| {
        a.drop
            .total_cmp(&b.drop)
            .then(b.config.coverage().total_cmp(&a.config.coverage()))
            .then(a.layer_index.cmp(&b.layer_index))
    });
}

/// Walks `pairs` in the given order, tentatively applying each one and
/// querying `eval`. A pair replaces a layer's current config unless that
/// would raise its coverage. Returns the last assignment that met
/// `threshold * baseline`.
pub fn greedy_apply(
    pairs: &[CandidatePair],
    baseline: f64,
    params: GreedyParams,
    mut eval: impl FnMut(&Assignment) -> Result<f64>,
) -> Result<GreedyOutcome> {
    let gate = params.threshold * baseline;
    let mut assignment = Assignment::default();
    let mut quality = baseline;
    let mut steps = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let previous = assignment.get(&pair.layer_id).cloned();
        if previous
            .as_ref()
            .is_some_and(|p| p.coverage() < pair.config.coverage())
        {
            steps.push(GreedyStep {
                layer_id: pair.layer_id.clone(),
                config: pair.config.clone(),
                drop: pair.drop,
                quality: None,
                outcome: StepOutcome::SkippedDowngrade,
            });
            continue;
        }
        assignment.set(&pair.layer_id, pair.config.clone());
        let q = eval(&assignment)?;
        if !q.is_finite() {
            return Err(TasdError::OracleFailure(format!("non-finite quality {q}")));
        }
        let passed = q >= gate;
        steps.push(GreedyStep {
            layer_id: pair.layer_id.clone(),
            config: pair.config.clone(),
            drop: pair.drop,
            quality: Some(q),
            outcome: if passed {
                StepOutcome::Applied
            } else {
                StepOutcome::Reverted
            },
        });
        if passed {
            quality = q;
            continue;
        }
        match previous {
            Some(p) => assignment.set(&pair.layer_id, p),
            None => {
                assignment.remove(&pair.layer_id);
            }
        }
        if params.policy == StopPolicy::RevertAndStop {
            break;
        }
    }
    Ok(GreedyOutcome {
        assignment,
        quality,
        steps,
    })
}

/// Layer-wise greedy search over weight decompositions: every
/// `(layer, non-dense config)` pair is scored by its dropped non-zero
/// fraction, sorted, and applied in a single pass.
pub fn layer_wise_greedy(
    workload: &Workload,
    menu: &PatternMenu,
    oracle: &mut dyn QualityOracle,
    params: GreedyParams,
    exec: Execution,
) -> Result<GreedyOutcome> {
    if let Some(l) = workload.layers.iter().find(|l| l.weight.is_none()) {
        return Err(TasdError::Schema(format!(
            "layer {} has no weight matrix",
            l.layer_id
        )));
    }
    let configs: Vec<TasdConfig> = menu
        .enumerate_configs()
        .into_iter()
        .filter(|c| !c.is_dense())
        .collect();
    let n_cfg = configs.len();
    let mut pairs = exec.map_indexed(workload.layers.len() * n_cfg, |i| {
        let layer_index = i / n_cfg.max(1);
        let layer = &workload.layers[layer_index];
        let config = &configs[i % n_cfg];
        let w = layer.weight.as_ref().expect("checked above");
        CandidatePair {
            layer_index,
            layer_id: layer.layer_id.clone(),
            config: config.clone(),
            drop: drop_metrics(&decompose(w, config)).dropped_nnz_fraction,
        }
    });
    sort_pairs(&mut pairs);
    greedy_apply(&pairs, workload.baseline_quality, params, |a| {
        oracle.evaluate(workload, a)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{random_sparse, ValueDist};
    use crate::workload::{LayerSpec, RetainedMagnitudeOracle};

    fn pair(layer_index: usize, id: &str, c: &str, drop: f64) -> CandidatePair {
        CandidatePair {
            layer_index,
            layer_id: id.into(),
            config: c.parse().unwrap(),
            drop,
        }
    }

    /// Hand-traced: quality = 1 - sum of applied drops; gate 0.85.
    #[test]
    fn toy_trace_stops_on_third_pair() {
        let mut pairs = vec![
            pair(0, "L1", "1:4", 0.4),
            pair(1, "L2", "2:4", 0.1),
            pair(0, "L1", "2:4", 0.0),
        ];
        sort_pairs(&mut pairs);
        assert_eq!(pairs[0].drop, 0.0);
        let table = pairs.clone();
        let eval = |a: &Assignment| -> Result<f64> {
            let lost: f64 = a
                .iter()
                .map(|(id, c)| {
                    table
                        .iter()
                        .find(|p| p.layer_id == id && &p.config == c)
                        .unwrap()
                        .drop
                })
                .sum();
            Ok(1.0 - lost)
        };
        let params = GreedyParams {
            threshold: 0.85,
            policy: StopPolicy::RevertAndStop,
        };
        let out = greedy_apply(&pairs, 1.0, params, eval).unwrap();
        assert_eq!(out.assignment.get("L1").unwrap().canonical(), "2:4");
        assert_eq!(out.assignment.get("L2").unwrap().canonical(), "2:4");
        assert_eq!(out.steps.len(), 3);
        assert_eq!(out.steps[2].outcome, StepOutcome::Reverted);
        assert!((out.quality - 0.9).abs() < 1e-12);

        let loose = GreedyParams {
            threshold: 0.0,
            ..params
        };
        let out = greedy_apply(&pairs, 1.0, loose, eval).unwrap();
        assert_eq!(out.assignment.get("L1").unwrap().canonical(), "1:4");
    }

    #[test]
    fn skip_and_continue_keeps_going() {
        let pairs = vec![
            pair(0, "A", "2:4", 0.0),
            pair(1, "B", "1:4", 0.5),
            pair(2, "C", "2:4", 0.6),
        ];
        // B alone is too lossy; C alone is fine
        let eval = |a: &Assignment| Ok(if a.get("B").is_some() { 0.5 } else { 1.0 });
        let stop = greedy_apply(&pairs, 1.0, GreedyParams::default(), eval).unwrap();
        assert!(stop.assignment.get("C").is_none());
        let cont = greedy_apply(
            &pairs,
            1.0,
            GreedyParams {
                threshold: 0.99,
                policy: StopPolicy::SkipAndContinue,
            },
            eval,
        )
        .unwrap();
        assert!(cont.assignment.get("C").is_some());
        assert!(cont.assignment.get("B").is_none());
    }

    #[test]
    fn downgrades_are_skipped() {
        let pairs = vec![pair(0, "A", "1:4", 0.0), pair(0, "A", "2:4", 0.0)];
        let out = greedy_apply(&pairs, 1.0, GreedyParams::default(), |_| Ok(1.0)).unwrap();
        assert_eq!(out.assignment.get("A").unwrap().canonical(), "1:4");
        assert_eq!(out.steps[1].outcome, StepOutcome::SkippedDowngrade);
    }

    fn weighted(seed: u64, density: f64) -> Workload {
        let layers = (0..2)
            .map(|i| {
                let w = random_sparse(16, 32, density, ValueDist::NormalThird, seed + i).unwrap();
                LayerSpec::new(format!("L{i}"), 16, 8, 32)
                    .with_weight(w)
                    .unwrap()
            })
            .collect();
        Workload::new("w", 1.0, layers).unwrap()
    }

    #[test]
    fn zero_weights_take_most_aggressive() {
        let layers = vec![LayerSpec::new("Z", 4, 4, 8)
            .with_weight(crate::matrix::DenseMatrix::zeros(4, 8))
            .unwrap()];
        let w = Workload::new("z", 1.0, layers).unwrap();
        let out = layer_wise_greedy(
            &w,
            &PatternMenu::vegeta_m8(),
            &mut RetainedMagnitudeOracle::new(),
            GreedyParams::default(),
            Execution::default(),
        )
        .unwrap();
        assert_eq!(out.assignment.get("Z").unwrap().canonical(), "1:8");
    }

    #[test]
    fn greedy_result_meets_gate() {
        let w = weighted(5, 0.3);
        let out = layer_wise_greedy(
            &w,
            &PatternMenu::vegeta_m8(),
            &mut RetainedMagnitudeOracle::new(),
            GreedyParams::default(),
            Execution::default(),
        )
        .unwrap();
        let q = RetainedMagnitudeOracle::new()
            .evaluate(&w, &out.assignment)
            .unwrap();
        assert!(q >= 0.99);
        assert_eq!(q, out.quality);
    }

    #[test]
    fn network_search_by_coverage_oracle() {
        let w = weighted(1, 0.5);
        let menu = PatternMenu::new(4, [1, 2, 3], 1).unwrap();
        let mut oracle = |wl: &Workload, a: &Assignment| -> Result<f64> {
            let ok = wl
                .layers
                .iter()
                .all(|l| a.get(&l.layer_id).is_none_or(|c| c.coverage() >= 0.75));
            Ok(if ok { 1.0 } else { 0.0 })
        };
        let choice = network_wise_search(&w, &menu, &mut oracle, 0.99, None).unwrap();
        assert_eq!(choice.config.canonical(), "3:4");
        assert_eq!(choice.candidates.len(), 4);

        let mut reject = |_: &Workload, _: &Assignment| -> Result<f64> { Ok(0.0) };
        let choice = network_wise_search(&w, &menu, &mut reject, 0.99, None).unwrap();
        assert!(choice.config.is_dense());
        assert_eq!(choice.quality, 1.0);
    }

    #[test]
    fn layer_without_weight_is_rejected() {
        let w = Workload::new("n", 1.0, vec![LayerSpec::new("x", 2, 2, 8)]).unwrap();
        assert!(layer_wise_greedy(
            &w,
            &PatternMenu::vegeta_m8(),
            &mut RetainedMagnitudeOracle::new(),
            GreedyParams::default(),
            Execution::Sequential,
        )
        .is_err());
    }
}
