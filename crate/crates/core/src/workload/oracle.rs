use std::collections::HashMap;
use std::fs;
use std::process::Command;

use serde_json::json;

use super::Workload;
use crate::approxmm::matmul;
use crate::decomp::{decompose, drop_metrics};
use crate::error::{Result, TasdError};
use crate::matrix::{save_matrix, TasdConfig};
use crate::search::Assignment;

/// Scores a workload under an assignment. Calls are made from one thread at a
/// time; implementations may cache.
pub trait QualityOracle {
    fn evaluate(&mut self, workload: &Workload, assignment: &Assignment) -> Result<f64>;
}

impl<F> QualityOracle for F
where
    F: FnMut(&Workload, &Assignment) -> Result<f64>,
{
    fn evaluate(&mut self, workload: &Workload, assignment: &Assignment) -> Result<f64> {
        self(workload, assignment)
    }
}

type LayerCache = HashMap<(usize, TasdConfig), f64>;

/// `baseline * mean_layers(retained magnitude fraction)`; dense layers and
/// layers without weights contribute 1.
#[derive(Debug, Default)]
pub struct RetainedMagnitudeOracle {
    cache: LayerCache,
}

impl RetainedMagnitudeOracle {
    pub fn new() -> Self {
        Self::default()
    }
}

impl QualityOracle for RetainedMagnitudeOracle {
    fn evaluate(&mut self, workload: &Workload, assignment: &Assignment) -> Result<f64> {
        workload.check_assignment(assignment)?;
        let mut sum = 0.0;
        for (i, layer) in workload.layers.iter().enumerate() {
            let (Some(config), Some(w)) = (assignment.get(&layer.layer_id), &layer.weight) else {
                sum += 1.0;
                continue;
            };
            let retained = *self
                .cache
                .entry((i, config.clone()))
                .or_insert_with(|| drop_metrics(&decompose(w, config)).retained_magnitude_fraction);
            sum += retained;
        }
        Ok(workload.baseline_quality * sum / workload.layers.len() as f64)
    }
}

/// `baseline * (1 - mean_layers(mean relative output error))` over each
/// layer's calibration inputs; dense layers contribute zero error.
#[derive(Debug, Default)]
pub struct OutputErrorOracle {
    cache: LayerCache,
}

impl OutputErrorOracle {
    pub fn new() -> Self {
        Self::default()
    }
}

impl QualityOracle for OutputErrorOracle {
    fn evaluate(&mut self, workload: &Workload, assignment: &Assignment) -> Result<f64> {
        workload.check_assignment(assignment)?;
        let mut sum = 0.0;
        for (i, layer) in workload.layers.iter().enumerate() {
            let Some(config) = assignment.get(&layer.layer_id) else {
                continue;
            };
            if let Some(&e) = self.cache.get(&(i, config.clone())) {
                sum += e;
                continue;
            }
            let w = layer.weight.as_ref().ok_or_else(|| {
                TasdError::Schema(format!("layer {} has no weight matrix", layer.layer_id))
            })?;
            if layer.calibration.is_empty() {
                return Err(TasdError::MissingCalibration(layer.layer_id.clone()));
            }
            let d = decompose(w, config);
            let mut err = 0.0;
            for x in &layer.calibration {
                let reference = matmul(w, x)?.frobenius_norm();
                if reference == 0.0 {
                    return Err(TasdError::DegenerateProduct);
                }
                err += matmul(d.residual(), x)?.frobenius_norm() / reference;
            }
            let e = err / layer.calibration.len() as f64;
            self.cache.insert((i, config.clone()), e);
            sum += e;
        }
        Ok(workload.baseline_quality * (1.0 - sum / workload.layers.len() as f64))
    }
}

/// Runs `argv + [manifest_path]` and parses stdout as one decimal number.
///
/// The manifest handed to the command lists, per layer, the approximated
/// weight matrix (TASD1, dense layout) and its configuration:
/// `{"name", "baseline_quality", "layers": [{"id", "m", "n", "k", "config",
/// "weight"}]}`. The command runs inside a fresh temporary directory that
/// holds the manifest and the weight files.
#[derive(Debug, Clone)]
pub struct ExternalCommandOracle {
    argv: Vec<String>,
}

impl ExternalCommandOracle {
    pub fn new(argv: Vec<String>) -> Result<Self> {
        if argv.is_empty() {
            return Err(TasdError::OracleFailure("empty command".into()));
        }
        Ok(Self { argv })
    }

    pub fn argv(&self) -> &[String] {
        &self.argv
    }
}

impl QualityOracle for ExternalCommandOracle {
    fn evaluate(&mut self, workload: &Workload, assignment: &Assignment) -> Result<f64> {
        workload.check_assignment(assignment)?;
        let dir = tempfile::tempdir().map_err(|e| TasdError::io(std::env::temp_dir(), e))?;
        let mut layers = Vec::new();
        for (i, layer) in workload.layers.iter().enumerate() {
            let config = assignment.get(&layer.layer_id);
            let weight = match &layer.weight {
                Some(w) => {
                    let file = format!("layer_{i}.tasd");
                    let approx = match config {
                        Some(c) => decompose(w, c).approximation(),
                        None => w.clone(),
                    };
                    save_matrix(&approx, dir.path().join(&file))?;
                    Some(file)
                }
                None => None,
            };
            layers.push(json!({
                "id": layer.layer_id,
                "m": layer.gemm_m,
                "n": layer.gemm_n,
                "k": layer.gemm_k,
                "config": config.map(|c| c.canonical()).unwrap_or_else(|| "dense".into()),
                "weight": weight,
            }));
        }
        let manifest = json!({
            "name": workload.name,
            "baseline_quality": workload.baseline_quality,
            "layers": layers,
        });
        let manifest_path = dir.path().join("manifest.json");
        fs::write(
            &manifest_path,
            serde_json::to_vec_pretty(&manifest).expect("json"),
        )
        .map_err(|e| TasdError::io(&manifest_path, e))?;

        let output = Command::new(&self.argv[0])
            .args(&self.argv[1..])
            .arg(&manifest_path)
            .current_dir(dir.path())
            .output()
            .map_err(|e| TasdError::OracleFailure(format!("cannot spawn {}: {e}", self.argv[0])))?;
        if !output.status.success() {
            return Err(TasdError::OracleFailure(format!(
                "{} exited with {}: {}",
                self.argv[0],
                output.status,
                String::from_utf8_lossy(&output.stderr).trim()
            )));
        }
        let stdout = String::from_utf8_lossy(&output.stdout);
        let text = stdout.trim();
        text.parse::<f64>()
            .ok()
            .filter(|v| v.is_finite())
            .ok_or_else(|| TasdError::OracleFailure(format!("unparsable oracle output {text:?}")))
    }
}
