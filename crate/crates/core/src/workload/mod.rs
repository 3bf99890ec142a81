//! Workload manifests and quality oracles.
//!
//! A manifest is JSON:
//!
//! ```json
//! {"name": "toy", "baseline_quality": 0.76,
//!  "layers": [{"id": "L1", "m": 784, "n": 128, "k": 1152,
//!              "weight": "l1.tasd", "weights_sparse": true, "acts_sparse": false,
//!              "calibration_dir": "calib/L1"}]}
//! ```
//!
//! Relative paths resolve against the manifest's directory. A weight matrix is
//! `m x k` (N:M blocks run along `k`); calibration inputs are `k x *`.

mod oracle;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use oracle::{
    ExternalCommandOracle, OutputErrorOracle, QualityOracle, RetainedMagnitudeOracle,
};

use crate::error::{Result, TasdError};
use crate::matrix::{load_matrix, DenseMatrix};
use crate::search::{profile_calibration, Assignment, LayerStats};

/// Inline activation statistics, as an alternative to calibration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActStatsEntry {
    pub mean: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerEntry {
    id: String,
    m: usize,
    n: usize,
    k: usize,
    #[serde(default)]
    weight: Option<PathBuf>,
    #[serde(default)]
    weights_sparse: bool,
    #[serde(default)]
    acts_sparse: bool,
    #[serde(default)]
    calibration_dir: Option<PathBuf>,
    #[serde(default)]
    act_stats: Option<ActStatsEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    name: String,
    baseline_quality: f64,
    layers: Vec<LayerEntry>,
}

/// One GEMM layer: `C[m x n] = W[m x k] * X[k x n]`.
#[derive(Debug, Clone)]
pub struct LayerSpec {
    pub layer_id: String,
    pub gemm_m: usize,
    pub gemm_n: usize,
    pub gemm_k: usize,
    pub weight_path: Option<PathBuf>,
    pub weight: Option<DenseMatrix>,
    pub weights_sparse: bool,
    pub acts_sparse: bool,
    pub calibration: Vec<DenseMatrix>,
    pub act_stats: Option<LayerStats>,
}

impl LayerSpec {
    pub fn new(layer_id: impl Into<String>, m: usize, n: usize, k: usize) -> Self {
        Self {
            layer_id: layer_id.into(),
            gemm_m: m,
            gemm_n: n,
            gemm_k: k,
            weight_path: None,
            weight: None,
            weights_sparse: false,
            acts_sparse: false,
            calibration: Vec::new(),
            act_stats: None,
        }
    }

    pub fn with_weight(mut self, w: DenseMatrix) -> Result<Self> {
        if w.dims() != (self.gemm_m, self.gemm_k) {
            return Err(TasdError::DimensionMismatch(format!(
                "layer {}: weight is {}x{}, expected {}x{}",
                self.layer_id,
                w.rows(),
                w.cols(),
                self.gemm_m,
                self.gemm_k
            )));
        }
        self.weights_sparse = true;
        self.weight = Some(w);
        Ok(self)
    }

    pub fn with_calibration(mut self, samples: Vec<DenseMatrix>) -> Result<Self> {
        if let Some(s) = samples.iter().find(|s| s.rows() != self.gemm_k) {
            return Err(TasdError::DimensionMismatch(format!(
                "layer {}: calibration input has {} rows, expected k = {}",
                self.layer_id,
                s.rows(),
                self.gemm_k
            )));
        }
        self.acts_sparse = true;
        self.calibration = samples;
        Ok(self)
    }

    pub fn macs(&self) -> u64 {
        self.gemm_m as u64 * self.gemm_n as u64 * self.gemm_k as u64
    }

    /// Activation statistics: inline ones first, else profiled calibration.
    pub fn activation_stats(&self) -> Result<LayerStats> {
        if let Some(s) = &self.act_stats {
            return Ok(s.clone());
        }
        if self.calibration.is_empty() {
            return Err(TasdError::MissingStats(self.layer_id.clone()));
        }
        profile_calibration(&self.layer_id, &self.calibration)
    }
}

/// An ordered list of GEMM layers with a baseline quality.
#[derive(Debug, Clone)]
pub struct Workload {
    pub name: String,
    pub baseline_quality: f64,
    pub layers: Vec<LayerSpec>,
}

impl Workload {
    pub fn new(
        name: impl Into<String>,
        baseline_quality: f64,
        layers: Vec<LayerSpec>,
    ) -> Result<Self> {
        let w = Self {
            name: name.into(),
            baseline_quality,
            layers,
        };
        w.validate()?;
        Ok(w)
    }

    fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(TasdError::Schema("workload has no layers".into()));
        }
        if !self.baseline_quality.is_finite() {
            return Err(TasdError::Schema("baseline_quality must be finite".into()));
        }
        let mut seen = HashSet::new();
        for l in &self.layers {
            if !seen.insert(l.layer_id.as_str()) {
                return Err(TasdError::Schema(format!(
                    "duplicate layer id {}",
                    l.layer_id
                )));
            }
            if l.gemm_m == 0 || l.gemm_n == 0 || l.gemm_k == 0 {
                return Err(TasdError::Schema(format!(
                    "layer {} has a zero GEMM dimension",
                    l.layer_id
                )));
            }
            if let Some(s) = &l.act_stats {
                s.validate()?;
            }
        }
        Ok(())
    }

    pub fn layer(&self, id: &str) -> Option<&LayerSpec> {
        self.layers.iter().find(|l| l.layer_id == id)
    }

    /// Rejects assignments naming unknown layers.
    pub fn check_assignment(&self, a: &Assignment) -> Result<()> {
        for (id, _) in a.iter() {
            if self.layer(id).is_none() {
                return Err(TasdError::Schema(format!(
                    "assignment names unknown layer {id}"
                )));
            }
        }
        Ok(())
    }
}

/// Loads a manifest and every matrix it references.
pub fn load_workload(manifest_path: impl AsRef<Path>) -> Result<Workload> {
    let path = manifest_path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| TasdError::io(path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| TasdError::Schema(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let mut layers = Vec::with_capacity(manifest.layers.len());
    for entry in manifest.layers {
        let mut layer = LayerSpec::new(entry.id, entry.m, entry.n, entry.k);
        if let Some(w) = entry.weight {
            let full = base.join(&w);
            layer = layer.with_weight(load_matrix(&full)?)?;
            layer.weight_path = Some(full);
        }
        if let Some(dir) = entry.calibration_dir {
            layer = layer.with_calibration(load_dir(&base.join(dir))?)?;
        }
        layer.weights_sparse = entry.weights_sparse;
        layer.acts_sparse = entry.acts_sparse;
        layer.act_stats = entry.act_stats.map(|s| LayerStats {
            layer_id: layer.layer_id.clone(),
            act_sparsity_mean: Some(s.mean),
            act_sparsity_p99: Some(s.p99),
            ..Default::default()
        });
        layers.push(layer);
    }
    Workload::new(manifest.name, manifest.baseline_quality, layers)
}

/// Every regular file in `dir`, loaded in file-name order.
fn load_dir(dir: &Path) -> Result<Vec<DenseMatrix>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| TasdError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    files.sort();
    files.iter().map(load_matrix).collect()
}

/// `sum(m * n * k * coverage)` over layers, unassigned layers counting dense.
pub fn total_macs(workload: &Workload, assignment: &Assignment) -> u64 {
    workload
        .layers
        .iter()
        .map(|l| match assignment.get(&l.layer_id) {
            Some(c) => (l.macs() as f64 * c.coverage()).round() as u64,
            None => l.macs(),
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::save_matrix;
    use crate::synth::{random_sparse, ValueDist};

    #[test]
    fn total_macs_examples() {
        let w = Workload::new("t", 1.0, vec![LayerSpec::new("L1", 784, 128, 1152)]).unwrap();
        let dense = total_macs(&w, &Assignment::default());
        assert_eq!(dense, 115_605_504);
        let mut a = Assignment::default();
        a.set("L1", "4:8+1:8".parse().unwrap());
        assert_eq!(total_macs(&w, &a) as f64 / dense as f64, 0.625);
    }

    #[test]
    fn schema_errors() {
        assert!(matches!(
            Workload::new("t", 1.0, vec![]),
            Err(TasdError::Schema(_))
        ));
        let dup = vec![LayerSpec::new("a", 1, 1, 1), LayerSpec::new("a", 1, 1, 1)];
        assert!(matches!(
            Workload::new("t", 1.0, dup),
            Err(TasdError::Schema(_))
        ));
    }

    #[test]
    fn loads_manifest_with_weights_and_calibration() {
        let dir = tempfile::tempdir().unwrap();
        let w = random_sparse(16, 32, 0.1, ValueDist::NormalThird, 1).unwrap();
        save_matrix(&w, dir.path().join("w.tasd")).unwrap();
        fs::create_dir(dir.path().join("cal")).unwrap();
        for i in 0..3 {
            let x = random_sparse(32, 4, 0.5, ValueDist::Uniform01, 10 + i).unwrap();
            save_matrix(&x, dir.path().join(format!("cal/{i}.tasd"))).unwrap();
        }
        let manifest = r#"{"name":"toy","baseline_quality":0.76,"layers":[
            {"id":"L1","m":16,"n":4,"k":32,"weight":"w.tasd","weights_sparse":true,
             "acts_sparse":true,"calibration_dir":"cal"},
            {"id":"L2","m":8,"n":8,"k":8,"act_stats":{"mean":0.4,"p99":0.5}}]}"#;
        fs::write(dir.path().join("m.json"), manifest).unwrap();
        let wl = load_workload(dir.path().join("m.json")).unwrap();
        assert_eq!(wl.layers.len(), 2);
        assert_eq!(wl.layers[0].weight.as_ref().unwrap(), &w);
        assert_eq!(wl.layers[0].calibration.len(), 3);
        assert_eq!(
            wl.layers[1].activation_stats().unwrap().act_sparsity_p99,
            Some(0.5)
        );

        let bad = manifest.replace(r#""m":16"#, r#""m":17"#);
        fs::write(dir.path().join("bad.json"), bad).unwrap();
        assert!(matches!(
            load_workload(dir.path().join("bad.json")),
            Err(TasdError::DimensionMismatch(_))
        ));
        fs::write(
            dir.path().join("empty.json"),
            r#"{"name":"e","baseline_quality":1,"layers":[]}"#,
        )
        .unwrap();
        assert!(matches!(
            load_workload(dir.path().join("empty.json")),
            Err(TasdError::Schema(_))
        ));
        assert!(matches!(
            load_workload(dir.path().join("nope.json")),
            Err(TasdError::Io { .. })
        ));
    }
}
