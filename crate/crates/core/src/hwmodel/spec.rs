use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TasdError};
use crate::search::PatternMenu;

/// Energy per element access, in picojoules. `tasd_unit` is charged per
/// element scanned by a decomposition unit and defaults to `rf_access`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyTable {
    pub mac: f64,
    pub rf_access: f64,
    pub l1_access: f64,
    pub l2_access: f64,
    pub dram_access: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tasd_unit: Option<f64>,
}

impl EnergyTable {
    pub fn tasd_unit(&self) -> f64 {
        self.tasd_unit.unwrap_or(self.rf_access)
    }

    /// Illustrative relative costs (RF 1x, L1 2x, L2 6x, DRAM 200x a MAC),
    /// suitable for ratios only.
    pub fn illustrative() -> Self {
        Self {
            mac: 1.0,
            rf_access: 1.0,
            l1_access: 2.0,
            l2_access: 6.0,
            dram_access: 200.0,
            tasd_unit: Some(0.5),
        }
    }
}

/// A structured-sparse accelerator built from `ttc_count` tensor cores, each a
/// `pe_rows x pe_cols` PE array with `tasd_units_per_ttc` decomposition units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HwSpec {
    pub m: usize,
    pub base_patterns: BTreeSet<usize>,
    pub max_terms: usize,
    pub ttc_count: usize,
    pub pe_rows: usize,
    pub pe_cols: usize,
    pub tasd_units_per_ttc: usize,
    pub blocks_out_per_cycle: usize,
    pub rf_bytes: usize,
    pub l1_bytes: usize,
    pub l2_bytes: usize,
    pub elem_bytes: usize,
    pub energy_pj: EnergyTable,
}

impl HwSpec {
    /// Four M=8 cores supporting 1:8, 2:8 and 4:8 with two-term series.
    pub fn vegeta_m8() -> Self {
        Self {
            m: 8,
            base_patterns: [1, 2, 4].into_iter().collect(),
            max_terms: 2,
            ttc_count: 4,
            pe_rows: 16,
            pe_cols: 16,
            tasd_units_per_ttc: 16,
            blocks_out_per_cycle: 2,
            rf_bytes: 64,
            l1_bytes: 256 * 1024,
            l2_bytes: 2 * 1024 * 1024,
            elem_bytes: 2,
            energy_pj: EnergyTable::illustrative(),
        }
    }

    /// Four M=4 cores supporting 2:4 only.
    pub fn stc_m4() -> Self {
        Self {
            m: 4,
            base_patterns: [2].into_iter().collect(),
            max_terms: 1,
            tasd_units_per_ttc: 16,
            blocks_out_per_cycle: 4,
            ..Self::vegeta_m8()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("m", self.m),
            ("max_terms", self.max_terms),
            ("ttc_count", self.ttc_count),
            ("pe_rows", self.pe_rows),
            ("pe_cols", self.pe_cols),
            ("tasd_units_per_ttc", self.tasd_units_per_ttc),
            ("blocks_out_per_cycle", self.blocks_out_per_cycle),
            ("rf_bytes", self.rf_bytes),
            ("l1_bytes", self.l1_bytes),
            ("l2_bytes", self.l2_bytes),
            ("elem_bytes", self.elem_bytes),
        ];
        if let Some((name, _)) = dims.iter().find(|(_, v)| *v == 0) {
            return Err(TasdError::Schema(format!(
                "hw spec: {name} must be positive"
            )));
        }
        let e = &self.energy_pj;
        let energies = [
            e.mac,
            e.rf_access,
            e.l1_access,
            e.l2_access,
            e.dram_access,
            e.tasd_unit(),
        ];
        if energies.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(TasdError::Schema(
                "hw spec: energies must be positive".into(),
            ));
        }
        if self.base_patterns.is_empty() {
            return Err(TasdError::Schema("hw spec: base_patterns is empty".into()));
        }
        self.menu().map(|_| ())
    }

    pub fn menu(&self) -> Result<PatternMenu> {
        PatternMenu::new(self.m, self.base_patterns.iter().copied(), self.max_terms)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: HwSpec =
            serde_json::from_str(text).map_err(|e| TasdError::Schema(format!("hw spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| TasdError::io(path, e))?;
        Self::from_json(&text)
    }
}
