//! Analytical latency/energy model of a structured-sparse tensor-core
//! accelerator executing decomposed GEMMs `C[M x N] = A[M x K] * B[K x N]`,
//! where `A` is the decomposed operand.
//!
//! Dataflow: a B tile stays in L2 and a C tile in L1 while each term of the
//! series makes its own pass over A; every A element is held stationary in a
//! PE register file for the MACs that use it. Accounting, per term `i` with
//! `kept_k = ceil(K * n_i / m)`:
//!
//! * compute cycles: `ceil(M / (pe_rows * ttc_count)) * ceil(N / pe_cols) * kept_k`
//! * A: `M * kept_k` elements plus metadata (`ceil(n_i * ceil(log2 m) / 8)`
//!   bytes per block), moved DRAM -> L2 -> RF once per N-tile pass
//! * B: fetched from DRAM into L2 once; `kept_k * N` elements streamed from L2
//!   per M-tile pass
//! * C: written to L1 once, plus one read and one write per extra term; written
//!   to DRAM once
//! * RF: one A read per MAC
//! * decomposition units (runtime decomposition only): `sum(n)` element scans
//!   per `m`-block of A
//!
//! N-tile width is the largest multiple of `pe_cols` (capped at `N` rounded up
//! to `pe_cols`) for which the `K x tile` B tile fits L2 and the
//! `(pe_rows * ttc_count) x tile` C tile fits L1; `pe_cols` if none fits.
//! Decomposition units need `blocks_out_per_cycle * sum(n)` units to keep up
//! (Little's law with a latency of `sum(n)` cycles per block); with fewer, the
//! output stage is throttled and the deficit is charged as stall cycles.
//! Dense execution (no config, or a single `m:m` term) bypasses the
//! decomposition units entirely.

mod spec;

use std::collections::BTreeMap;
use std::io::Write;

pub use spec::{EnergyTable, HwSpec};

use crate::error::{Result, TasdError};
use crate::matrix::TasdConfig;
use crate::search::Assignment;
use crate::workload::Workload;

/// Expressible configurations (dense last), one per reachable coverage.
pub fn expressible(hw: &HwSpec) -> Result<Vec<TasdConfig>> {
    Ok(hw.menu()?.enumerate_configs())
}

/// Cycles a decomposition unit spends on one block: `sum(n)`.
pub fn decomp_latency(config: &TasdConfig) -> Result<u64> {
    config
        .common_m()
        .ok_or_else(|| TasdError::MixedM(config.canonical()))?;
    Ok(config.total_n() as u64)
}

/// Units per core that keep up with the worst case `sum(n) = m`.
pub fn required_tasd_units(hw: &HwSpec) -> u64 {
    (hw.blocks_out_per_cycle * hw.m) as u64
}

/// Units per core needed for a particular series.
pub fn required_tasd_units_for(hw: &HwSpec, config: &TasdConfig) -> Result<u64> {
    Ok(hw.blocks_out_per_cycle as u64 * decomp_latency(config)?)
}

/// Where the decomposition of A happens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DecompositionSite {
    /// In hardware decomposition units as operands are produced.
    #[default]
    Runtime,
    /// Ahead of time (e.g. weights); no unit energy or stalls.
    Offline,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostOptions {
    /// Fraction of MACs whose energy is gated off by zero operands.
    pub input_sparsity_gating: Option<f64>,
    pub site: DecompositionSite,
}

/// GEMM dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gemm {
    pub m: usize,
    pub n: usize,
    pub k: usize,
}

/// Energy per component, in picojoules.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    pub mac: f64,
    pub rf: f64,
    pub l1: f64,
    pub l2: f64,
    pub dram: f64,
    pub tasd_unit: f64,
}

impl EnergyBreakdown {
    pub fn total(&self) -> f64 {
        self.mac + self.rf + self.l1 + self.l2 + self.dram + self.tasd_unit
    }

    fn accumulate(&mut self, o: &EnergyBreakdown) {
        self.mac += o.mac;
        self.rf += o.rf;
        self.l1 += o.l1;
        self.l2 += o.l2;
        self.dram += o.dram;
        self.tasd_unit += o.tasd_unit;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostReport {
    pub cycles: u64,
    pub compute_cycles: u64,
    pub stall_cycles: u64,
    pub mac_count: u64,
    pub energy: EnergyBreakdown,
    pub energy_pj: f64,
    pub edp: f64,
}

impl CostReport {
    fn finish(mut self) -> Self {
        self.cycles = self.compute_cycles + self.stall_cycles;
        self.energy_pj = self.energy.total();
        self.edp = self.energy_pj * self.cycles as f64;
        self
    }

    /// Sums cycles and energy; EDP is recomputed on the totals.
    pub fn aggregate<'a>(reports: impl IntoIterator<Item = &'a CostReport>) -> CostReport {
        let mut acc = CostReport::default();
        for r in reports {
            acc.compute_cycles += r.compute_cycles;
            acc.stall_cycles += r.stall_cycles;
            acc.mac_count += r.mac_count;
            acc.energy.accumulate(&r.energy);
        }
        acc.finish()
    }
}

fn n_tile(hw: &HwSpec, k: usize, n: usize) -> usize {
    let rows = hw.pe_rows * hw.ttc_count;
    let by_l2 = hw.l2_bytes / (k * hw.elem_bytes).max(1);
    let by_l1 = hw.l1_bytes / (rows * hw.elem_bytes);
    let cap = n.div_ceil(hw.pe_cols) * hw.pe_cols;
    let fit = by_l2.min(by_l1) / hw.pe_cols * hw.pe_cols;
    fit.min(cap).max(hw.pe_cols)
}

/// Index bits per kept element.
fn index_bits(m: usize) -> usize {
    if m <= 1 {
        0
    } else {
        (usize::BITS - (m - 1).leading_zeros()) as usize
    }
}

/// Analytical cost of one GEMM under `config` (`None` = dense).
pub fn gemm_cost(
    hw: &HwSpec,
    gemm: Gemm,
    config: Option<&TasdConfig>,
    opts: CostOptions,
) -> Result<CostReport> {
    let config = config.filter(|c| !c.is_dense());
    if let Some(c) = config {
        if c.common_m().is_none() {
            return Err(TasdError::MixedM(c.canonical()));
        }
        if !hw.menu()?.expresses(c) {
            return Err(TasdError::NotExpressible(c.canonical()));
        }
    }
    if gemm.m == 0 || gemm.n == 0 || gemm.k == 0 {
        return Ok(CostReport::default().finish());
    }
    let (m_dim, n_dim, k_dim) = (gemm.m as u64, gemm.n as u64, gemm.k as u64);
    let e = &hw.energy_pj;
    let block_m = hw.m as u64;
    let m_tiles = m_dim.div_ceil((hw.pe_rows * hw.ttc_count) as u64);
    let col_tiles = n_dim.div_ceil(hw.pe_cols as u64);
    let n_tiles = n_dim.div_ceil(n_tile(hw, gemm.k, gemm.n) as u64) as f64;
    let elem_bytes = hw.elem_bytes as f64;

    // (kept_k, metadata bytes per m-block) per pass over A
    let passes: Vec<(u64, u64)> = match config {
        None => vec![(k_dim, 0)],
        Some(c) => c
            .terms()
            .iter()
            .map(|p| {
                let n = p.n() as u64;
                let kept = (k_dim * n).div_ceil(block_m);
                let meta = (n * index_bits(hw.m) as u64).div_ceil(8);
                (kept, meta)
            })
            .collect(),
    };

    let mut report = CostReport::default();
    let mut rf = 0.0;
    let mut l1 = 0.0;
    let mut l2 = 0.0;
    let mut dram = 0.0;
    let blocks = m_dim * k_dim.div_ceil(block_m);
    for &(kept, meta) in &passes {
        report.compute_cycles += m_tiles * col_tiles * kept;
        let macs = m_dim * n_dim * kept;
        report.mac_count += macs;
        let a_elems = (m_dim * kept) as f64 + (blocks * meta) as f64 / elem_bytes;
        let a_traffic = a_elems * n_tiles;
        dram += a_traffic;
        l2 += a_traffic;
        rf += a_traffic + macs as f64;
        l2 += (m_tiles * kept * n_dim) as f64;
    }
    let kn = (k_dim * n_dim) as f64;
    let mn = (m_dim * n_dim) as f64;
    dram += kn + mn;
    l2 += kn;
    l1 += mn + 2.0 * mn * (passes.len() as f64 - 1.0);

    let gating = opts.input_sparsity_gating.unwrap_or(0.0).clamp(0.0, 1.0);
    report.energy.mac = report.mac_count as f64 * (1.0 - gating) * e.mac;
    report.energy.rf = rf * e.rf_access;
    report.energy.l1 = l1 * e.l1_access;
    report.energy.l2 = l2 * e.l2_access;
    report.energy.dram = dram * e.dram_access;

    if let (Some(c), DecompositionSite::Runtime) = (config, opts.site) {
        let total_n = c.total_n() as u64;
        report.energy.tasd_unit = (blocks * total_n) as f64 * e.tasd_unit();
        let needed = hw.blocks_out_per_cycle as u64 * total_n;
        let available = hw.tasd_units_per_ttc as u64;
        if needed > available {
            report.stall_cycles =
                (report.compute_cycles * (needed - available)).div_ceil(available);
        }
    }
    Ok(report.finish())
}

/// Per-layer costs of a workload and their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkloadCost {
    pub layers: Vec<LayerCost>,
    pub total: CostReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCost {
    pub layer_id: String,
    pub config: String,
    pub report: CostReport,
}

/// Costs every layer under `assignment` (unassigned layers run dense).
/// Layers flagged `weights_sparse` are decomposed offline; the rest at
/// runtime. `gating` maps layer ids to the fraction of MAC energy gated off.
pub fn workload_cost(
    hw: &HwSpec,
    workload: &Workload,
    assignment: &Assignment,
    gating: &BTreeMap<String, f64>,
) -> Result<WorkloadCost> {
    workload.check_assignment(assignment)?;
    let layers = workload
        .layers
        .iter()
        .map(|l| {
            let config = assignment.get(&l.layer_id);
            let opts = CostOptions {
                input_sparsity_gating: gating.get(&l.layer_id).copied(),
                site: if l.weights_sparse {
                    DecompositionSite::Offline
                } else {
                    DecompositionSite::Runtime
                },
            };
            let report = gemm_cost(
                hw,
                Gemm {
                    m: l.gemm_m,
                    n: l.gemm_n,
                    k: l.gemm_k,
                },
                config,
                opts,
            )?;
            Ok(LayerCost {
                layer_id: l.layer_id.clone(),
                config: config
                    .filter(|c| !c.is_dense())
                    .map_or_else(|| "dense".to_string(), |c| c.canonical()),
                report,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let total = CostReport::aggregate(layers.iter().map(|l| &l.report));
    Ok(WorkloadCost { layers, total })
}

pub const COST_CSV_HEADER: [&str; 12] = [
    "layer", "config", "cycles", "stalls", "macs", "e_mac", "e_rf", "e_l1", "e_l2", "e_dram",
    "e_tasd", "edp",
];

/// Writes one row per layer followed by a `TOTAL` row.
pub fn write_cost_csv(cost: &WorkloadCost, w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| TasdError::Csv(e.to_string());
    out.write_record(COST_CSV_HEADER).map_err(csv_err)?;
    let total = LayerCost {
        layer_id: "TOTAL".into(),
        config: "-".into(),
        report: cost.total,
    };
    for l in cost.layers.iter().chain(std::iter::once(&total)) {
        let r = &l.report;
        out.write_record([
            l.layer_id.clone(),
            l.config.clone(),
            r.cycles.to_string(),
            r.stall_cycles.to_string(),
            r.mac_count.to_string(),
            r.energy.mac.to_string(),
            r.energy.rf.to_string(),
            r.energy.l1.to_string(),
            r.energy.l2.to_string(),
            r.energy.dram.to_string(),
            r.energy.tasd_unit.to_string(),
            r.edp.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| TasdError::Csv(e.to_string()))
}
