//! Greedy structured decomposition and approximation-quality metrics.
//!
//! Each term keeps, per `m`-block of each row, the (up to) `n` non-zeros of
//! largest absolute value from the running residual; ties go to the lowest
//! column index. Extraction only relocates entries, so the terms and the
//! residual always sum back to the source bit-exactly.

use std::io::Write;

use crate::error::{Result, TasdError};
use crate::exec::Execution;
use crate::matrix::{DenseMatrix, NmCompressed, NmPattern, TasdConfig};
use crate::synth::{derive_seed, random_sparse, ValueDist};

/// A source matrix split into structured terms plus a residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    source_dims: (usize, usize),
    config: TasdConfig,
    terms: Vec<NmCompressed>,
    residual: DenseMatrix,
    source_nnz: usize,
    source_abs_sum: f64,
}

impl Decomposition {
    pub fn source_dims(&self) -> (usize, usize) {
        self.source_dims
    }

    pub fn config(&self) -> &TasdConfig {
        &self.config
    }

    pub fn terms(&self) -> &[NmCompressed] {
        &self.terms
    }

    pub fn residual(&self) -> &DenseMatrix {
        &self.residual
    }

    /// Sum of the decoded terms, i.e. the approximated matrix.
    pub fn approximation(&self) -> DenseMatrix {
        let (rows, cols) = self.source_dims;
        let mut data = vec![0.0; rows * cols];
        for term in &self.terms {
            for (r, c, v) in term.entries() {
                // supports are disjoint, so this is a placement, not a sum
                data[r * cols + c] += v;
            }
        }
        DenseMatrix::from_parts(rows, cols, data)
    }

    pub fn metrics(&self) -> DropMetrics {
        drop_metrics(self)
    }
}

/// Moves the top-`n` magnitudes of every block into a term and returns
/// `(term, residual)`.
pub fn extract_term(mat: &DenseMatrix, pattern: NmPattern) -> (NmCompressed, DenseMatrix) {
    let (rows, cols) = mat.dims();
    let n = pattern.n();
    let m = pattern.m();
    let mut term = NmCompressed::empty(pattern, rows, cols);
    let mut residual = mat.data().to_vec();
    let bpr = term.blocks_per_row();
    let mut candidates: Vec<usize> = Vec::with_capacity(m);
    for r in 0..rows {
        let row = &mut residual[r * cols..(r + 1) * cols];
        for (b, block) in row.chunks_mut(m).enumerate() {
            candidates.clear();
            candidates.extend((0..block.len()).filter(|&i| block[i] != 0.0));
            let cap = pattern.capacity(block.len());
            if candidates.len() > cap {
                // stable sort: equal magnitudes keep ascending index order
                candidates.sort_by(|&a, &b| block[b].abs().total_cmp(&block[a].abs()));
                candidates.truncate(cap);
                candidates.sort_unstable();
            }
            let base = (r * bpr + b) * n;
            for (slot, &i) in candidates.iter().enumerate() {
                let (v, idx) = term.slot_mut(base + slot);
                *v = block[i];
                *idx = i as u32;
                block[i] = 0.0;
            }
        }
    }
    (term, DenseMatrix::from_parts(rows, cols, residual))
}

/// Applies the series left to right, each term extracting from the previous
/// residual.
pub fn decompose(mat: &DenseMatrix, config: &TasdConfig) -> Decomposition {
    let mut residual = mat.clone();
    let mut terms = Vec::with_capacity(config.terms().len());
    for &pattern in config.terms() {
        let (term, rest) = extract_term(&residual, pattern);
        terms.push(term);
        residual = rest;
    }
    Decomposition {
        source_dims: mat.dims(),
        config: config.clone(),
        terms,
        residual,
        source_nnz: mat.nnz(),
        source_abs_sum: mat.abs_sum(),
    }
}

/// `sum(decode(term_i))`, equal to `mat - residual`.
pub fn approximate(mat: &DenseMatrix, config: &TasdConfig) -> DenseMatrix {
    decompose(mat, config).approximation()
}

/// How much of the source a decomposition leaves in its residual.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropMetrics {
    pub dropped_nnz_fraction: f64,
    pub dropped_magnitude_fraction: f64,
    pub mse: f64,
    pub retained_magnitude_fraction: f64,
}

pub fn drop_metrics(d: &Decomposition) -> DropMetrics {
    let res = &d.residual;
    let dropped_nnz_fraction = if d.source_nnz == 0 {
        0.0
    } else {
        res.nnz() as f64 / d.source_nnz as f64
    };
    let dropped_magnitude_fraction = if d.source_abs_sum == 0.0 {
        0.0
    } else {
        res.abs_sum() / d.source_abs_sum
    };
    let mse = if res.is_empty() {
        0.0
    } else {
        res.data().iter().map(|v| v * v).sum::<f64>() / res.len() as f64
    };
    DropMetrics {
        dropped_nnz_fraction,
        dropped_magnitude_fraction,
        mse,
        retained_magnitude_fraction: 1.0 - dropped_magnitude_fraction,
    }
}

/// Grid for [`sweep_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticSweep {
    pub rows: usize,
    pub cols: usize,
    pub densities: Vec<f64>,
    pub distributions: Vec<ValueDist>,
    pub configs: Vec<TasdConfig>,
    pub seeds: usize,
    pub master_seed: u64,
}

impl SyntheticSweep {
    /// 128x128, densities 0.10..0.75, both distributions, the three series
    /// `2:4`, `2:4+2:8`, `2:4+2:8+2:16`.
    pub fn dropped_nonzeros_grid(seeds: usize, master_seed: u64) -> Self {
        let configs = ["2:4", "2:4+2:8", "2:4+2:8+2:16"]
            .iter()
            .map(|s| s.parse().expect("static config"))
            .collect();
        Self {
            rows: 128,
            cols: 128,
            densities: vec![0.10, 0.20, 0.30, 0.40, 0.50, 0.60, 0.75],
            distributions: ValueDist::ALL.to_vec(),
            configs,
            seeds,
            master_seed,
        }
    }

    pub fn cells(&self) -> usize {
        self.densities.len() * self.distributions.len() * self.configs.len() * self.seeds
    }
}

/// One `(density, distribution, config, seed)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub density: f64,
    pub distribution: ValueDist,
    pub config: TasdConfig,
    pub seed: usize,
    pub metrics: DropMetrics,
}

/// Runs the synthetic drop sweep. Rows are ordered by (density, distribution,
/// config, seed). The matrix for a given (density, distribution, seed) is the
/// same for every config, generated from `derive_seed(master, matrix_index)`.
pub fn sweep_synthetic(grid: &SyntheticSweep, exec: Execution) -> Result<Vec<SweepRow>> {
    if let Some(d) = grid.densities.iter().find(|&&d| !(d > 0.0 && d <= 1.0)) {
        return Err(TasdError::InvalidConfig(format!(
            "density {d} outside (0, 1]"
        )));
    }
    let n_dist = grid.distributions.len();
    let n_cfg = grid.configs.len();
    let n_seeds = grid.seeds;
    let matrices = n_dist * grid.densities.len() * n_seeds;
    let per_matrix = exec.try_map_indexed(matrices, |mi| -> Result<Vec<SweepRow>> {
        let seed = mi % n_seeds;
        let dist_idx = (mi / n_seeds) % n_dist;
        let density = grid.densities[mi / (n_seeds * n_dist)];
        let distribution = grid.distributions[dist_idx];
        let mat = random_sparse(
            grid.rows,
            grid.cols,
            density,
            distribution,
            derive_seed(grid.master_seed, mi as u64),
        )?;
        Ok(grid
            .configs
            .iter()
            .map(|config| SweepRow {
                density,
                distribution,
                config: config.clone(),
                seed,
                metrics: drop_metrics(&decompose(&mat, config)),
            })
            .collect())
    })?;
    // regroup from (density, dist, seed, config) to (density, dist, config, seed)
    let mut rows = Vec::with_capacity(grid.cells());
    for group in per_matrix.chunks(n_seeds.max(1)) {
        for c in 0..n_cfg {
            rows.extend(group.iter().map(|cells| cells[c].clone()));
        }
    }
    Ok(rows)
}

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "density",
    "distribution",
    "config",
    "seed",
    "dropped_nnz",
    "dropped_mag",
    "mse",
];

pub fn write_sweep_csv(rows: &[SweepRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| TasdError::Csv(e.to_string());
    out.write_record(SWEEP_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.density.to_string(),
            r.distribution.to_string(),
            r.config.canonical(),
            r.seed.to_string(),
            r.metrics.dropped_nnz_fraction.to_string(),
            r.metrics.dropped_magnitude_fraction.to_string(),
            r.metrics.mse.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| TasdError::Csv(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &[f64]) -> DenseMatrix {
        DenseMatrix::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn cfg(s: &str) -> TasdConfig {
        s.parse().unwrap()
    }

    /// Per-block top-k by brute force: score every k-subset of non-zeros.
    fn oracle_extract(values: &[f64], n: usize, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; values.len()];
        for (b, block) in values.chunks(m).enumerate() {
            let nz: Vec<usize> = (0..block.len()).filter(|&i| block[i] != 0.0).collect();
            let k = n.min(block.len()).min(nz.len());
            let mut best: Option<(f64, Vec<usize>)> = None;
            for mask in 0u32..(1 << nz.len()) {
                if mask.count_ones() as usize != k {
                    continue;
                }
                let pick: Vec<usize> = (0..nz.len())
                    .filter(|j| mask >> j & 1 == 1)
                    .map(|j| nz[j])
                    .collect();
                let score: f64 = pick.iter().map(|&i| block[i].abs()).sum();
                let better = match &best {
                    None => true,
                    Some((s, p)) => score > *s || (score == *s && pick < *p),
                };
                if better {
                    best = Some((score, pick));
                }
            }
            for i in best.map(|b| b.1).unwrap_or_default() {
                out[b * m + i] = block[i];
            }
        }
        out
    }

    #[test]
    fn extracts_two_largest() {
        let (t, r) = extract_term(&row(&[4.0, 3.0, 2.0, 1.0]), NmPattern::new(2, 4).unwrap());
        assert_eq!(t.decode().unwrap().data(), &[4.0, 3.0, 0.0, 0.0]);
        assert_eq!(r.data(), &[0.0, 0.0, 2.0, 1.0]);
        assert_eq!(
            oracle_extract(&[4.0, 3.0, 2.0, 1.0], 2, 4),
            vec![4.0, 3.0, 0.0, 0.0]
        );
    }

    #[test]
    fn compliant_block_is_moved_whole() {
        let (t, r) = extract_term(&row(&[5.0, 0.0, 3.0, 0.0]), NmPattern::new(2, 4).unwrap());
        assert_eq!(t.decode().unwrap().data(), &[5.0, 0.0, 3.0, 0.0]);
        assert_eq!(r, DenseMatrix::zeros(1, 4));
    }

    #[test]
    fn magnitude_is_absolute_value() {
        let src = [-9.0, 1.0, 2.0, 3.0];
        let (t, r) = extract_term(&row(&src), NmPattern::new(1, 4).unwrap());
        assert_eq!(
            t.decode().unwrap().data(),
            oracle_extract(&src, 1, 4).as_slice()
        );
        assert_eq!(t.decode().unwrap().data(), &[-9.0, 0.0, 0.0, 0.0]);
        assert_eq!(r.data(), &[0.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn ties_keep_lowest_index() {
        let (t, _) = extract_term(&row(&[1.0, -2.0, 2.0, 2.0]), NmPattern::new(2, 4).unwrap());
        assert_eq!(t.decode().unwrap().data(), &[0.0, -2.0, 2.0, 0.0]);
    }

    #[test]
    fn matches_subset_oracle_on_random_rows() {
        let m = random_sparse(32, 24, 0.7, ValueDist::NormalThird, 11).unwrap();
        for (n, mm) in [(1, 4), (2, 4), (3, 8), (2, 8), (4, 8)] {
            let (t, _) = extract_term(&m, NmPattern::new(n, mm).unwrap());
            let got = t.decode().unwrap();
            for r in 0..m.rows() {
                assert_eq!(got.row(r), oracle_extract(m.row(r), n, mm).as_slice());
            }
        }
    }

    #[test]
    fn figure_example_is_lossless() {
        // 2x8 with at most 4 non-zeros per 8-block: 2:4 then 2:8 captures all
        let a = DenseMatrix::new(
            2,
            8,
            vec![
                0.9, 0.0, 0.3, 0.7, 0.0, 0.2, 0.0, 0.0, //
                0.0, 0.5, 0.0, 0.0, 0.4, 0.8, 0.1, 0.6,
            ],
        )
        .unwrap();
        let d = decompose(&a, &cfg("2:4+2:8"));
        assert_eq!(d.residual(), &DenseMatrix::zeros(2, 8));
        assert_eq!(d.approximation(), a);
    }

    #[test]
    fn zero_matrix() {
        let d = decompose(&DenseMatrix::zeros(4, 8), &cfg("2:4+2:8"));
        assert!(d.terms().iter().all(|t| t.valid_slots() == 0));
        let m = d.metrics();
        assert_eq!(m.dropped_nnz_fraction, 0.0);
        assert_eq!(m.dropped_magnitude_fraction, 0.0);
        assert_eq!(m.mse, 0.0);
    }

    #[test]
    fn full_capacity_series_is_lossless() {
        for seed in 0..20 {
            let a = random_sparse(8, 8, 1.0, ValueDist::NormalThird, seed).unwrap();
            let d = decompose(&a, &cfg("4:8+3:8+1:8"));
            assert_eq!(d.residual(), &DenseMatrix::zeros(8, 8));
        }
    }

    #[test]
    fn approximate_examples() {
        let a = row(&[4.0, 3.0, 2.0, 1.0]);
        assert_eq!(approximate(&a, &cfg("2:4")).data(), &[4.0, 3.0, 0.0, 0.0]);
        assert_eq!(approximate(&a, &cfg("2:4+2:4")), a);
        let c = row(&[5.0, 0.0, 3.0, 0.0]);
        assert_eq!(approximate(&c, &cfg("2:4")), c);
    }

    #[test]
    fn drop_metrics_example() {
        let d = decompose(&row(&[4.0, 3.0, 2.0, 1.0]), &cfg("2:4"));
        let m = d.metrics();
        assert_eq!(m.dropped_nnz_fraction, 0.5);
        assert!((m.dropped_magnitude_fraction - 0.3).abs() < 1e-15);
        assert!((m.retained_magnitude_fraction - 0.7).abs() < 1e-15);
        assert_eq!(m.mse, (4.0 + 1.0) / 4.0);
    }

    #[test]
    fn sweep_layout_and_full_density() {
        let grid = SyntheticSweep {
            rows: 16,
            cols: 16,
            densities: vec![0.5, 1.0],
            distributions: ValueDist::ALL.to_vec(),
            configs: vec![cfg("2:4"), cfg("2:4+2:8")],
            seeds: 3,
            master_seed: 1,
        };
        let rows = sweep_synthetic(&grid, Execution::default()).unwrap();
        assert_eq!(rows.len(), grid.cells());
        assert_eq!(rows[0].seed, 0);
        assert_eq!(rows[1].seed, 1);
        assert_eq!(rows[3].config, cfg("2:4+2:8"));
        for r in rows
            .iter()
            .filter(|r| r.density == 1.0 && r.config == cfg("2:4"))
        {
            assert_eq!(r.metrics.dropped_nnz_fraction, 0.5);
        }
        let seq = sweep_synthetic(&grid, Execution::Sequential).unwrap();
        assert_eq!(rows, seq);
        assert!(sweep_synthetic(
            &SyntheticSweep {
                densities: vec![0.0],
                ..grid
            },
            Execution::Sequential
        )
        .is_err());
    }
}
