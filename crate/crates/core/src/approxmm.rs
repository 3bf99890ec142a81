//! Matrix multiplication over TASD terms and the relative-error analysis.
//!
//! All products accumulate each output element in ascending `k` order, and
//! term products are summed in ascending term order, so results are
//! reproducible bit-for-bit across execution strategies.

use std::io::Write;

use crate::decomp::{decompose, Decomposition};
use crate::error::{Result, TasdError};
use crate::exec::Execution;
use crate::matrix::{DenseMatrix, NmCompressed, NmPattern, TasdConfig};
use crate::synth::{derive_seed, random_sparse, ValueDist};

fn check_inner(a_cols: usize, b: &DenseMatrix) -> Result<()> {
    if a_cols != b.rows() {
        return Err(TasdError::DimensionMismatch(format!(
            "inner dimensions {a_cols} vs {}",
            b.rows()
        )));
    }
    Ok(())
}

/// Reference product `a * b`.
pub fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix> {
    matmul_with(a, b, Execution::default())
}

pub fn matmul_with(a: &DenseMatrix, b: &DenseMatrix, exec: Execution) -> Result<DenseMatrix> {
    check_inner(a.cols(), b)?;
    let n = b.cols();
    let mut out = vec![0.0; a.rows() * n];
    exec.for_each_chunk_mut(&mut out, n, |i, c_row| {
        for (k, &aik) in a.row(i).iter().enumerate() {
            // a zero operand adds +0.0 to every element: skipping is exact
            if aik == 0.0 {
                continue;
            }
            for (c, &bkj) in c_row.iter_mut().zip(b.row(k)) {
                *c += aik * bkj;
            }
        }
    });
    Ok(DenseMatrix::from_parts(a.rows(), n, out))
}

/// Product of one structured term with a dense matrix, plus the number of
/// multiply-accumulates performed (`valid slots * b.cols`).
pub fn spmm_term(term: &NmCompressed, b: &DenseMatrix) -> Result<(DenseMatrix, u64)> {
    spmm_term_with(term, b, Execution::default())
}

pub fn spmm_term_with(
    term: &NmCompressed,
    b: &DenseMatrix,
    exec: Execution,
) -> Result<(DenseMatrix, u64)> {
    check_inner(term.cols(), b)?;
    let n = b.cols();
    let mut out = vec![0.0; term.rows() * n];
    let pattern = term.pattern();
    let slots_per_row = term.blocks_per_row() * pattern.n();
    exec.for_each_chunk_mut(&mut out, n, |r, c_row| {
        let base = r * slots_per_row;
        let idx = &term.indices()[base..base + slots_per_row];
        let val = &term.values()[base..base + slots_per_row];
        for (slot, (&i, &v)) in idx.iter().zip(val).enumerate() {
            if i == crate::matrix::INVALID_INDEX {
                continue;
            }
            let k = (slot / pattern.n()) * pattern.m() + i as usize;
            for (c, &bkj) in c_row.iter_mut().zip(b.row(k)) {
                *c += v * bkj;
            }
        }
    });
    let macs = term.valid_slots() as u64 * n as u64;
    Ok((DenseMatrix::from_parts(term.rows(), n, out), macs))
}

/// `sum_i term_i * b` by distributivity, with the total MAC count.
pub fn tasd_matmul(d: &Decomposition, b: &DenseMatrix) -> Result<(DenseMatrix, u64)> {
    tasd_matmul_with(d, b, Execution::default())
}

pub fn tasd_matmul_with(
    d: &Decomposition,
    b: &DenseMatrix,
    exec: Execution,
) -> Result<(DenseMatrix, u64)> {
    let (rows, cols) = d.source_dims();
    check_inner(cols, b)?;
    let mut acc = DenseMatrix::zeros(rows, b.cols());
    let mut macs = 0;
    for term in d.terms() {
        let (partial, m) = spmm_term_with(term, b, exec)?;
        acc = acc.add(&partial)?;
        macs += m;
    }
    Ok((acc, macs))
}

/// `||(A - A*) B||_F / ||A B||_F` where `A*` is the series approximation.
pub fn relative_error(a: &DenseMatrix, config: &TasdConfig, b: &DenseMatrix) -> Result<f64> {
    let reference = matmul(a, b)?;
    relative_error_against(&decompose(a, config), b, reference.frobenius_norm())
}

fn relative_error_against(d: &Decomposition, b: &DenseMatrix, reference_norm: f64) -> Result<f64> {
    if reference_norm == 0.0 {
        return Err(TasdError::DegenerateProduct);
    }
    Ok(matmul(d.residual(), b)?.frobenius_norm() / reference_norm)
}

/// Grid for [`error_sweep`].
#[derive(Debug, Clone)]
pub struct ErrorSweep {
    pub dim: usize,
    pub a_sparsities: Vec<f64>,
    pub configs: Vec<TasdConfig>,
    pub seeds: usize,
    pub master_seed: u64,
}

impl ErrorSweep {
    /// 256x256 uniform operands, A at 20% and 80% sparsity, single-term
    /// `1..=4:4` and `1..=8:8` configurations.
    pub fn matmul_error_grid(seeds: usize, master_seed: u64) -> Self {
        let configs = [4usize, 8]
            .into_iter()
            .flat_map(|m| {
                (1..=m).map(move |n| TasdConfig::single(NmPattern::new(n, m).expect("n <= m")))
            })
            .collect();
        Self {
            dim: 256,
            a_sparsities: vec![0.2, 0.8],
            configs,
            seeds,
            master_seed,
        }
    }
}

/// Aggregated relative error of one `(a_sparsity, config)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRow {
    pub a_sparsity: f64,
    pub config: TasdConfig,
    pub approx_sparsity: f64,
    pub mean_rel_error: f64,
    pub std_rel_error: f64,
    pub seeds: usize,
}

/// Rows are ordered by (a_sparsity, config). For replicate `s` of sparsity
/// index `i`, A uses `derive_seed(master, 2j)` and B `derive_seed(master,
/// 2j + 1)` with `j = i * seeds + s`; the same pair is shared by every config.
pub fn error_sweep(grid: &ErrorSweep, exec: Execution) -> Result<Vec<ErrorRow>> {
    let n_seeds = grid.seeds;
    let units = grid.a_sparsities.len() * n_seeds;
    let dim = grid.dim;
    // errors[unit][config]
    let errors = exec.try_map_indexed(units, |j| -> Result<Vec<f64>> {
        let sparsity = grid.a_sparsities[j / n_seeds];
        let a = random_sparse(
            dim,
            dim,
            1.0 - sparsity,
            ValueDist::Uniform01,
            derive_seed(grid.master_seed, 2 * j as u64),
        )?;
        let b = random_sparse(
            dim,
            dim,
            1.0,
            ValueDist::Uniform01,
            derive_seed(grid.master_seed, 2 * j as u64 + 1),
        )?;
        let reference = matmul_with(&a, &b, Execution::Sequential)?.frobenius_norm();
        grid.configs
            .iter()
            .map(|c| {
                let d = decompose(&a, c);
                if reference == 0.0 {
                    return Err(TasdError::DegenerateProduct);
                }
                Ok(
                    matmul_with(d.residual(), &b, Execution::Sequential)?.frobenius_norm()
                        / reference,
                )
            })
            .collect()
    })?;
    let mut rows = Vec::new();
    for (si, &a_sparsity) in grid.a_sparsities.iter().enumerate() {
        let unit_rows = &errors[si * n_seeds..(si + 1) * n_seeds];
        for (ci, config) in grid.configs.iter().enumerate() {
            let samples: Vec<f64> = unit_rows.iter().map(|e| e[ci]).collect();
            let (mean, std) = mean_std(&samples);
            rows.push(ErrorRow {
                a_sparsity,
                config: config.clone(),
                approx_sparsity: config.approximated_sparsity(),
                mean_rel_error: mean,
                std_rel_error: std,
                seeds: n_seeds,
            });
        }
    }
    Ok(rows)
}

/// Mean and sample standard deviation (0 for fewer than two samples).
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

pub const ERROR_CSV_HEADER: [&str; 6] = [
    "a_sparsity",
    "config",
    "approx_sparsity",
    "mean_rel_error",
    "std_rel_error",
    "seeds",
];

pub fn write_error_csv(rows: &[ErrorRow], w: impl Write) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let csv_err = |e: csv::Error| TasdError::Csv(e.to_string());
    out.write_record(ERROR_CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        out.write_record([
            r.a_sparsity.to_string(),
            r.config.canonical(),
            r.approx_sparsity.to_string(),
            r.mean_rel_error.to_string(),
            r.std_rel_error.to_string(),
            r.seeds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush().map_err(|e| TasdError::Csv(e.to_string()))
}
