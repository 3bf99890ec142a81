use super::pattern::first_violation;
use super::{DenseMatrix, NmPattern};
use crate::error::{Result, TasdError};

/// Index slot marker for padding entries.
pub const INVALID_INDEX: u32 = u32::MAX;

/// A structured sparse term: `n` value/index slots per `m`-block, row-major
/// over blocks. Valid slots come first in each block with strictly increasing
/// intra-block indices; padding slots carry [`INVALID_INDEX`] and value `0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct NmCompressed {
    pattern: NmPattern,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    indices: Vec<u32>,
}

impl NmCompressed {
    /// Assembles a term from raw slot arrays. Slot layout is checked by
    /// [`NmCompressed::decode`], not here.
    pub fn from_raw(
        pattern: NmPattern,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
        indices: Vec<u32>,
    ) -> Result<Self> {
        let slots = rows * pattern.blocks_per_row(cols) * pattern.n();
        if values.len() != slots || indices.len() != slots {
            return Err(TasdError::DimensionMismatch(format!(
                "{rows}x{cols} at {pattern} needs {slots} slots, got {} values / {} indices",
                values.len(),
                indices.len()
            )));
        }
        Ok(Self {
            pattern,
            rows,
            cols,
            values,
            indices,
        })
    }

    /// An all-padding term.
    pub fn empty(pattern: NmPattern, rows: usize, cols: usize) -> Self {
        let slots = rows * pattern.blocks_per_row(cols) * pattern.n();
        Self {
            pattern,
            rows,
            cols,
            values: vec![0.0; slots],
            indices: vec![INVALID_INDEX; slots],
        }
    }

    /// Packs a pattern-compliant matrix.
    pub fn encode(mat: &DenseMatrix, pattern: NmPattern) -> Result<Self> {
        if let Some((row, block)) = first_violation(mat, pattern) {
            return Err(TasdError::NotCompliant {
                pattern: pattern.to_string(),
                row,
                block,
            });
        }
        let mut out = Self::empty(pattern, mat.rows(), mat.cols());
        let n = pattern.n();
        let bpr = out.blocks_per_row();
        for r in 0..mat.rows() {
            for (b, block) in mat.row(r).chunks(pattern.m()).enumerate() {
                let base = (r * bpr + b) * n;
                let kept = block.iter().enumerate().filter(|(_, &v)| v != 0.0);
                for (slot, (i, &v)) in kept.enumerate() {
                    out.values[base + slot] = v;
                    out.indices[base + slot] = i as u32;
                }
            }
        }
        Ok(out)
    }

    /// Expands back to dense, validating slot layout.
    pub fn decode(&self) -> Result<DenseMatrix> {
        let m = self.pattern.m();
        let mut data = vec![0.0; self.rows * self.cols];
        for (r, row) in data
            .chunks_mut(self.cols.max(1))
            .enumerate()
            .take(self.rows)
        {
            for b in 0..self.blocks_per_row() {
                let width = (self.cols - b * m).min(m);
                let mut last: Option<u32> = None;
                let mut padding = false;
                for (idx, val) in self.block_slots(r, b) {
                    if idx == INVALID_INDEX {
                        if val != 0.0 {
                            return Err(TasdError::CorruptIndices(format!(
                                "padding slot carries value {val} (row {r}, block {b})"
                            )));
                        }
                        padding = true;
                        continue;
                    }
                    if padding {
                        return Err(TasdError::CorruptIndices(format!(
                            "valid slot after padding (row {r}, block {b})"
                        )));
                    }
                    if idx as usize >= width {
                        return Err(TasdError::CorruptIndices(format!(
                            "index {idx} outside block of width {width} (row {r}, block {b})"
                        )));
                    }
                    if last.is_some_and(|l| idx <= l) {
                        return Err(TasdError::CorruptIndices(format!(
                            "indices not strictly increasing (row {r}, block {b})"
                        )));
                    }
                    last = Some(idx);
                    row[b * m + idx as usize] = val;
                }
            }
        }
        DenseMatrix::new(self.rows, self.cols, data)
    }

    fn block_slots(&self, r: usize, b: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let n = self.pattern.n();
        let base = (r * self.blocks_per_row() + b) * n;
        self.indices[base..base + n]
            .iter()
            .copied()
            .zip(self.values[base..base + n].iter().copied())
    }

    /// Valid `(row, col, value)` triples in row-major order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let n = self.pattern.n();
        let m = self.pattern.m();
        let bpr = self.blocks_per_row();
        self.indices
            .iter()
            .zip(&self.values)
            .enumerate()
            .filter(|(_, (&i, _))| i != INVALID_INDEX)
            .map(move |(slot, (&i, &v))| {
                let block = slot / n;
                (block / bpr, (block % bpr) * m + i as usize, v)
            })
    }

    pub fn pattern(&self) -> NmPattern {
        self.pattern
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn blocks_per_row(&self) -> usize {
        self.pattern.blocks_per_row(self.cols)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    /// Number of valid slots.
    pub fn valid_slots(&self) -> usize {
        self.indices.iter().filter(|&&i| i != INVALID_INDEX).count()
    }

    pub(crate) fn slot_mut(&mut self, slot: usize) -> (&mut f64, &mut u32) {
        (&mut self.values[slot], &mut self.indices[slot])
    }
}
