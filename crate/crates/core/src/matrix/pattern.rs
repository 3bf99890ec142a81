use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::DenseMatrix;
use crate::error::{Result, TasdError};

/// An N:M structured-sparsity pattern: at most `n` non-zeros in every block of
/// `m` consecutive elements along a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "[usize; 2]", into = "[usize; 2]")]
pub struct NmPattern {
    n: usize,
    m: usize,
}

impl NmPattern {
    pub fn new(n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 || n > m {
            return Err(TasdError::InvalidPattern { n, m });
        }
        Ok(Self { n, m })
    }

    pub fn dense(m: usize) -> Result<Self> {
        Self::new(m, m)
    }

    pub fn n(self) -> usize {
        self.n
    }

    pub fn m(self) -> usize {
        self.m
    }

    pub fn density(self) -> f64 {
        self.n as f64 / self.m as f64
    }

    pub fn is_dense(self) -> bool {
        self.n == self.m
    }

    /// Non-zero capacity of a block of `width` elements (`width < m` only for
    /// the trailing block of a row).
    pub fn capacity(self, width: usize) -> usize {
        self.n.min(width)
    }

    pub fn blocks_per_row(self, cols: usize) -> usize {
        cols.div_ceil(self.m)
    }
}

impl TryFrom<[usize; 2]> for NmPattern {
    type Error = TasdError;
    fn try_from(v: [usize; 2]) -> Result<Self> {
        NmPattern::new(v[0], v[1])
    }
}

impl From<NmPattern> for [usize; 2] {
    fn from(p: NmPattern) -> Self {
        [p.n, p.m]
    }
}

impl fmt::Display for NmPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.n, self.m)
    }
}

impl FromStr for NmPattern {
    type Err = TasdError;
    fn from_str(s: &str) -> Result<Self> {
        let bad = || TasdError::InvalidConfig(format!("expected N:M, got {s:?}"));
        let (n, m) = s.split_once(':').ok_or_else(bad)?;
        let n = n.parse().map_err(|_| bad())?;
        let m = m.parse().map_err(|_| bad())?;
        NmPattern::new(n, m)
    }
}

/// True iff every `m`-block of every row holds at most `n` non-zeros.
pub fn is_compliant(mat: &DenseMatrix, pattern: NmPattern) -> bool {
    first_violation(mat, pattern).is_none()
}

/// `(row, block)` of the first block exceeding the pattern's capacity.
pub(crate) fn first_violation(mat: &DenseMatrix, pattern: NmPattern) -> Option<(usize, usize)> {
    if pattern.is_dense() {
        return None;
    }
    for r in 0..mat.rows() {
        for (b, block) in mat.row(r).chunks(pattern.m()).enumerate() {
            let nnz = block.iter().filter(|&&v| v != 0.0).count();
            if nnz > pattern.capacity(block.len()) {
                return Some((r, b));
            }
        }
    }
    None
}

/// An ordered, non-empty series of N:M patterns. The optional label is for
/// display only and takes no part in equality.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ConfigRepr", into = "ConfigRepr")]
pub struct TasdConfig {
    terms: Vec<NmPattern>,
    label: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct ConfigRepr {
    terms: Vec<NmPattern>,
    #[serde(default, skip_serializing)]
    label: Option<String>,
}

impl PartialEq for TasdConfig {
    fn eq(&self, other: &Self) -> bool {
        self.terms == other.terms
    }
}

impl Eq for TasdConfig {}

impl std::hash::Hash for TasdConfig {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.terms.hash(state);
    }
}

impl TryFrom<ConfigRepr> for TasdConfig {
    type Error = TasdError;
    fn try_from(r: ConfigRepr) -> Result<Self> {
        let mut c = TasdConfig::new(r.terms)?;
        c.label = r.label;
        Ok(c)
    }
}

impl From<TasdConfig> for ConfigRepr {
    fn from(c: TasdConfig) -> Self {
        ConfigRepr {
            terms: c.terms,
            label: c.label,
        }
    }
}

impl TasdConfig {
    /// Validates a series. Same-`m` series must satisfy `sum(n) <= m`;
    /// mixed-`m` series are accepted here and rejected by the hardware model.
    pub fn new(terms: Vec<NmPattern>) -> Result<Self> {
        if terms.is_empty() {
            return Err(TasdError::InvalidConfig("empty series".into()));
        }
        if let Some(m) = common_m(&terms) {
            let total: usize = terms.iter().map(|p| p.n()).sum();
            if total > m {
                return Err(TasdError::InvalidConfig(format!(
                    "sum of N ({total}) exceeds M ({m})"
                )));
            }
        }
        Ok(Self { terms, label: None })
    }

    pub fn single(pattern: NmPattern) -> Self {
        Self {
            terms: vec![pattern],
            label: None,
        }
    }

    /// The no-drop configuration `m:m`.
    pub fn dense(m: usize) -> Result<Self> {
        Ok(Self::single(NmPattern::dense(m)?))
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn terms(&self) -> &[NmPattern] {
        &self.terms
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    /// The shared block size, if every term uses the same `m`.
    pub fn common_m(&self) -> Option<usize> {
        common_m(&self.terms)
    }

    pub fn total_n(&self) -> usize {
        self.terms.iter().map(|p| p.n()).sum()
    }

    /// `min(1, sum(n_i / m_i))`.
    pub fn coverage(&self) -> f64 {
        match self.common_m() {
            Some(m) => (self.total_n() as f64 / m as f64).min(1.0),
            None => self.terms.iter().map(|p| p.density()).sum::<f64>().min(1.0),
        }
    }

    pub fn approximated_sparsity(&self) -> f64 {
        1.0 - self.coverage()
    }

    /// Whether the series keeps every entry of every input (no-drop).
    pub fn is_lossless(&self) -> bool {
        match self.common_m() {
            Some(m) => self.total_n() == m,
            None => false,
        }
    }

    /// A single `m:m` term: executes as plain dense.
    pub fn is_dense(&self) -> bool {
        self.terms.len() == 1 && self.terms[0].is_dense()
    }

    /// Whitespace-free canonical form, e.g. `4:8+1:8`.
    pub fn canonical(&self) -> String {
        self.terms
            .iter()
            .map(|p| p.to_string())
            .collect::<Vec<_>>()
            .join("+")
    }
}

fn common_m(terms: &[NmPattern]) -> Option<usize> {
    let m = terms.first()?.m();
    terms.iter().all(|p| p.m() == m).then_some(m)
}

impl fmt::Display for TasdConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for TasdConfig {
    type Err = TasdError;
    fn from_str(s: &str) -> Result<Self> {
        let terms = s
            .split('+')
            .map(|t| t.trim().parse())
            .collect::<Result<Vec<NmPattern>>>()?;
        TasdConfig::new(terms)
    }
}
