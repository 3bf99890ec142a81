use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TasdError};
use crate::matrix::{NmPattern, TasdConfig};

/// The N:M patterns a target supports natively, and how many of them may be
/// chained into one series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatternMenu {
    pub m: usize,
    pub base_patterns: BTreeSet<usize>,
    pub max_terms: usize,
}

impl PatternMenu {
    pub fn new(
        m: usize,
        base_patterns: impl IntoIterator<Item = usize>,
        max_terms: usize,
    ) -> Result<Self> {
        let base_patterns: BTreeSet<usize> = base_patterns.into_iter().collect();
        if m == 0 || max_terms == 0 {
            return Err(TasdError::InvalidConfig(
                "menu needs m > 0 and max_terms > 0".into(),
            ));
        }
        if let Some(&n) = base_patterns.iter().find(|&&n| n == 0 || n > m) {
            return Err(TasdError::InvalidPattern { n, m });
        }
        Ok(Self {
            m,
            base_patterns,
            max_terms,
        })
    }

    /// 1:8, 2:8 and 4:8 with up to two terms.
    pub fn vegeta_m8() -> Self {
        Self::new(8, [1, 2, 4], 2).expect("static menu")
    }

    /// 2:4 only, single term.
    pub fn stc_m4() -> Self {
        Self::new(4, [2], 1).expect("static menu")
    }

    /// Whether `config` can run on this menu (dense always can).
    pub fn expresses(&self, config: &TasdConfig) -> bool {
        if config.is_dense() && config.terms()[0].m() == self.m {
            return true;
        }
        config.common_m() == Some(self.m)
            && config.terms().len() <= self.max_terms
            && config.total_n() <= self.m
            && config
                .terms()
                .iter()
                .all(|p| self.base_patterns.contains(&p.n()))
    }

    /// For each total `t` in `1..=m`, the series realizing `t:m`, or `None`.
    pub fn pattern_table(&self) -> Vec<(usize, Option<TasdConfig>)> {
        let realizations = self.realizations();
        (1..=self.m)
            .map(|t| {
                if t == self.m {
                    return (t, Some(self.dense()));
                }
                (t, realizations[t].as_ref().map(|ns| self.series(ns)))
            })
            .collect()
    }

    /// Every distinct coverage the menu reaches, one config each, ascending by
    /// coverage; the dense option is last.
    pub fn enumerate_configs(&self) -> Vec<TasdConfig> {
        self.pattern_table()
            .into_iter()
            .filter_map(|(_, c)| c)
            .collect()
    }

    fn dense(&self) -> TasdConfig {
        TasdConfig::dense(self.m)
            .expect("m > 0")
            .with_label("dense")
    }

    fn series(&self, ns: &[usize]) -> TasdConfig {
        let terms = ns
            .iter()
            .map(|&n| NmPattern::new(n, self.m).expect("menu patterns are valid"))
            .collect();
        let c = TasdConfig::new(terms).expect("sum checked");
        let label = c.canonical();
        c.with_label(label)
    }

    /// Best multiset (descending `n`) per total: fewest terms, then the
    /// lexicographically largest.
    fn realizations(&self) -> Vec<Option<Vec<usize>>> {
        let mut best: Vec<Option<Vec<usize>>> = vec![None; self.m + 1];
        let base: Vec<usize> = self.base_patterns.iter().rev().copied().collect();
        let mut stack = Vec::new();
        self.visit(&base, 0, &mut stack, &mut best);
        best
    }

    fn visit(
        &self,
        base: &[usize],
        from: usize,
        stack: &mut Vec<usize>,
        best: &mut [Option<Vec<usize>>],
    ) {
        let total: usize = stack.iter().sum();
        if !stack.is_empty() {
            let slot = &mut best[total];
            let better = match slot {
                None => true,
                Some(cur) => stack.len() < cur.len() || (stack.len() == cur.len() && *stack > *cur),
            };
            if better {
                *slot = Some(stack.clone());
            }
        }
        if stack.len() == self.max_terms {
            return;
        }
        for i in from..base.len() {
            if total + base[i] <= self.m {
                stack.push(base[i]);
                self.visit(base, i, stack, best);
                stack.pop();
            }
        }
    }
}
