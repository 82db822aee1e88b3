use std::collections::BTreeMap;

use serde::Serialize;

use super::MaskedDataset;
use crate::error::{Error, Result};

/// Missingness patterns of a dataset and the per-column row and companion
/// sets derived from them.
///
/// Patterns are the distinct mask rows (`true` = missing), numbered in
/// lexicographic order so ids do not depend on row order.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PatternIndex {
    pub patterns: Vec<Vec<bool>>,
    pub row_pattern: Vec<usize>,
    /// Rows whose pattern observes column j.
    pub rows_observed: Vec<Vec<usize>>,
    /// Rows whose pattern misses column j.
    pub rows_missing: Vec<Vec<usize>>,
    /// Columns other than j observed in every pattern that observes j. An
    /// empty intersection is the full set, so a never-observed column gets
    /// every other column.
    pub companions: Vec<Vec<usize>>,
    /// Columns with at least one missing cell.
    pub scored_set: Vec<usize>,
}

impl PatternIndex {
    pub fn compute(data: &MaskedDataset) -> Result<Self> {
        let n = data.n_rows();
        let d = data.n_cols();
        if n == 0 {
            return Err(Error::NoRows);
        }
        if d < 2 {
            return Err(Error::TooFewColumns { required: 2, found: d });
        }

        let masks: Vec<Vec<bool>> = (0..n).map(|i| data.mask_row(i)).collect();
        let mut ids: BTreeMap<&[bool], usize> = masks.iter().map(|m| (m.as_slice(), 0)).collect();
        for (id, v) in ids.values_mut().enumerate() {
            *v = id;
        }
        let patterns: Vec<Vec<bool>> = ids.keys().map(|m| m.to_vec()).collect();
        let row_pattern: Vec<usize> = masks.iter().map(|m| ids[m.as_slice()]).collect();

        let mut rows_observed = vec![Vec::new(); d];
        let mut rows_missing = vec![Vec::new(); d];
        for (i, m) in masks.iter().enumerate() {
            for j in 0..d {
                if m[j] {
                    rows_missing[j].push(i);
                } else {
                    rows_observed[j].push(i);
                }
            }
        }

        let companions = (0..d)
            .map(|j| {
                let in_lj: Vec<&Vec<bool>> = patterns.iter().filter(|m| !m[j]).collect();
                (0..d).filter(|&l| l != j && in_lj.iter().all(|m| !m[l])).collect()
            })
            .collect();

        let scored_set = (0..d).filter(|&j| !rows_missing[j].is_empty()).collect();

        Ok(Self { patterns, row_pattern, rows_observed, rows_missing, companions, scored_set })
    }

    pub fn n_patterns(&self) -> usize {
        self.patterns.len()
    }

    /// Ids of the patterns in which column `j` is observed.
    pub fn observing_patterns(&self, j: usize) -> Vec<usize> {
        (0..self.patterns.len()).filter(|&p| !self.patterns[p][j]).collect()
    }

    /// Columns observed under pattern `p`.
    pub fn observed_columns(&self, p: usize) -> Vec<usize> {
        (0..self.patterns[p].len()).filter(|&l| !self.patterns[p][l]).collect()
    }
}

/// The column sharing the most jointly observed rows with column `j`, used
/// as the conditioning set when `j` has no companion. Ties go to the
/// smallest index.
pub fn fallback_companion(data: &MaskedDataset, idx: &PatternIndex, j: usize) -> Result<usize> {
    let mut best: Option<(usize, usize)> = None;
    for k in (0..data.n_cols()).filter(|&k| k != j) {
        let count = idx.rows_observed[j].iter().filter(|&&i| !data.is_missing(i, k)).count();
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((k, count));
        }
    }
    match best {
        Some((k, c)) if c > 0 => Ok(k),
        _ => Err(Error::NoUsableCompanion { column: j }),
    }
}
