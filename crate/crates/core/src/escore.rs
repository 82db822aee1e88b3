//! The energy-I-Score.
//!
//! For every column j with missing cells, the observed cells of j are masked
//! in a table made of j and its companion columns (the columns observed
//! whenever j is observed), where all other cells come from the candidate
//! imputation. The candidate method then imputes the masked cells `N`
//! times, and each observed value is scored against its `N` draws with the
//! empirical energy score. Per-column scores are averaged, optionally
//! weighted by `|missing|·|observed|/n²`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{encode_cell, fallback_companion, CompleteDataset, MaskedDataset, PatternIndex};
use crate::energy::{compensated_sum, empirical_energy_score, ImputationDraws};
use crate::error::{Error, Result};
use crate::impute::{fit_impute, Imputer};
use crate::rng::{derive_seed, tag};

pub const DEFAULT_DRAWS: usize = 50;
pub const DEFAULT_MIN_ROWS: usize = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EscoreConfig {
    pub n_draws: usize,
    pub min_rows: usize,
    pub weighted: bool,
    pub seed: u64,
}

impl Default for EscoreConfig {
    fn default() -> Self {
        Self { n_draws: DEFAULT_DRAWS, min_rows: DEFAULT_MIN_ROWS, weighted: true, seed: 0 }
    }
}

/// Produces `n_draws` completions of a table whose only incomplete column
/// is `target`.
pub trait DrawSource: Sync {
    fn draws(&self, table: &MaskedDataset, target: usize, n_draws: usize, seed: u64) -> Result<Vec<CompleteDataset>>;
}

impl<T: Imputer + ?Sized> DrawSource for T {
    fn draws(&self, table: &MaskedDataset, _target: usize, n_draws: usize, seed: u64) -> Result<Vec<CompleteDataset>> {
        fit_impute(self, table, n_draws, seed)
    }
}

/// Draws produced outside the library, keyed by the name of the masked
/// column of the training table they complete.
#[derive(Clone, Debug, Default)]
pub struct PrecomputedDraws {
    pub by_column: BTreeMap<String, Vec<CompleteDataset>>,
}

impl DrawSource for PrecomputedDraws {
    fn draws(&self, table: &MaskedDataset, target: usize, n_draws: usize, _seed: u64) -> Result<Vec<CompleteDataset>> {
        let name = table.name(target);
        let all = self
            .by_column
            .get(name)
            .ok_or_else(|| Error::InvalidInput(format!("no precomputed draws for column {name:?}")))?;
        if all.len() < n_draws {
            return Err(Error::InvalidInput(format!(
                "{} precomputed draws for column {name:?}, {n_draws} needed",
                all.len()
            )));
        }
        for d in &all[..n_draws] {
            table.check_completion(d)?;
        }
        Ok(all[..n_draws].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableScore {
    pub column: usize,
    pub name: String,
    /// `None` when the column was skipped.
    pub score: Option<f64>,
    pub weight: f64,
    pub n_test: usize,
    pub n_missing: usize,
    /// Conditioning columns; a single fallback column when `fallback`.
    pub companions: Vec<usize>,
    pub fallback: bool,
    pub skip_reason: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportConfig {
    pub n_draws: usize,
    pub min_rows: usize,
    pub weighted: bool,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub test_fraction: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pattern_draws: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scorer: String,
    pub aggregate: f64,
    pub variables: Vec<VariableScore>,
    pub config: ReportConfig,
}

impl ScoreReport {
    pub fn scored(&self) -> impl Iterator<Item = &VariableScore> {
        self.variables.iter().filter(|v| v.score.is_some())
    }
}

/// `|missing|·|observed| / n²`.
pub fn variable_weight(n_missing: usize, n_observed: usize, n_rows: usize) -> f64 {
    (n_missing as f64 * n_observed as f64) / (n_rows as f64 * n_rows as f64)
}

/// The masked training table for column `j`.
#[derive(Clone, Debug)]
pub struct TrainingTable {
    pub table: MaskedDataset,
    /// Position of column j inside `table`.
    pub target: usize,
    pub companions: Vec<usize>,
    pub fallback: bool,
}

/// Builds the table of column `j` and its companions (or the fallback
/// column) over all rows, with the cells of `j` masked where `j` is
/// observed and every other cell taken from `imputed`.
pub fn training_table(
    data: &MaskedDataset,
    idx: &PatternIndex,
    imputed: &CompleteDataset,
    j: usize,
) -> Result<TrainingTable> {
    let (companions, fallback) = if idx.companions[j].is_empty() {
        (vec![fallback_companion(data, idx, j)?], true)
    } else {
        (idx.companions[j].clone(), false)
    };
    let mut cols = companions.clone();
    cols.push(j);
    cols.sort_unstable();
    let target = cols.iter().position(|&c| c == j).expect("target is in the column set");
    let columns = cols
        .iter()
        .map(|&c| {
            (0..data.n_rows())
                .map(|i| if c == j && !data.is_missing(i, j) { None } else { Some(imputed.get(i, c)) })
                .collect()
        })
        .collect();
    let table = MaskedDataset::new(
        cols.iter().map(|&c| data.name(c).to_string()).collect(),
        cols.iter().map(|&c| data.kind(c).clone()).collect(),
        columns,
    )?;
    Ok(TrainingTable { table, target, companions, fallback })
}

/// Mean empirical energy score of the draws at `rows` (column `target` of
/// each draw) against the held-out values.
pub(crate) fn mean_energy_score(
    draws: &[CompleteDataset],
    target: usize,
    rows: &[usize],
    held_out: impl Fn(usize) -> f64,
) -> Result<f64> {
    let kind = draws[0].kind(target);
    let scores = rows
        .iter()
        .map(|&i| {
            let values: Vec<f64> = draws.iter().flat_map(|d| encode_cell(kind, d.get(i, target))).collect();
            let sample = ImputationDraws::new(kind.arity(), values)?;
            empirical_energy_score(&sample, &encode_cell(kind, held_out(i)))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(compensated_sum(scores) / rows.len() as f64)
}

fn skipped(base: VariableScore, reason: String) -> VariableScore {
    VariableScore { score: None, skip_reason: Some(reason), ..base }
}

/// Scores column `j`. Failures of the draw source mark the column skipped
/// instead of aborting.
pub fn score_variable<S: DrawSource + ?Sized>(
    data: &MaskedDataset,
    idx: &PatternIndex,
    imputed: &CompleteDataset,
    source: &S,
    j: usize,
    cfg: &EscoreConfig,
) -> VariableScore {
    let observed = &idx.rows_observed[j];
    let n_missing = idx.rows_missing[j].len();
    let base = VariableScore {
        column: j,
        name: data.name(j).to_string(),
        score: None,
        weight: variable_weight(n_missing, observed.len(), data.n_rows()),
        n_test: observed.len(),
        n_missing,
        companions: idx.companions[j].clone(),
        fallback: false,
        skip_reason: None,
    };
    if n_missing < cfg.min_rows || observed.len() < cfg.min_rows {
        return skipped(
            base,
            format!("{n_missing} missing and {} observed rows, need {} of each", observed.len(), cfg.min_rows),
        );
    }
    let tt = match training_table(data, idx, imputed, j) {
        Ok(tt) => tt,
        Err(e) => return skipped(base, e.to_string()),
    };
    let base = VariableScore { companions: tt.companions.clone(), fallback: tt.fallback, ..base };
    let seed = derive_seed(cfg.seed, &[tag::ESCORE, j as u64]);
    let result = source
        .draws(&tt.table, tt.target, cfg.n_draws, seed)
        .and_then(|draws| {
            if draws.len() != cfg.n_draws {
                return Err(Error::Imputation(format!("expected {} draws, got {}", cfg.n_draws, draws.len())));
            }
            for d in &draws {
                tt.table.check_completion(d)?;
            }
            mean_energy_score(&draws, tt.target, observed, |i| data.get(i, j).expect("test cell is observed"))
        });
    match result {
        Ok(score) => VariableScore { score: Some(score), ..base },
        Err(e) => skipped(base, e.to_string()),
    }
}

/// Averages the non-skipped per-column scores; skipped columns do not count
/// in the divisor.
pub fn aggregate(variables: &[VariableScore], weighted: bool) -> Result<f64> {
    let terms: Vec<f64> = variables
        .iter()
        .filter_map(|v| v.score.map(|s| if weighted { v.weight * s } else { s }))
        .collect();
    if terms.is_empty() {
        return Err(Error::NoScorableVariables);
    }
    let count = terms.len() as f64;
    Ok(compensated_sum(terms) / count)
}

/// Energy-I-Score of the completion `imputed` of `data`, with `source`
/// supplying the repeated imputations of each training table.
pub fn energy_i_score<S: DrawSource + ?Sized>(
    data: &MaskedDataset,
    imputed: &CompleteDataset,
    source: &S,
    cfg: &EscoreConfig,
) -> Result<ScoreReport> {
    if cfg.n_draws == 0 {
        return Err(Error::Config("number of draws must be at least 1".into()));
    }
    data.check_completion(imputed)?;
    let idx = PatternIndex::compute(data)?;
    if idx.scored_set.is_empty() {
        return Err(Error::NoScorableVariables);
    }
    let variables: Vec<VariableScore> = idx
        .scored_set
        .par_iter()
        .map(|&j| score_variable(data, &idx, imputed, source, j, cfg))
        .collect();
    for v in variables.iter().filter(|v| v.score.is_none()) {
        log::info!("column {:?} skipped: {}", v.name, v.skip_reason.as_deref().unwrap_or(""));
    }
    Ok(ScoreReport {
        scorer: "energy-i-score".into(),
        aggregate: aggregate(&variables, cfg.weighted)?,
        variables,
        config: ReportConfig {
            n_draws: cfg.n_draws,
            min_rows: cfg.min_rows,
            weighted: cfg.weighted,
            seed: cfg.seed,
            test_fraction: None,
            pattern_draws: None,
        },
    })
}

/// Maps a pooled batch of scores affinely onto [−1, 0] by
/// `s ↦ (s − max)/(max − min)`. `None` entries stay `None`. A zero range maps
/// every score to 0; fewer than two scores leave the batch unchanged.
pub fn standardize_scores(raw: &[Option<f64>]) -> Vec<Option<f64>> {
    let finite: Vec<f64> = raw.iter().flatten().copied().filter(|v| v.is_finite()).collect();
    if finite.len() < 2 {
        log::warn!("standardization needs at least two finite scores, got {}; leaving scores unchanged", finite.len());
        return raw.to_vec();
    }
    let max = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = finite.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    raw.iter()
        .map(|v| {
            v.filter(|s| s.is_finite()).map(|s| if range > 0.0 { (s - max) / range } else { 0.0 })
        })
        .collect()
}
