//! The energy-I-Score*, which conditions on every observed column of a
//! missingness pattern rather than on the companion set.
//!
//! Per scored column j: a random test set is split off the rows observing
//! j, the remaining rows are imputed once, and then repeatedly a pattern is
//! drawn from the test rows, the test rows of that pattern get x_j masked
//! and are stacked under the imputed training rows, and the candidate
//! method imputes the masked cells `N` times for scoring.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{MaskedDataset, PatternIndex};
use crate::energy::compensated_sum;
use crate::error::{Error, Result};
use crate::escore::{mean_energy_score, variable_weight, ReportConfig, ScoreReport, VariableScore, DEFAULT_DRAWS, DEFAULT_MIN_ROWS};
use crate::impute::{fit_impute, Imputer};
use crate::rng::{derive_seed, derived_stream, sample_without_replacement, tag};

pub const DEFAULT_TEST_FRACTION: f64 = 0.2;
/// Pattern draws per distinct test-set pattern when not set explicitly.
pub const DRAWS_PER_PATTERN: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StarConfig {
    pub test_fraction: f64,
    /// `None` uses `DRAWS_PER_PATTERN` times the number of distinct
    /// patterns in the test set.
    pub pattern_draws: Option<usize>,
    pub n_draws: usize,
    pub min_rows: usize,
    pub seed: u64,
}

impl Default for StarConfig {
    fn default() -> Self {
        Self {
            test_fraction: DEFAULT_TEST_FRACTION,
            pattern_draws: None,
            n_draws: DEFAULT_DRAWS,
            min_rows: DEFAULT_MIN_ROWS,
            seed: 0,
        }
    }
}

impl StarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!("test fraction {} is not in (0, 1)", self.test_fraction)));
        }
        if self.pattern_draws == Some(0) {
            return Err(Error::Config("pattern draws must be at least 1".into()));
        }
        if self.n_draws == 0 {
            return Err(Error::Config("number of draws must be at least 1".into()));
        }
        Ok(())
    }
}

/// Seed of everything random about column `j`.
pub fn variable_seed(master: u64, j: usize) -> u64 {
    derive_seed(master, &[tag::STAR, j as u64])
}

/// Sorted test rows: `⌈fraction·|observed|⌉` rows sampled without
/// replacement from `observed`.
pub fn test_set(observed: &[usize], fraction: f64, var_seed: u64) -> Vec<usize> {
    let size = ((fraction * observed.len() as f64).ceil() as usize).min(observed.len());
    let mut rng = derived_stream(var_seed, &[tag::STAR_SPLIT]);
    let mut rows = sample_without_replacement(observed, size, &mut rng);
    rows.sort_unstable();
    rows
}

/// Number of pattern draws used for a test set.
pub fn pattern_draw_count(idx: &PatternIndex, test: &[usize], explicit: Option<usize>) -> usize {
    explicit.unwrap_or_else(|| {
        let mut ids: Vec<usize> = test.iter().map(|&i| idx.row_pattern[i]).collect();
        ids.sort_unstable();
        ids.dedup();
        DRAWS_PER_PATTERN * ids.len()
    })
}

/// Pattern ids drawn with replacement in proportion to their frequency in
/// the test set (a uniform test row's pattern).
pub fn pattern_draws(idx: &PatternIndex, test: &[usize], count: usize, var_seed: u64) -> Vec<usize> {
    let mut rng = derived_stream(var_seed, &[tag::STAR_PATTERN]);
    (0..count).map(|_| idx.row_pattern[test[rng.random_range(0..test.len())]]).collect()
}

/// Seed of the `N` imputations for pattern draw `r`.
pub fn draw_seed(var_seed: u64, r: usize) -> u64 {
    derive_seed(var_seed, &[tag::STAR_DRAW, r as u64])
}

/// Seed of the single imputation of the training rows.
pub fn train_seed(var_seed: u64) -> u64 {
    derive_seed(var_seed, &[tag::STAR_TRAIN])
}

fn score_star_variable<I: Imputer + ?Sized>(
    data: &MaskedDataset,
    idx: &PatternIndex,
    imputer: &I,
    j: usize,
    cfg: &StarConfig,
) -> VariableScore {
    let observed = &idx.rows_observed[j];
    let n_missing = idx.rows_missing[j].len();
    let mut out = VariableScore {
        column: j,
        name: data.name(j).to_string(),
        score: None,
        weight: variable_weight(n_missing, observed.len(), data.n_rows()),
        n_test: 0,
        n_missing,
        companions: idx.companions[j].clone(),
        fallback: false,
        skip_reason: None,
    };
    if n_missing < cfg.min_rows || observed.len() < cfg.min_rows {
        out.skip_reason = Some(format!(
            "{n_missing} missing and {} observed rows, need {} of each",
            observed.len(),
            cfg.min_rows
        ));
        return out;
    }
    let var_seed = variable_seed(cfg.seed, j);
    let test = test_set(observed, cfg.test_fraction, var_seed);
    out.n_test = test.len();
    let mut in_test = vec![false; data.n_rows()];
    for &i in &test {
        in_test[i] = true;
    }
    let train: Vec<usize> = (0..data.n_rows()).filter(|&i| !in_test[i]).collect();
    let train_imputed = match fit_impute(imputer, &data.select_rows(&train), 1, train_seed(var_seed)) {
        Ok(mut v) => v.remove(0),
        Err(e) => {
            out.skip_reason = Some(format!("training rows: {e}"));
            return out;
        }
    };

    let count = pattern_draw_count(idx, &test, cfg.pattern_draws);
    let draws = pattern_draws(idx, &test, count, var_seed);
    let scores: Vec<Result<f64>> = draws
        .par_iter()
        .enumerate()
        .map(|(r, &p)| {
            let cols = idx.observed_columns(p);
            let target = cols.iter().position(|&c| c == j).expect("pattern observes the column");
            let test_rows: Vec<usize> = test.iter().copied().filter(|&i| idx.row_pattern[i] == p).collect();
            let columns = cols
                .iter()
                .map(|&c| {
                    let mut col: Vec<Option<f64>> = train_imputed.column(c).iter().map(|&v| Some(v)).collect();
                    col.extend(test_rows.iter().map(|&i| if c == j { None } else { data.get(i, c) }));
                    col
                })
                .collect();
            let table = MaskedDataset::new(
                cols.iter().map(|&c| data.name(c).to_string()).collect(),
                cols.iter().map(|&c| data.kind(c).clone()).collect(),
                columns,
            )?;
            let completions = fit_impute(imputer, &table, cfg.n_draws, draw_seed(var_seed, r))?;
            for d in &completions {
                table.check_completion(d)?;
            }
            let stacked: Vec<usize> = (train.len()..train.len() + test_rows.len()).collect();
            mean_energy_score(&completions, target, &stacked, |s| {
                data.get(test_rows[s - train.len()], j).expect("test cell is observed")
            })
        })
        .collect();
    let mut kept = Vec::with_capacity(scores.len());
    let mut last_err = None;
    for (r, s) in scores.into_iter().enumerate() {
        match s {
            Ok(v) => kept.push(v),
            Err(e) => {
                log::warn!("column {:?}, pattern draw {r} skipped: {e}", data.name(j));
                last_err = Some(e);
            }
        }
    }
    if kept.is_empty() {
        out.skip_reason = Some(format!(
            "every pattern draw failed: {}",
            last_err.map(|e| e.to_string()).unwrap_or_default()
        ));
        return out;
    }
    let n = kept.len() as f64;
    out.score = Some(compensated_sum(kept) / n);
    out
}

/// Energy-I-Score* of `imputer` on `data`. The aggregate is the plain mean
/// over scored columns.
pub fn energy_i_score_star<I: Imputer + ?Sized>(data: &MaskedDataset, imputer: &I, cfg: &StarConfig) -> Result<ScoreReport> {
    cfg.validate()?;
    let idx = PatternIndex::compute(data)?;
    if idx.scored_set.is_empty() {
        return Err(Error::NoScorableVariables);
    }
    let variables: Vec<VariableScore> = idx
        .scored_set
        .par_iter()
        .map(|&j| score_star_variable(data, &idx, imputer, j, cfg))
        .collect();
    let scores: Vec<f64> = variables.iter().filter_map(|v| v.score).collect();
    if scores.is_empty() {
        return Err(Error::NoScorableVariables);
    }
    let n = scores.len() as f64;
    Ok(ScoreReport {
        scorer: "energy-i-score-star".into(),
        aggregate: compensated_sum(scores) / n,
        variables,
        config: ReportConfig {
            n_draws: cfg.n_draws,
            min_rows: cfg.min_rows,
            weighted: false,
            seed: cfg.seed,
            test_fraction: Some(cfg.test_fraction),
            pattern_draws: cfg.pattern_draws,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::CompleteDataset;
    use crate::impute::{FcsRegressionPredict, MarginalSample};

    fn toy(n: usize) -> MaskedDataset {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![(i as f64).sin(), (i as f64 * 0.3).cos(), i as f64 / n as f64]).collect();
        let complete = CompleteDataset::from_rows(&["a", "b", "c"], &rows).unwrap();
        MaskedDataset::from_complete(&complete, |i, j| (j == 0 && i % 3 == 0) || (j == 1 && i % 4 == 1))
    }

    #[test]
    fn split_is_disjoint_sized_and_replayable() {
        let observed: Vec<usize> = (0..37).map(|i| i * 2).collect();
        let t = test_set(&observed, 0.2, 11);
        assert_eq!(t.len(), 8);
        assert_eq!(t, test_set(&observed, 0.2, 11));
        assert!(t.iter().all(|i| observed.contains(i)));
        let mut d = t.clone();
        d.dedup();
        assert_eq!(d, t);
    }

    #[test]
    fn pattern_draws_follow_test_frequencies() {
        let data = toy(60);
        let idx = PatternIndex::compute(&data).unwrap();
        let test = test_set(&idx.rows_observed[0], 0.5, 3);
        let draws = pattern_draws(&idx, &test, 20_000, 3);
        for p in 0..idx.n_patterns() {
            let want = test.iter().filter(|&&i| idx.row_pattern[i] == p).count() as f64 / test.len() as f64;
            let got = draws.iter().filter(|&&d| d == p).count() as f64 / draws.len() as f64;
            assert!((want - got).abs() < 0.02, "pattern {p}: {want} vs {got}");
        }
    }

    #[test]
    fn config_validation() {
        assert!(StarConfig { test_fraction: 1.0, ..Default::default() }.validate().is_err());
        assert!(StarConfig { pattern_draws: Some(0), ..Default::default() }.validate().is_err());
        assert!(StarConfig::default().validate().is_ok());
    }

    #[test]
    fn runs_and_replays() {
        let data = toy(80);
        let cfg = StarConfig { n_draws: 5, seed: 4, ..Default::default() };
        let a = energy_i_score_star(&data, &MarginalSample, &cfg).unwrap();
        let b = energy_i_score_star(&data, &MarginalSample, &cfg).unwrap();
        assert_eq!(a, b);
        assert!(a.aggregate < 0.0);
        assert_eq!(a.variables.len(), 2);
    }

    #[test]
    fn degenerate_imputer_gives_negative_error() {
        let data = toy(80);
        let cfg = StarConfig { n_draws: 3, pattern_draws: Some(1), seed: 9, ..Default::default() };
        let report = energy_i_score_star(&data, &FcsRegressionPredict::default(), &cfg).unwrap();
        assert!(report.scored().all(|v| v.score.unwrap() <= 0.0));
    }
}
