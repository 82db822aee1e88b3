//! Repeated benchmarks: generate data, impute with every method, score,
//! standardize per score type over the whole batch, and rank.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize};

use crate::data::{CompleteDataset, MaskedDataset};
use crate::energy::full_information_score;
use crate::error::{Error, Result};
use crate::escore::{energy_i_score, standardize_scores, EscoreConfig, DEFAULT_DRAWS, DEFAULT_MIN_ROWS};
use crate::impute::{fit_impute, MethodSpec};
use crate::rng::{derive_seed, label_tag, tag};
use crate::star::{energy_i_score_star, StarConfig, DEFAULT_TEST_FRACTION};
use crate::synth::GeneratorSpec;

pub const DEFAULT_REPETITIONS: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreType {
    EnergyIScore,
    EnergyIScoreStar,
    FullInformation,
}

impl ScoreType {
    pub const ALL: [ScoreType; 3] = [ScoreType::EnergyIScore, ScoreType::EnergyIScoreStar, ScoreType::FullInformation];

    pub fn as_str(self) -> &'static str {
        match self {
            ScoreType::EnergyIScore => "energy_i_score",
            ScoreType::EnergyIScoreStar => "energy_i_score_star",
            ScoreType::FullInformation => "full_information",
        }
    }
}

impl fmt::Display for ScoreType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarSettings {
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub pattern_draws: Option<usize>,
    /// Defaults to the run's `n_draws`.
    #[serde(default)]
    pub n_draws: Option<usize>,
}

impl Default for StarSettings {
    fn default() -> Self {
        Self { test_fraction: DEFAULT_TEST_FRACTION, pattern_draws: None, n_draws: None }
    }
}

fn default_test_fraction() -> f64 {
    DEFAULT_TEST_FRACTION
}

fn default_repetitions() -> usize {
    DEFAULT_REPETITIONS
}

fn default_draws() -> usize {
    DEFAULT_DRAWS
}

fn default_min_rows() -> usize {
    DEFAULT_MIN_ROWS
}

fn default_true() -> bool {
    true
}

/// Methods may be written as `"knn:k=3"` strings or as tables with a
/// `kind` key.
fn de_methods<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<MethodSpec>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Short(String),
        Full(MethodSpec),
    }
    Vec::<Entry>::deserialize(d)?
        .into_iter()
        .map(|e| match e {
            Entry::Short(s) => s.parse().map_err(serde::de::Error::custom),
            Entry::Full(m) => Ok(m),
        })
        .collect()
}

/// Benchmark settings, usually read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    #[serde(deserialize_with = "de_methods")]
    pub methods: Vec<MethodSpec>,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_draws")]
    pub n_draws: usize,
    #[serde(default = "default_min_rows")]
    pub min_rows: usize,
    #[serde(default = "default_true")]
    pub weighted: bool,
    /// Also run the energy-I-Score* when present.
    #[serde(default)]
    pub star: Option<StarSettings>,
    #[serde(default = "default_true")]
    pub full_information: bool,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(generator: GeneratorSpec, methods: Vec<MethodSpec>) -> Self {
        Self {
            generator,
            methods,
            repetitions: DEFAULT_REPETITIONS,
            seed: 0,
            n_draws: DEFAULT_DRAWS,
            min_rows: DEFAULT_MIN_ROWS,
            weighted: true,
            star: None,
            full_information: true,
            out: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no imputation methods configured".into()));
        }
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        let mut labels: Vec<String> = self.methods.iter().map(MethodSpec::label).collect();
        labels.sort();
        if let Some(w) = labels.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!("method {:?} is listed twice", w[0])));
        }
        for m in &self.methods {
            m.build()?;
        }
        if let Some(star) = &self.star {
            self.star_config(star, 0).validate()?;
        }
        self.generator.validate()
    }

    fn star_config(&self, star: &StarSettings, seed: u64) -> StarConfig {
        StarConfig {
            test_fraction: star.test_fraction,
            pattern_draws: star.pattern_draws,
            n_draws: star.n_draws.unwrap_or(self.n_draws),
            min_rows: self.min_rows,
            seed,
        }
    }

    pub fn score_types(&self) -> Vec<ScoreType> {
        let mut v = vec![ScoreType::EnergyIScore];
        if self.star.is_some() {
            v.push(ScoreType::EnergyIScoreStar);
        }
        if self.full_information {
            v.push(ScoreType::FullInformation);
        }
        v
    }
}

/// One value per score type; `None` for failed or disabled scores.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSet {
    pub energy_i_score: Option<f64>,
    pub energy_i_score_star: Option<f64>,
    pub full_information: Option<f64>,
}

impl ScoreSet {
    pub fn get(&self, t: ScoreType) -> Option<f64> {
        match t {
            ScoreType::EnergyIScore => self.energy_i_score,
            ScoreType::EnergyIScoreStar => self.energy_i_score_star,
            ScoreType::FullInformation => self.full_information,
        }
    }

    fn slot(&mut self, t: ScoreType) -> &mut Option<f64> {
        match t {
            ScoreType::EnergyIScore => &mut self.energy_i_score,
            ScoreType::EnergyIScoreStar => &mut self.energy_i_score_star,
            ScoreType::FullInformation => &mut self.full_information,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub repetition: usize,
    pub method: String,
    pub raw: ScoreSet,
    pub standardized: ScoreSet,
    pub errors: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    /// 1-based; `None` for failed methods.
    pub rank: Option<usize>,
    pub mean_standardized: Option<f64>,
    pub mean_raw: Option<f64>,
    pub n_ok: usize,
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: RunConfig,
    pub methods: Vec<String>,
    pub score_types: Vec<ScoreType>,
    pub records: Vec<Record>,
    /// Per score type, methods in rank order followed by failed methods.
    pub rankings: BTreeMap<ScoreType, Vec<MethodSummary>>,
}

impl BenchmarkReport {
    pub fn records_for(&self, repetition: usize) -> impl Iterator<Item = &Record> {
        self.records.iter().filter(move |r| r.repetition == repetition)
    }

    /// Method with the highest raw score in one repetition (ties by name).
    pub fn repetition_winner(&self, t: ScoreType, repetition: usize) -> Option<&str> {
        best_by_name(self.records_for(repetition).filter_map(|r| r.raw.get(t).map(|s| (r.method.as_str(), s))))
    }

    pub fn ranking(&self, t: ScoreType) -> Vec<&str> {
        self.rankings
            .get(&t)
            .map(|v| v.iter().filter(|s| s.rank.is_some()).map(|s| s.method.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn raw(&self, t: ScoreType, method: &str) -> Vec<Option<f64>> {
        self.records.iter().filter(|r| r.method == method).map(|r| r.raw.get(t)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Summary table: one line per score type and method, in rank order.
    pub fn write_summary_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["score", "rank", "method", "mean_standardized", "mean_raw", "n_ok", "failed"])?;
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for (t, rows) in &self.rankings {
            for s in rows {
                out.write_record([
                    t.as_str().to_string(),
                    s.rank.map_or_else(|| "NA".to_string(), |r| r.to_string()),
                    s.method.clone(),
                    cell(s.mean_standardized),
                    cell(s.mean_raw),
                    s.n_ok.to_string(),
                    s.failed.to_string(),
                ])?;
            }
        }
        out.flush()?;
        Ok(())
    }

    /// Per-repetition raw and standardized scores.
    pub fn write_scores_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["repetition".to_string(), "method".to_string()];
        for t in &self.score_types {
            header.push(t.as_str().to_string());
            header.push(format!("{t}_standardized"));
        }
        out.write_record(&header)?;
        let cell = |v: Option<f64>| v.map_or_else(|| "NA".to_string(), |x| x.to_string());
        for r in &self.records {
            let mut row = vec![r.repetition.to_string(), r.method.clone()];
            for &t in &self.score_types {
                row.push(cell(r.raw.get(t)));
                row.push(cell(r.standardized.get(t)));
            }
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `report.json`, `report.csv` and `scores.csv` into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), self.to_json()?)?;
        self.write_summary_csv(std::fs::File::create(dir.join("report.csv"))?)?;
        self.write_scores_csv(std::fs::File::create(dir.join("scores.csv"))?)
    }
}

/// Highest score, ties to the lexicographically smallest name.
fn best_by_name<'a>(items: impl Iterator<Item = (&'a str, f64)>) -> Option<&'a str> {
    items
        .fold(None, |best: Option<(&str, f64)>, (m, s)| match best {
            Some((bm, bs)) if bs > s || (bs == s && bm <= m) => Some((bm, bs)),
            _ => Some((m, s)),
        })
        .map(|(m, _)| m)
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| crate::energy::compensated_sum(values.iter().copied()) / values.len() as f64)
}

/// Imputes and scores one method on one repetition's data.
fn run_cell(
    cfg: &RunConfig,
    rep: usize,
    method: &MethodSpec,
    complete: &CompleteDataset,
    masked: &MaskedDataset,
) -> (ScoreSet, Vec<String>) {
    let mut raw = ScoreSet::default();
    let mut errors = Vec::new();
    let label = method.label();
    let imputer = match method.build() {
        Ok(i) => i,
        Err(e) => return (raw, vec![e.to_string()]),
    };
    let imputed = match fit_impute(&*imputer, masked, 1, derive_seed(cfg.seed, &[tag::BENCH_IMPUTE, rep as u64, label_tag(&label)])) {
        Ok(mut v) => v.remove(0),
        Err(e) => return (raw, vec![format!("imputation: {e}")]),
    };
    let escore_cfg = EscoreConfig {
        n_draws: cfg.n_draws,
        min_rows: cfg.min_rows,
        weighted: cfg.weighted,
        seed: derive_seed(cfg.seed, &[tag::BENCH_SCORE, rep as u64]),
    };
    let mut record = |t: ScoreType, r: Result<f64>| match r {
        Ok(v) => *raw.slot(t) = Some(v),
        Err(e) => errors.push(format!("{t}: {e}")),
    };
    record(ScoreType::EnergyIScore, energy_i_score(masked, &imputed, &*imputer, &escore_cfg).map(|r| r.aggregate));
    if let Some(star) = &cfg.star {
        let star_cfg = cfg.star_config(star, derive_seed(cfg.seed, &[tag::BENCH_STAR, rep as u64]));
        record(ScoreType::EnergyIScoreStar, energy_i_score_star(masked, &*imputer, &star_cfg).map(|r| r.aggregate));
    }
    if cfg.full_information {
        record(ScoreType::FullInformation, full_information_score(complete, &imputed));
    }
    (raw, errors)
}

/// Runs every repetition and method, then standardizes and ranks.
pub fn run_benchmark(cfg: &RunConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let datasets: Vec<(CompleteDataset, MaskedDataset)> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|rep| cfg.generator.generate(derive_seed(cfg.seed, &[tag::BENCH_DATA, rep as u64])))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> =
        (0..cfg.repetitions).flat_map(|r| (0..cfg.methods.len()).map(move |m| (r, m))).collect();
    let results: Vec<(ScoreSet, Vec<String>)> = cells
        .par_iter()
        .map(|&(rep, m)| run_cell(cfg, rep, &cfg.methods[m], &datasets[rep].0, &datasets[rep].1))
        .collect();
    let methods: Vec<String> = cfg.methods.iter().map(MethodSpec::label).collect();
    let mut records: Vec<Record> = cells
        .iter()
        .zip(results)
        .map(|(&(rep, m), (raw, errors))| {
            for e in &errors {
                log::warn!("repetition {rep}, {}: {e}", methods[m]);
            }
            Record { repetition: rep, method: methods[m].clone(), raw, standardized: ScoreSet::default(), errors }
        })
        .collect();

    let score_types = cfg.score_types();
    let mut rankings = BTreeMap::new();
    for &t in &score_types {
        let failed: Vec<bool> = methods
            .iter()
            .map(|m| {
                let misses = records.iter().filter(|r| &r.method == m && r.raw.get(t).is_none()).count();
                2 * misses > cfg.repetitions
            })
            .collect();
        let is_failed = |name: &str| failed[methods.iter().position(|m| m == name).expect("known method")];
        let pooled: Vec<Option<f64>> =
            records.iter().map(|r| if is_failed(&r.method) { None } else { r.raw.get(t) }).collect();
        // a lone score has a zero range within the batch and maps to 0
        let standardized = if pooled.iter().flatten().count() == 1 {
            pooled.iter().map(|v| v.map(|_| 0.0)).collect()
        } else {
            standardize_scores(&pooled)
        };
        for (r, s) in records.iter_mut().zip(standardized) {
            *r.standardized.slot(t) = s;
        }
        let mut summaries: Vec<MethodSummary> = methods
            .iter()
            .zip(&failed)
            .map(|(m, &failed)| {
                let raw: Vec<f64> = records.iter().filter(|r| &r.method == m).filter_map(|r| r.raw.get(t)).collect();
                let std: Vec<f64> =
                    records.iter().filter(|r| &r.method == m).filter_map(|r| r.standardized.get(t)).collect();
                MethodSummary {
                    method: m.clone(),
                    rank: None,
                    mean_standardized: if failed { None } else { mean(&std) },
                    mean_raw: mean(&raw),
                    n_ok: raw.len(),
                    failed,
                }
            })
            .collect();
        summaries.sort_by(|a, b| {
            let key = |s: &MethodSummary| s.mean_standardized.filter(|_| !s.failed);
            match (key(a), key(b)) {
                (Some(x), Some(y)) => y.total_cmp(&x).then_with(|| a.method.cmp(&b.method)),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => a.method.cmp(&b.method),
            }
        });
        let mut rank = 0;
        for s in summaries.iter_mut() {
            if !s.failed && s.mean_standardized.is_some() {
                rank += 1;
                s.rank = Some(rank);
            }
        }
        rankings.insert(t, summaries);
    }
    Ok(BenchmarkReport { config: cfg.clone(), methods, score_types, records, rankings })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n_draws: usize,
    pub ranking: Vec<String>,
    /// Highest energy-I-Score per repetition.
    pub winners: Vec<Option<String>>,
    /// Share of repetitions whose winner equals the reference winner.
    pub agreement: f64,
    pub mean_raw: BTreeMap<String, Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub reference_n: usize,
    pub points: Vec<SweepPoint>,
}

pub fn default_sweep_values() -> Vec<usize> {
    (1..=20).map(|k| 5 * k).collect()
}

/// Repeats the benchmark (energy-I-Score only) for each `N` in `n_values`,
/// comparing per-repetition winners with those at `reference_n`.
pub fn run_sweep(cfg: &RunConfig, n_values: &[usize], reference_n: usize) -> Result<SweepReport> {
    if n_values.is_empty() {
        return Err(Error::Config("empty list of draw counts".into()));
    }
    let base = RunConfig { star: None, full_information: false, ..cfg.clone() };
    let mut wanted: Vec<usize> = n_values.to_vec();
    if !wanted.contains(&reference_n) {
        wanted.push(reference_n);
    }
    let reports: BTreeMap<usize, BenchmarkReport> = wanted
        .iter()
        .map(|&n| run_benchmark(&RunConfig { n_draws: n, ..base.clone() }).map(|r| (n, r)))
        .collect::<Result<_>>()?;
    let winners = |r: &BenchmarkReport| -> Vec<Option<String>> {
        (0..cfg.repetitions).map(|rep| r.repetition_winner(ScoreType::EnergyIScore, rep).map(str::to_string)).collect()
    };
    let reference = winners(&reports[&reference_n]);
    let points = n_values
        .iter()
        .map(|n| {
            let r = &reports[n];
            let w = winners(r);
            let agree = w.iter().zip(&reference).filter(|(a, b)| a.is_some() && a == b).count();
            SweepPoint {
                n_draws: *n,
                ranking: r.ranking(ScoreType::EnergyIScore).into_iter().map(str::to_string).collect(),
                agreement: agree as f64 / cfg.repetitions as f64,
                winners: w,
                mean_raw: r.rankings[&ScoreType::EnergyIScore]
                    .iter()
                    .map(|s| (s.method.clone(), s.mean_raw))
                    .collect(),
            }
        })
        .collect();
    Ok(SweepReport { reference_n, points })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> RunConfig {
        RunConfig {
            repetitions: 2,
            n_draws: 5,
            ..RunConfig::new(
                GeneratorSpec::Uniform { n: 120, rho: 0.0 },
                vec![MethodSpec::OracleUniform, MethodSpec::MarginalSample],
            )
        }
    }

    #[test]
    fn toml_config_accepts_both_method_forms() {
        let cfg = RunConfig::from_toml(
            r#"
            seed = 3
            repetitions = 4
            methods = ["oracle_uniform", "knn:k=3"]
            [generator]
            kind = "uniform"
            n = 500
            [star]
            test_fraction = 0.3
            "#,
        )
        .unwrap();
        assert_eq!(cfg.methods, vec![MethodSpec::OracleUniform, MethodSpec::Knn { k: 3 }]);
        assert_eq!(cfg.star.as_ref().unwrap().test_fraction, 0.3);
        assert_eq!(cfg.n_draws, 50);
        let tables = RunConfig::from_toml(
            "methods = [{ kind = \"knn\", k = 2 }]\n[generator]\nkind = \"gauss_mixture\"\n",
        )
        .unwrap();
        assert_eq!(tables.methods, vec![MethodSpec::Knn { k: 2 }]);
        assert!(RunConfig::from_toml("methods = []\nbogus = 1\n[generator]\nkind = \"uniform\"\n").is_err());
    }

    #[test]
    fn validation() {
        let mut cfg = small();
        cfg.methods.push(MethodSpec::OracleUniform);
        assert!(cfg.validate().is_err());
        assert!(RunConfig { repetitions: 0, ..small() }.validate().is_err());
    }

    #[test]
    fn report_ranks_by_mean_standardized() {
        let report = run_benchmark(&small()).unwrap();
        assert_eq!(report.records.len(), 4);
        for (_, rows) in &report.rankings {
            let means: Vec<f64> = rows.iter().filter_map(|s| s.mean_standardized).collect();
            assert!(means.windows(2).all(|w| w[0] >= w[1]));
        }
        for r in &report.records {
            for t in &report.score_types {
                let s = r.standardized.get(*t).unwrap();
                assert!((-1.0..=0.0).contains(&s));
            }
        }
        assert_eq!(report, run_benchmark(&small()).unwrap());
    }

    #[test]
    fn single_method_single_repetition_scores_zero() {
        let cfg = RunConfig { repetitions: 1, methods: vec![MethodSpec::MarginalSample], ..small() };
        let report = run_benchmark(&cfg).unwrap();
        assert_eq!(report.records[0].standardized.energy_i_score, Some(0.0));
        assert_eq!(report.rankings[&ScoreType::EnergyIScore][0].rank, Some(1));
    }

    #[test]
    fn failing_method_is_excluded() {
        // the copula oracle rejects values outside [0, 1]
        let cfg = RunConfig {
            generator: GeneratorSpec::GaussMixture { n_per_pattern: 40 },
            methods: vec![MethodSpec::MarginalSample, MethodSpec::OracleDepUniform { rho: 0.5 }],
            ..small()
        };
        let report = run_benchmark(&cfg).unwrap();
        let rows = &report.rankings[&ScoreType::EnergyIScore];
        assert_eq!(report.ranking(ScoreType::EnergyIScore), vec!["marginal_sample"]);
        let failed = rows.iter().find(|s| s.failed).unwrap();
        assert_eq!((failed.rank, failed.mean_standardized, failed.n_ok), (None, None, 0));
        let rec = report.records.iter().find(|r| r.method.starts_with("oracle_dep")).unwrap();
        assert_eq!(rec.raw, ScoreSet::default());
        assert!(report.to_json().unwrap().contains("null"));
    }

    #[test]
    fn best_by_name_breaks_ties() {
        assert_eq!(best_by_name([("b", 1.0), ("a", 1.0), ("c", 0.5)].into_iter()), Some("a"));
        assert_eq!(best_by_name(std::iter::empty()), None);
    }
}
