use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use iscore::bench::{default_sweep_values, run_benchmark, run_sweep, RunConfig, StarSettings};
use iscore::data::{
    read_complete_csv, read_masked_csv, write_complete_csv, write_masked_csv, CompleteDataset, CsvOptions,
    MaskedDataset, PatternIndex,
};
use iscore::escore::{energy_i_score, training_table, EscoreConfig, PrecomputedDraws, ScoreReport};
use iscore::impute::{fit_impute, MethodSpec};
use iscore::star::{energy_i_score_star, StarConfig};
use iscore::synth::{AmputationSource, GeneratorSpec};
use iscore::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::{BenchmarkArgs, GeneratorKind, ImputeArgs, ScoreArgs, ScoringFlags, SimulateArgs, SweepArgs};

/// Contents of `manifest.json`; also accepted by `simulate --spec`.
#[derive(Serialize, Deserialize)]
struct Manifest {
    generator: GeneratorSpec,
    #[serde(default)]
    seed: Option<u64>,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
}

fn read_masked(path: &Path) -> Result<MaskedDataset> {
    read_masked_csv(open(path)?, &CsvOptions::default(), None)
}

/// Reads a spec file as either a manifest or a bare generator spec.
fn load_spec(path: &Path) -> Result<Manifest> {
    let text = read_text(path)?;
    let json = path.extension().is_some_and(|e| e == "json");
    if json {
        let value: serde_json::Value = serde_json::from_str(&text)?;
        if value.get("generator").is_some() {
            return Ok(serde_json::from_value(value)?);
        }
        return Ok(Manifest { generator: serde_json::from_value(value)?, seed: None });
    }
    let value: toml::Table = text.parse().map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let parsed = if value.contains_key("generator") {
        value.try_into::<Manifest>()
    } else {
        value.try_into::<GeneratorSpec>().map(|generator| Manifest { generator, seed: None })
    };
    parsed.map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn spec_from_flags(a: &SimulateArgs) -> Result<GeneratorSpec> {
    let kind = a.kind.ok_or_else(|| Error::Config("give a generator kind or --spec".into()))?;
    Ok(match kind {
        GeneratorKind::Uniform => GeneratorSpec::Uniform {
            n: a.n.unwrap_or(iscore::synth::UNIFORM_ROWS),
            rho: a.rho.unwrap_or(0.0),
        },
        GeneratorKind::GaussMixture => GeneratorSpec::GaussMixture {
            n_per_pattern: a.n_per_pattern.unwrap_or(iscore::synth::MIXTURE_ROWS_PER_PATTERN),
        },
        GeneratorKind::NonlinearMixture => GeneratorSpec::NonlinearMixture {
            n_per_pattern: a.n_per_pattern.unwrap_or(iscore::synth::MIXTURE_ROWS_PER_PATTERN),
        },
        GeneratorKind::StrictPropriety => {
            GeneratorSpec::StrictPropriety { n: a.n.unwrap_or(iscore::synth::STRICT_PROPRIETY_ROWS) }
        }
        GeneratorKind::Mcar => {
            let from = a.from.clone().ok_or_else(|| Error::Config("mcar needs --from".into()))?;
            let prop = a.prop.ok_or_else(|| Error::Config("mcar needs --prop".into()))?;
            GeneratorSpec::McarAmputation {
                source: AmputationSource::Csv(from),
                prop,
                n_always_observed: a.always_observed,
            }
        }
    })
}

pub fn simulate(a: SimulateArgs) -> Result<()> {
    let manifest = match &a.spec {
        Some(path) => load_spec(path)?,
        None => Manifest { generator: spec_from_flags(&a)?, seed: None },
    };
    let seed = a.seed.or(manifest.seed).unwrap_or(0);
    manifest.generator.validate()?;
    let (complete, masked) = manifest.generator.generate(seed)?;
    fs::create_dir_all(&a.out)?;
    write_complete_csv(File::create(a.out.join("complete.csv"))?, &complete, b',')?;
    write_masked_csv(File::create(a.out.join("masked.csv"))?, &masked, b',')?;
    let out = Manifest { generator: manifest.generator, seed: Some(seed) };
    fs::write(a.out.join("manifest.json"), serde_json::to_string_pretty(&out)? + "\n")?;
    println!(
        "{} rows x {} columns, {:.1}% missing -> {}",
        complete.n_rows(),
        complete.n_cols(),
        100.0 * masked.missing_fraction(),
        a.out.display()
    );
    Ok(())
}

pub fn impute(a: ImputeArgs) -> Result<()> {
    if a.replicates == 0 {
        return Err(Error::Config("-k must be at least 1".into()));
    }
    let masked = read_masked(&a.masked)?;
    let imputer = a.method.parse::<MethodSpec>()?.build()?;
    let completed = fit_impute(&*imputer, &masked, a.replicates, a.seed)?;
    fs::create_dir_all(&a.out)?;
    for (r, c) in completed.iter().enumerate() {
        write_complete_csv(File::create(a.out.join(format!("imputed_{}.csv", r + 1)))?, c, b',')?;
    }
    println!("wrote {} imputation(s) to {}", completed.len(), a.out.display());
    Ok(())
}

fn escore_config(flags: &ScoringFlags) -> EscoreConfig {
    let d = EscoreConfig::default();
    EscoreConfig {
        n_draws: flags.n_draws.unwrap_or(d.n_draws),
        min_rows: flags.min_rows.unwrap_or(d.min_rows),
        weighted: flags.weighted().unwrap_or(d.weighted),
        seed: flags.seed.unwrap_or(d.seed),
    }
}

/// Loads `<dir>/<column>/*.csv` in name order for every column that has a
/// training table.
fn load_draws(dir: &Path, masked: &MaskedDataset, idx: &PatternIndex, imputed: &CompleteDataset) -> Result<PrecomputedDraws> {
    let mut draws = PrecomputedDraws::default();
    for &j in &idx.scored_set {
        let Ok(tt) = training_table(masked, idx, imputed, j) else { continue };
        let col_dir = dir.join(masked.name(j));
        if !col_dir.is_dir() {
            continue;
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&col_dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "csv"))
            .collect();
        files.sort();
        let sets = files
            .iter()
            .map(|f| read_complete_csv(open(f)?, &CsvOptions::default(), Some(tt.table.kinds())))
            .collect::<Result<Vec<_>>>()?;
        draws.by_column.insert(masked.name(j).to_string(), sets);
    }
    Ok(draws)
}

fn export_tables(dir: &Path, masked: &MaskedDataset, idx: &PatternIndex, imputed: &CompleteDataset) -> Result<usize> {
    let mut written = 0;
    for &j in &idx.scored_set {
        match training_table(masked, idx, imputed, j) {
            Ok(tt) => {
                let col_dir = dir.join(masked.name(j));
                fs::create_dir_all(&col_dir)?;
                write_masked_csv(File::create(col_dir.join("table.csv"))?, &tt.table, b',')?;
                written += 1;
            }
            Err(e) => log::warn!("no training table for column {:?}: {e}", masked.name(j)),
        }
    }
    Ok(written)
}

fn print_report(report: &ScoreReport) {
    println!("{}", report.scorer);
    println!("{:<16} {:>14} {:>8} {:>8} {:>8}  note", "column", "score", "weight", "n_test", "n_miss");
    for v in &report.variables {
        let score = v.score.map_or_else(|| "-".to_string(), |s| format!("{s:.6}"));
        let note = match (&v.skip_reason, v.fallback) {
            (Some(r), _) => format!("skipped: {r}"),
            (None, true) => "fallback companion".to_string(),
            _ => String::new(),
        };
        println!("{:<16} {:>14} {:>8.4} {:>8} {:>8}  {note}", v.name, score, v.weight, v.n_test, v.n_missing);
    }
    println!("aggregate {:.6}", report.aggregate);
}

pub fn score(a: ScoreArgs) -> Result<()> {
    let masked = read_masked(&a.masked)?;
    let imputed = read_complete_csv(open(&a.imputed)?, &CsvOptions::default(), Some(masked.kinds()))?;
    masked.check_completion(&imputed)?;
    let idx = PatternIndex::compute(&masked)?;
    if idx.scored_set.is_empty() {
        return Err(Error::NoScorableVariables);
    }
    if let Some(dir) = &a.export_tables {
        let n = export_tables(dir, &masked, &idx, &imputed)?;
        eprintln!("exported {n} training table(s) to {}", dir.display());
        if a.refit.is_none() && a.draws.is_none() {
            return Ok(());
        }
    }
    if a.star && a.refit.is_none() {
        return Err(Error::Config("--star needs --refit".into()));
    }
    let mut cfg = escore_config(&a.flags);

    let report = match (&a.refit, &a.draws) {
        (Some(method), _) => {
            let imputer = method.parse::<MethodSpec>()?.build()?;
            energy_i_score(&masked, &imputed, &*imputer, &cfg)?
        }
        (None, Some(dir)) => {
            let draws = load_draws(dir, &masked, &idx, &imputed)?;
            if a.flags.n_draws.is_none() {
                cfg.n_draws = draws.by_column.values().map(Vec::len).min().unwrap_or(0);
                if cfg.n_draws == 0 {
                    return Err(Error::InvalidInput(format!("no draws found under {}", dir.display())));
                }
            }
            energy_i_score(&masked, &imputed, &draws, &cfg)?
        }
        (None, None) => return Err(Error::Config("give --refit METHOD or --draws DIR".into())),
    };

    let star = if a.star {
        let d = StarConfig::default();
        let star_cfg = StarConfig {
            test_fraction: a.test_fraction.unwrap_or(d.test_fraction),
            pattern_draws: a.pattern_draws,
            n_draws: cfg.n_draws,
            min_rows: cfg.min_rows,
            seed: cfg.seed,
        };
        star_cfg.validate()?;
        let imputer = a.refit.as_deref().expect("checked above").parse::<MethodSpec>()?.build()?;
        Some(energy_i_score_star(&masked, &*imputer, &star_cfg)?)
    } else {
        None
    };

    let json = match &star {
        None => serde_json::to_string_pretty(&report)?,
        Some(s) => serde_json::to_string_pretty(&serde_json::json!({
            "energy_i_score": report,
            "energy_i_score_star": s,
        }))?,
    } + "\n";
    if let Some(path) = &a.out {
        fs::write(path, &json)?;
    }
    if a.json {
        print!("{json}");
    } else {
        print_report(&report);
        if let Some(s) = &star {
            println!();
            print_report(s);
        }
    }
    Ok(())
}

fn load_run_config(path: &Path, flags: &ScoringFlags, repetitions: Option<usize>) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(n) = flags.n_draws {
        cfg.n_draws = n;
    }
    if let Some(m) = flags.min_rows {
        cfg.min_rows = m;
    }
    if let Some(w) = flags.weighted() {
        cfg.weighted = w;
    }
    if let Some(r) = repetitions {
        cfg.repetitions = r;
    }
    Ok(cfg)
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> PathBuf {
    flag.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("bench-out"))
}

pub fn benchmark(a: BenchmarkArgs) -> Result<()> {
    let mut cfg = load_run_config(&a.config, &a.flags, a.repetitions)?;
    if a.star && cfg.star.is_none() {
        cfg.star = Some(StarSettings { test_fraction: iscore::star::DEFAULT_TEST_FRACTION, pattern_draws: None, n_draws: None });
    }
    let dir = out_dir(a.out, &cfg);
    let start = Instant::now();
    let report = run_benchmark(&cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    report.write_to(&dir)?;
    let timing = serde_json::json!({ "seconds": seconds, "threads": rayon::current_num_threads() });
    fs::write(dir.join("timing.json"), serde_json::to_string_pretty(&timing)? + "\n")?;

    for t in &report.score_types {
        println!("{t}");
        for s in &report.rankings[t] {
            let mean = s.mean_standardized.map_or_else(|| "-".to_string(), |m| format!("{m:.4}"));
            let rank = s.rank.map_or_else(|| "failed".to_string(), |r| r.to_string());
            println!("  {:>6}  {:<32} {:>8}  ({} ok)", rank, s.method, mean, s.n_ok);
        }
    }
    println!("wrote {} in {seconds:.1}s", dir.display());
    Ok(())
}

pub fn sweep(a: SweepArgs) -> Result<()> {
    let cfg = load_run_config(&a.config, &a.flags, a.repetitions)?;
    let values = if a.n_list.is_empty() { default_sweep_values() } else { a.n_list };
    let dir = out_dir(a.out, &cfg);
    let report = run_sweep(&cfg, &values, a.reference)?;
    fs::create_dir_all(&dir)?;
    fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    println!("{:>6} {:>10}  ranking", "N", "agreement");
    for p in &report.points {
        println!("{:>6} {:>10.2}  {}", p.n_draws, p.agreement, p.ranking.join(" > "));
    }
    Ok(())
}
