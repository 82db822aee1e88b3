//! Synthetic benchmark generators and a simple MCAR amputer.
//!
//! All generators name their columns `X1..Xd` and return the complete table
//! together with its masked copy.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{read_complete_csv, ColumnKind, CompleteDataset, CsvOptions, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::{derived_stream, sample_without_replacement, tag, StreamRng};

pub const UNIFORM_ROWS: usize = 2000;
pub const MIXTURE_ROWS_PER_PATTERN: usize = 500;
pub const STRICT_PROPRIETY_ROWS: usize = 2000;
/// Standard deviation of the mixture noise (variance 4).
pub const MIXTURE_NOISE_SD: f64 = 2.0;
pub const MIXTURE_COEFFICIENTS: [f64; 3] = [0.5, 1.0, 1.5];
pub const MIXTURE_MEANS: [f64; 3] = [5.0, 0.0, -5.0];
pub const STRICT_PROPRIETY_COV: f64 = 0.7;

/// Paired complete and masked tables.
pub type Generated = (CompleteDataset, MaskedDataset);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorSpec {
    /// Six uniform columns with `x1`-dependent patterns; `rho != 0` couples
    /// the first three columns through a Gaussian copula.
    Uniform {
        #[serde(default = "uniform_rows")]
        n: usize,
        #[serde(default)]
        rho: f64,
    },
    GaussMixture {
        #[serde(default = "mixture_rows")]
        n_per_pattern: usize,
    },
    NonlinearMixture {
        #[serde(default = "mixture_rows")]
        n_per_pattern: usize,
    },
    StrictPropriety {
        #[serde(default = "strict_rows")]
        n: usize,
    },
    /// MCAR amputation of another generator's complete table or of a
    /// complete CSV file.
    McarAmputation {
        source: AmputationSource,
        prop: f64,
        #[serde(default)]
        n_always_observed: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmputationSource {
    Generator(Box<GeneratorSpec>),
    Csv(PathBuf),
}

fn uniform_rows() -> usize {
    UNIFORM_ROWS
}

fn mixture_rows() -> usize {
    MIXTURE_ROWS_PER_PATTERN
}

fn strict_rows() -> usize {
    STRICT_PROPRIETY_ROWS
}

impl GeneratorSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match self {
            GeneratorSpec::Uniform { n, rho } => {
                if *n == 0 {
                    return bad("uniform generator needs n >= 1".into());
                }
                if !(*rho > -1.0 && *rho < 1.0) {
                    return bad(format!("rho must lie in (-1, 1), got {rho}"));
                }
            }
            GeneratorSpec::GaussMixture { n_per_pattern } | GeneratorSpec::NonlinearMixture { n_per_pattern } => {
                if *n_per_pattern == 0 {
                    return bad("mixture generators need n_per_pattern >= 1".into());
                }
            }
            GeneratorSpec::StrictPropriety { n } => {
                if *n == 0 {
                    return bad("strict_propriety generator needs n >= 1".into());
                }
            }
            GeneratorSpec::McarAmputation { source, prop, .. } => {
                if !(*prop >= 0.0 && *prop < 1.0) {
                    return bad(format!("missing proportion must lie in [0, 1), got {prop}"));
                }
                if let AmputationSource::Generator(g) = source {
                    g.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Generates the pair under `seed`.
    pub fn generate(&self, seed: u64) -> Result<Generated> {
        self.validate()?;
        match self {
            GeneratorSpec::Uniform { n, rho } => gen_uniform(*n, *rho, seed),
            GeneratorSpec::GaussMixture { n_per_pattern } => gen_gauss_mixture(*n_per_pattern, seed),
            GeneratorSpec::NonlinearMixture { n_per_pattern } => gen_nonlinear_mixture(*n_per_pattern, seed),
            GeneratorSpec::StrictPropriety { n } => gen_strict_propriety(*n, seed),
            GeneratorSpec::McarAmputation { source, prop, n_always_observed } => {
                let complete = match source {
                    AmputationSource::Generator(g) => g.generate(seed)?.0,
                    AmputationSource::Csv(path) => {
                        read_complete_csv(std::fs::File::open(path)?, &CsvOptions::default(), None)?
                    }
                };
                let masked = mcar_amputate(&complete, *prop, *n_always_observed, seed)?;
                Ok((complete, masked))
            }
        }
    }
}

fn names(d: usize) -> Vec<String> {
    (1..=d).map(|j| format!("X{j}")).collect()
}

/// Builds the pair from row-major values and per-row masks.
fn assemble(rows: Vec<Vec<f64>>, masks: Vec<Vec<bool>>) -> Result<Generated> {
    let d = rows.first().map_or(0, Vec::len);
    let columns = (0..d).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    let complete = CompleteDataset::new(names(d), vec![ColumnKind::Continuous; d], columns)?;
    let masked = MaskedDataset::from_complete(&complete, |i, j| masks[i][j]);
    Ok((complete, masked))
}

/// Lower Cholesky factor of the Toeplitz correlation `rho^|a-b|`.
fn toeplitz_factor(k: usize, rho: f64) -> Result<DMatrix<f64>> {
    DMatrix::from_fn(k, k, |a, b| rho.powi((a as i32 - b as i32).abs()))
        .cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Numeric(format!("Toeplitz matrix with rho={rho} is not positive definite")))
}

fn correlated_normals(factor: &DMatrix<f64>, rng: &mut StreamRng) -> DVector<f64> {
    let z = DVector::from_iterator(factor.nrows(), (0..factor.nrows()).map(|_| rng.sample::<f64, _>(StandardNormal)));
    factor * z
}

/// Six columns on [0, 1]; row patterns depend on `x1`:
/// nothing missing with probability `x1/3`, `X2` missing with probability
/// `2/3 - x1/3`, `X1` missing with probability `1/3`.
pub fn gen_uniform(n: usize, rho: f64, seed: u64) -> Result<Generated> {
    let mut rng = derived_stream(seed, &[tag::GENERATE]);
    let factor = if rho != 0.0 { Some(toeplitz_factor(3, rho)?) } else { None };
    let phi = Normal::standard();
    let mut rows = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row: Vec<f64> = Vec::with_capacity(6);
        match &factor {
            Some(l) => row.extend(correlated_normals(l, &mut rng).iter().map(|&y| phi.cdf(y))),
            None => row.extend((0..3).map(|_| rng.random::<f64>())),
        }
        row.extend((0..3).map(|_| rng.random::<f64>()));
        let x1 = row[0];
        let u: f64 = rng.random();
        let mut mask = vec![false; 6];
        if u >= 2.0 / 3.0 {
            mask[0] = true;
        } else if u >= x1 / 3.0 {
            mask[1] = true;
        }
        rows.push(row);
        masks.push(mask);
    }
    assemble(rows, masks)
}

/// The nonlinear map of the mixture benchmark.
pub fn nonlinear_f(x: [f64; 3]) -> [f64; 3] {
    [x[2] * (x[0] * x[1]).sin(), x[1].max(0.0), x[0].atan() * x[1].atan()]
}

fn mixture(n_per_pattern: usize, seed: u64, link: impl Fn([f64; 3]) -> [f64; 3]) -> Result<Generated> {
    let mut rng = derived_stream(seed, &[tag::GENERATE]);
    let factor = toeplitz_factor(3, 0.5)?;
    let mut rows = Vec::with_capacity(3 * n_per_pattern);
    let mut masks = Vec::with_capacity(3 * n_per_pattern);
    for (k, &mu) in MIXTURE_MEANS.iter().enumerate() {
        for _ in 0..n_per_pattern {
            let y = correlated_normals(&factor, &mut rng);
            let obs = [mu + y[0], mu + y[1], mu + y[2]];
            let mean = link(obs);
            let mut row: Vec<f64> =
                mean.iter().map(|m| m + MIXTURE_NOISE_SD * rng.sample::<f64, _>(StandardNormal)).collect();
            row.extend(obs);
            let mut mask = vec![false; 6];
            mask[k] = true;
            rows.push(row);
            masks.push(mask);
        }
    }
    assemble(rows, masks)
}

/// Three Gaussian clusters in `X4..X6` (one per pattern, pattern k missing
/// `Xk`), with `X1..X3` linear in `X4..X6` plus noise.
pub fn gen_gauss_mixture(n_per_pattern: usize, seed: u64) -> Result<Generated> {
    mixture(n_per_pattern, seed, |x| {
        let b: f64 = MIXTURE_COEFFICIENTS.iter().zip(x).map(|(c, v)| c * v).sum();
        [b; 3]
    })
}

/// As [`gen_gauss_mixture`] with `X1..X3 = nonlinear_f(X4..X6) + noise`.
pub fn gen_nonlinear_mixture(n_per_pattern: usize, seed: u64) -> Result<Generated> {
    mixture(n_per_pattern, seed, nonlinear_f)
}

/// Six standard normals, `X1` and `X2` with covariance 0.7. Each row misses
/// `X1`, misses `X2` or is complete, with equal probability.
pub fn gen_strict_propriety(n: usize, seed: u64) -> Result<Generated> {
    let mut rng = derived_stream(seed, &[tag::GENERATE]);
    let c = STRICT_PROPRIETY_COV;
    let s = (1.0 - c * c).sqrt();
    let mut rows = Vec::with_capacity(n);
    let mut masks = Vec::with_capacity(n);
    for _ in 0..n {
        let z: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let mut row = z.clone();
        row[1] = c * z[0] + s * z[1];
        let mut mask = vec![false; 6];
        match rng.random_range(0..3) {
            0 => mask[0] = true,
            1 => mask[1] = true,
            _ => {}
        }
        rows.push(row);
        masks.push(mask);
    }
    assemble(rows, masks)
}

/// Per-cell missing probability that yields an overall fraction `prop`
/// when `n_always_observed` of `d` columns stay complete.
pub fn amputation_rate(prop: f64, d: usize, n_always_observed: usize) -> f64 {
    prop * d as f64 / (d - n_always_observed) as f64
}

/// Blanks cells independently at the rate that gives an overall missing
/// fraction of `prop`, keeping `n_always_observed` randomly chosen columns
/// complete. Rows whose amputable cells all come out missing are redrawn.
pub fn mcar_amputate(complete: &CompleteDataset, prop: f64, n_always_observed: usize, seed: u64) -> Result<MaskedDataset> {
    let d = complete.n_cols();
    if !(0.0..1.0).contains(&prop) {
        return Err(Error::Config(format!("missing proportion must lie in [0, 1), got {prop}")));
    }
    if prop == 0.0 {
        return Ok(complete.to_masked());
    }
    if n_always_observed >= d {
        return Err(Error::Config(format!("{n_always_observed} always-observed columns leave none of {d} to amputate")));
    }
    let q = amputation_rate(prop, d, n_always_observed);
    if q >= 1.0 {
        return Err(Error::Config(format!(
            "proportion {prop} needs a per-cell rate of {q}, which is not below 1"
        )));
    }
    let mut rng = derived_stream(seed, &[tag::AMPUTE]);
    let cols: Vec<usize> = (0..d).collect();
    let mut keep = vec![false; d];
    for j in sample_without_replacement(&cols, n_always_observed, &mut rng) {
        keep[j] = true;
    }
    let amputable: Vec<usize> = cols.iter().copied().filter(|&j| !keep[j]).collect();
    let mut masks = Vec::with_capacity(complete.n_rows());
    for _ in 0..complete.n_rows() {
        let row = loop {
            let mut mask = vec![false; d];
            for &j in &amputable {
                mask[j] = rng.random::<f64>() < q;
            }
            if !amputable.iter().all(|&j| mask[j]) {
                break mask;
            }
        };
        masks.push(row);
    }
    Ok(MaskedDataset::from_complete(complete, |i, j| masks[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unmask_matches(pair: &Generated) {
        let (complete, masked) = pair;
        masked.check_completion(complete).unwrap();
    }

    #[test]
    fn uniform_shapes_and_replay() {
        let pair = gen_uniform(300, 0.0, 5).unwrap();
        assert_eq!((pair.0.n_rows(), pair.0.n_cols()), (300, 6));
        unmask_matches(&pair);
        assert_eq!(pair, gen_uniform(300, 0.0, 5).unwrap());
        assert!(pair.0.columns().iter().flatten().all(|v| (0.0..=1.0).contains(v)));
        for i in 0..300 {
            let m = pair.1.mask_row(i);
            assert!(m[2..].iter().all(|&b| !b) && !(m[0] && m[1]));
        }
    }

    #[test]
    fn complete_rows_favour_large_x1() {
        let (complete, masked) = gen_uniform(20_000, 0.0, 1).unwrap();
        let x1: Vec<f64> = (0..20_000).filter(|&i| masked.mask_row(i).iter().all(|&b| !b)).map(|i| complete.get(i, 0)).collect();
        let mean = x1.iter().sum::<f64>() / x1.len() as f64;
        assert!((mean - 2.0 / 3.0).abs() < 0.015, "{mean}");
    }

    #[test]
    fn dependent_uniform_is_correlated() {
        let (complete, _) = gen_uniform(5000, 0.7, 2).unwrap();
        let r = corr(complete.column(0), complete.column(1));
        // Spearman-type correlation of a 0.7 Gaussian copula is about 0.68
        assert!(r > 0.6 && r < 0.75, "{r}");
        assert!(corr(complete.column(0), complete.column(3)).abs() < 0.05);
    }

    fn corr(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn mixture_counts_and_conditional_mean() {
        let (complete, masked) = gen_gauss_mixture(500, 3).unwrap();
        assert_eq!(complete.n_rows(), 1500);
        for k in 0..3 {
            assert_eq!(masked.missing_count(k), 500);
        }
        assert_eq!(masked.missing_fraction(), 1.0 / 6.0);
        // first cluster: E[X1] = (0.5 + 1 + 1.5) * 5 = 15
        let m: f64 = (0..500).map(|i| complete.get(i, 0)).sum::<f64>() / 500.0;
        assert!((m - 15.0).abs() < 0.5, "{m}");
        unmask_matches(&(complete, masked));
    }

    #[test]
    fn nonlinear_map_values() {
        assert_eq!(nonlinear_f([0.0, 0.0, 0.0]), [0.0, 0.0, 0.0]);
        let v = nonlinear_f([1.0, 1.0, 1.0]);
        assert!((v[0] - 0.841_470_984_807_896_5).abs() < 1e-15);
        assert_eq!(v[1], 1.0);
        assert!((v[2] - 0.616_850_275_068_084_9).abs() < 1e-15);
        assert_eq!(nonlinear_f([0.3, -2.0, 1.0])[1], 0.0);
        let pair = gen_nonlinear_mixture(50, 1).unwrap();
        assert_eq!(pair.0.n_rows(), 150);
        unmask_matches(&pair);
    }

    #[test]
    fn strict_propriety_structure() {
        let (complete, masked) = gen_strict_propriety(20_000, 4).unwrap();
        assert!((masked.missing_fraction() - 1.0 / 9.0).abs() < 0.005);
        assert!((corr(complete.column(0), complete.column(1)) - 0.7).abs() < 0.02);
        assert!(corr(complete.column(2), complete.column(4)).abs() < 0.03);
    }

    #[test]
    fn amputation_rate_and_fraction() {
        assert!((amputation_rate(0.067, 9, 4) - 0.1206).abs() < 1e-12);
        let rows: Vec<Vec<f64>> = (0..9915).map(|i| (0..9).map(|j| (i * 9 + j) as f64).collect()).collect();
        let names: Vec<String> = names(9);
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let complete = CompleteDataset::from_rows(&refs, &rows).unwrap();
        let masked = mcar_amputate(&complete, 0.067, 4, 8).unwrap();
        assert!((masked.missing_fraction() - 0.067).abs() < 0.005, "{}", masked.missing_fraction());
        assert_eq!((0..9).filter(|&j| masked.missing_count(j) == 0).count(), 4);
        assert_eq!(mcar_amputate(&complete, 0.0, 4, 8).unwrap(), complete.to_masked());
        assert!(mcar_amputate(&complete, 0.6, 4, 8).is_err());
    }

    #[test]
    fn spec_round_trip() {
        let spec = GeneratorSpec::McarAmputation {
            source: AmputationSource::Generator(Box::new(GeneratorSpec::StrictPropriety { n: 50 })),
            prop: 0.1,
            n_always_observed: 2,
        };
        let json = serde_json::to_string(&spec).unwrap();
        let back: GeneratorSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
        assert_eq!(back.generate(3).unwrap(), spec.generate(3).unwrap());
        let defaults: GeneratorSpec = serde_json::from_str(r#"{"kind":"uniform"}"#).unwrap();
        assert_eq!(defaults, GeneratorSpec::Uniform { n: 2000, rho: 0.0 });
        assert!(GeneratorSpec::Uniform { n: 5, rho: 1.0 }.generate(0).is_err());
    }
}
