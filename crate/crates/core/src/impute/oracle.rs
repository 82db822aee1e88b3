//! Imputers that know the data-generating distribution of the synthetic
//! benchmarks. Columns are matched by name, so they work on any sub-table
//! that keeps the generator's column names.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ContinuousCDF, Normal};

use super::{require_continuous, FittedImputer, Imputer};
use crate::data::{CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

/// I.i.d. Uniform(0, 1) draws for every missing cell.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleUniform;

/// Draws from the density `2x` on [0, 1] via `x = √U`.
#[derive(Clone, Copy, Debug, Default)]
pub struct OracleUniformSq;

struct FittedPointwise {
    data: MaskedDataset,
    transform: fn(f64) -> f64,
}

impl FittedImputer for FittedPointwise {
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset> {
        let mut rng = stream(stream_seed);
        Ok(CompleteDataset::fill_from(&self.data, |_, _| (self.transform)(rng.random::<f64>())))
    }
}

impl Imputer for OracleUniform {
    fn name(&self) -> String {
        "oracle_uniform".into()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        require_continuous(data, (0..data.n_cols()).filter(|&j| data.missing_count(j) > 0), "oracle_uniform")?;
        Ok(Box::new(FittedPointwise { data: data.clone(), transform: |u| u }))
    }
}

impl Imputer for OracleUniformSq {
    fn name(&self) -> String {
        "oracle_uniform_sq".into()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        require_continuous(data, (0..data.n_cols()).filter(|&j| data.missing_count(j) > 0), "oracle_uniform_sq")?;
        Ok(Box::new(FittedPointwise { data: data.clone(), transform: f64::sqrt }))
    }
}

/// Zero-mean Gaussian over a named block of columns with a known
/// covariance. Missing cells of the block are drawn from the conditional
/// given the row's observed block cells; missing cells outside the block are
/// independent standard normals.
#[derive(Clone, Debug)]
pub struct OracleGaussian {
    label: String,
    columns: Vec<String>,
    covariance: DMatrix<f64>,
    marginal: Marginal,
}

/// Scale on which the block is observed.
#[derive(Clone, Copy, Debug, PartialEq)]
enum Marginal {
    Normal,
    /// Gaussian copula: cells are `Φ(y)` of the latent normal `y`.
    Uniform,
}

impl OracleGaussian {
    pub fn new(label: impl Into<String>, columns: Vec<String>, covariance: Vec<Vec<f64>>) -> Result<Self> {
        let k = columns.len();
        if covariance.len() != k || covariance.iter().any(|r| r.len() != k) {
            return Err(Error::Config("covariance must be square and match the column list".into()));
        }
        let m = DMatrix::from_fn(k, k, |a, b| covariance[a][b]);
        if (0..k).any(|a| (0..a).any(|b| m[(a, b)] != m[(b, a)])) || (k > 0 && m.clone().cholesky().is_none()) {
            return Err(Error::Config("covariance must be symmetric positive definite".into()));
        }
        Ok(Self { label: label.into(), columns, covariance: m, marginal: Marginal::Normal })
    }

    /// Independent standard normal draws for every missing cell.
    pub fn independent(label: impl Into<String>) -> Self {
        Self { label: label.into(), columns: Vec::new(), covariance: DMatrix::zeros(0, 0), marginal: Marginal::Normal }
    }
}

/// Gaussian-copula uniform oracle: columns `X1..X3` are `Φ` of a Gaussian
/// with correlation `rho^|a-b|`, all other columns independent uniforms.
#[derive(Clone, Debug)]
pub struct OracleDepUniform {
    inner: OracleGaussian,
    rho: f64,
}

impl OracleDepUniform {
    pub fn new(rho: f64) -> Result<Self> {
        if !(rho > -1.0 && rho < 1.0) {
            return Err(Error::Config(format!("rho must lie in (-1, 1), got {rho}")));
        }
        let names: Vec<String> = (1..=3).map(|i| format!("X{i}")).collect();
        let cov = (0..3).map(|a: i32| (0..3).map(|b: i32| rho.powi((a - b).abs())).collect()).collect();
        let mut inner = OracleGaussian::new(format!("oracle_dep_uniform(rho={rho})"), names, cov)?;
        inner.marginal = Marginal::Uniform;
        Ok(Self { inner, rho })
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }
}

/// Conditional law of the missing block coordinates given the observed
/// ones: `mean = gain · y_obs`, `draw = mean + chol · z`.
struct Conditional {
    missing: Vec<usize>,
    observed: Vec<usize>,
    gain: DMatrix<f64>,
    chol: DMatrix<f64>,
}

fn conditional(cov: &DMatrix<f64>, observed_mask: &[bool]) -> Result<Conditional> {
    let missing: Vec<usize> = (0..observed_mask.len()).filter(|&a| !observed_mask[a]).collect();
    let observed: Vec<usize> = (0..observed_mask.len()).filter(|&a| observed_mask[a]).collect();
    let sub = |r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |a, b| cov[(r[a], c[b])]);
    let s_mm = sub(&missing, &missing);
    let s_mo = sub(&missing, &observed);
    let (gain, cond) = if observed.is_empty() {
        (DMatrix::zeros(missing.len(), 0), s_mm)
    } else {
        let s_oo = sub(&observed, &observed);
        let chol = s_oo.cholesky().ok_or_else(|| Error::Numeric("singular observed covariance".into()))?;
        // gain = S_mo S_oo^{-1}
        let gain = chol.solve(&s_mo.transpose()).transpose();
        let cond = &s_mm - &gain * s_mo.transpose();
        (gain, cond)
    };
    let cond = (&cond + cond.transpose()) * 0.5;
    let chol = cond
        .cholesky()
        .ok_or_else(|| Error::Numeric("conditional covariance is not positive definite".into()))?
        .unpack();
    Ok(Conditional { missing, observed, gain, chol })
}

struct FittedGaussian {
    data: MaskedDataset,
    /// Table column of each block member present in the table.
    block: Vec<usize>,
    /// Conditionals keyed by which block members are observed.
    conditionals: BTreeMap<Vec<bool>, Conditional>,
    marginal: Marginal,
}

const CDF_CLAMP: f64 = 1e-12;

impl Imputer for OracleGaussian {
    fn name(&self) -> String {
        self.label.clone()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        require_continuous(data, (0..data.n_cols()).filter(|&j| data.missing_count(j) > 0), &self.label)?;
        let present: Vec<(usize, usize)> = self
            .columns
            .iter()
            .enumerate()
            .filter_map(|(b, name)| data.column_index(name).map(|j| (b, j)))
            .collect();
        let members: Vec<usize> = present.iter().map(|&(b, _)| b).collect();
        let block: Vec<usize> = present.iter().map(|&(_, j)| j).collect();
        let cov = DMatrix::from_fn(members.len(), members.len(), |a, b| self.covariance[(members[a], members[b])]);
        require_continuous(data, block.iter().copied(), &self.label)?;

        if self.marginal == Marginal::Uniform {
            for &j in &block {
                if data.column(j).iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::Imputation(format!(
                        "column {:?} has values outside [0, 1]",
                        data.name(j)
                    )));
                }
            }
        }

        let mut conditionals = BTreeMap::new();
        for i in 0..data.n_rows() {
            let key: Vec<bool> = block.iter().map(|&j| !data.is_missing(i, j)).collect();
            if key.iter().all(|&o| o) || conditionals.contains_key(&key) {
                continue;
            }
            let c = conditional(&cov, &key)?;
            conditionals.insert(key, c);
        }
        Ok(Box::new(FittedGaussian { data: data.clone(), block, conditionals, marginal: self.marginal }))
    }
}

impl Imputer for OracleDepUniform {
    fn name(&self) -> String {
        self.inner.name()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, seed: u64) -> Result<Box<dyn FittedImputer>> {
        self.inner.fit(data, seed)
    }
}

impl FittedGaussian {
    fn free_draw(&self, rng: &mut StreamRng) -> f64 {
        match self.marginal {
            Marginal::Normal => rng.sample(StandardNormal),
            Marginal::Uniform => rng.random::<f64>(),
        }
    }
}

impl FittedImputer for FittedGaussian {
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset> {
        let mut rng = stream(stream_seed);
        let std = Normal::standard();
        let n = self.data.n_rows();
        let mut columns: Vec<Vec<f64>> =
            self.data.columns().iter().map(|c| c.iter().map(|v| v.unwrap_or(f64::NAN)).collect()).collect();
        for i in 0..n {
            let key: Vec<bool> = self.block.iter().map(|&j| !self.data.is_missing(i, j)).collect();
            if let Some(cond) = self.conditionals.get(&key) {
                let y_obs = DVector::from_iterator(
                    cond.observed.len(),
                    cond.observed.iter().map(|&a| {
                        let v = columns[self.block[a]][i];
                        match self.marginal {
                            Marginal::Normal => v,
                            Marginal::Uniform => std.inverse_cdf(v.clamp(CDF_CLAMP, 1.0 - CDF_CLAMP)),
                        }
                    }),
                );
                let z = DVector::from_iterator(cond.missing.len(), (0..cond.missing.len()).map(|_| rng.sample(StandardNormal)));
                let draw = &cond.gain * y_obs + &cond.chol * z;
                for (m, &a) in cond.missing.iter().enumerate() {
                    columns[self.block[a]][i] = match self.marginal {
                        Marginal::Normal => draw[m],
                        Marginal::Uniform => std.cdf(draw[m]),
                    };
                }
            }
            for j in 0..self.data.n_cols() {
                if self.data.is_missing(i, j) && !self.block.contains(&j) {
                    columns[j][i] = self.free_draw(&mut rng);
                }
            }
        }
        Ok(CompleteDataset::from_parts_unchecked(self.data.names().to_vec(), self.data.kinds().to_vec(), columns))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::impute::fit_impute;

    fn all_missing_first(n: usize, names: &[&str], fill: f64) -> MaskedDataset {
        let rows: Vec<Vec<Option<f64>>> =
            (0..n).map(|_| std::iter::once(None).chain(std::iter::repeat_n(Some(fill), names.len() - 1)).collect()).collect();
        MaskedDataset::from_rows(names, &rows).unwrap()
    }

    fn mean_sd(v: &[f64]) -> (f64, f64) {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        (m, s)
    }

    #[test]
    fn uniform_sq_mean_is_two_thirds() {
        let data = all_missing_first(20_000, &["X1", "X2"], 0.5);
        let out = fit_impute(&OracleUniformSq, &data, 1, 4).unwrap();
        let (m, s) = mean_sd(out[0].column(0));
        assert!((m - 2.0 / 3.0).abs() < 4.0 * s / (20_000f64).sqrt(), "{m}");
        let out = fit_impute(&OracleUniform, &data, 1, 4).unwrap();
        let (m, s) = mean_sd(out[0].column(0));
        assert!((m - 0.5).abs() < 4.0 * s / (20_000f64).sqrt(), "{m}");
    }

    #[test]
    fn dep_uniform_rho_zero_is_independent_uniform() {
        let n = 20_000;
        let mut rng = stream(8);
        let rows: Vec<Vec<Option<f64>>> = (0..n).map(|_| vec![None, Some(rng.random::<f64>()), Some(rng.random::<f64>())]).collect();
        let data = MaskedDataset::from_rows(&["X1", "X2", "X3"], &rows).unwrap();
        let out = fit_impute(&OracleDepUniform::new(0.0).unwrap(), &data, 1, 1).unwrap();
        let x1 = out[0].column(0);
        let (m, s) = mean_sd(x1);
        assert!((m - 0.5).abs() < 4.0 * s / (n as f64).sqrt());
        assert!((s * s - 1.0 / 12.0).abs() < 0.003);
        let x2 = out[0].column(1);
        let (m2, s2) = mean_sd(x2);
        let corr = x1.iter().zip(x2).map(|(a, b)| (a - m) * (b - m2)).sum::<f64>() / ((n - 1) as f64 * s * s2);
        assert!(corr.abs() < 0.03, "{corr}");
    }

    #[test]
    fn dep_uniform_follows_its_companion() {
        let n = 5_000;
        let rows: Vec<Vec<Option<f64>>> = (0..n).map(|i| vec![None, Some(if i % 2 == 0 { 0.95 } else { 0.05 }), None]).collect();
        let data = MaskedDataset::from_rows(&["X1", "X2", "X4"], &rows).unwrap();
        let out = fit_impute(&OracleDepUniform::new(0.7).unwrap(), &data, 1, 1).unwrap();
        let hi: Vec<f64> = (0..n).step_by(2).map(|i| out[0].get(i, 0)).collect();
        let lo: Vec<f64> = (1..n).step_by(2).map(|i| out[0].get(i, 0)).collect();
        assert!(mean_sd(&hi).0 > 0.7 && mean_sd(&lo).0 < 0.3);
        assert!(out[0].column(2).iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn dep_uniform_rejects_out_of_range_companions() {
        let data = MaskedDataset::from_rows(&["X1", "X2"], &[vec![None, Some(1.5)], vec![Some(0.2), Some(0.3)]]).unwrap();
        assert!(OracleDepUniform::new(0.7).unwrap().fit(&data, 0).is_err());
        assert!(OracleDepUniform::new(1.0).is_err());
    }

    #[test]
    fn bivariate_conditional_moments() {
        let n = 20_000;
        let rows: Vec<Vec<Option<f64>>> = (0..n).map(|_| vec![None, Some(1.0), Some(3.0)]).collect();
        let data = MaskedDataset::from_rows(&["X1", "X2", "X3"], &rows).unwrap();
        let oracle = OracleGaussian::new("c", vec!["X1".into(), "X2".into()], vec![vec![1.0, 0.7], vec![0.7, 1.0]]).unwrap();
        let out = fit_impute(&oracle, &data, 1, 6).unwrap();
        let (m, s) = mean_sd(out[0].column(0));
        assert!((m - 0.7).abs() < 0.02, "{m}");
        assert!((s * s - 0.51).abs() < 0.02, "{s}");

        let indep = OracleGaussian::independent("n");
        let out = fit_impute(&indep, &data, 1, 6).unwrap();
        let (m, s) = mean_sd(out[0].column(0));
        assert!(m.abs() < 0.03 && (s - 1.0).abs() < 0.02);
    }

    #[test]
    fn oracles_reject_categorical_targets() {
        let kind = crate::data::ColumnKind::categorical(["a"]).unwrap();
        let data = MaskedDataset::new(
            vec!["c".into(), "x".into()],
            vec![kind, crate::data::ColumnKind::Continuous],
            vec![vec![None, Some(0.0)], vec![Some(1.0), Some(2.0)]],
        )
        .unwrap();
        assert!(OracleUniform.fit(&data, 0).is_err());
    }
}
