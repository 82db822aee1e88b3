//! Fully conditional specification with linear-Gaussian conditionals.
//!
//! Missing cells start from marginal draws. Each sweep then visits the
//! incomplete columns in ascending order of missing count (ties by index),
//! regresses the column on all other columns over its observed rows, and
//! refills its missing cells with the fitted value, plus Gaussian noise with
//! the residual standard deviation in the stochastic variant. Categorical
//! predictors enter as one-hot dummies without the first level; categorical
//! targets are redrawn from their observed marginal.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::marginal::observed_pools;
use super::{FittedImputer, Imputer};
use crate::data::{ColumnKind, CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::{stream, StreamRng};

pub const DEFAULT_ITERATIONS: usize = 5;
const RIDGE: f64 = 1e-6;

/// Gaussian chained-equations imputation with noise: draws from the fitted
/// conditional normal of each column.
#[derive(Clone, Copy, Debug)]
pub struct FcsGaussian {
    iterations: usize,
}

/// Chained-equations regression imputation: fills with conditional means only.
#[derive(Clone, Copy, Debug)]
pub struct FcsRegressionPredict {
    iterations: usize,
}

impl FcsGaussian {
    pub fn new(iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Config("FCS needs at least one iteration".into()));
        }
        Ok(Self { iterations })
    }
}

impl Default for FcsGaussian {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS }
    }
}

impl FcsRegressionPredict {
    pub fn new(iterations: usize) -> Result<Self> {
        if iterations == 0 {
            return Err(Error::Config("FCS needs at least one iteration".into()));
        }
        Ok(Self { iterations })
    }
}

impl Default for FcsRegressionPredict {
    fn default() -> Self {
        Self { iterations: DEFAULT_ITERATIONS }
    }
}

struct Chain {
    data: MaskedDataset,
    pools: Vec<Vec<f64>>,
    order: Vec<usize>,
    sweeps: usize,
    noise: bool,
}

impl Chain {
    fn new(data: &MaskedDataset, iterations: usize, noise: bool) -> Result<Self> {
        let pools = observed_pools(data)?;
        let mut order: Vec<usize> = (0..data.n_cols()).filter(|&j| data.missing_count(j) > 0).collect();
        order.sort_by_key(|&j| (data.missing_count(j), j));
        // with a single incomplete column the predictors never change
        let sweeps = if order.len() <= 1 { 1 } else { iterations };
        Ok(Self { data: data.clone(), pools, order, sweeps, noise })
    }

    fn run(&self, rng: &mut StreamRng) -> Result<CompleteDataset> {
        let mut current = CompleteDataset::fill_from(&self.data, |_, j| {
            let pool = &self.pools[j];
            pool[rng.random_range(0..pool.len())]
        });
        for _ in 0..self.sweeps {
            for &t in &self.order {
                self.update_column(&mut current, t, rng)?;
            }
        }
        Ok(current)
    }

    fn update_column(&self, current: &mut CompleteDataset, t: usize, rng: &mut StreamRng) -> Result<()> {
        let missing: Vec<usize> = (0..self.data.n_rows()).filter(|&i| self.data.is_missing(i, t)).collect();
        let fills: Vec<f64> = if self.data.kind(t).is_categorical() {
            let pool = &self.pools[t];
            missing.iter().map(|_| pool[rng.random_range(0..pool.len())]).collect()
        } else {
            let observed: Vec<usize> = (0..self.data.n_rows()).filter(|&i| !self.data.is_missing(i, t)).collect();
            let design = |i: usize| design_row(current, t, i);
            let y: Vec<f64> = observed.iter().map(|&i| current.get(i, t)).collect();
            let fit = least_squares(observed.iter().map(|&i| design(i)), &y)?;
            missing
                .iter()
                .map(|&i| {
                    let mean = dot(&fit.coef, &design(i));
                    if self.noise {
                        let z: f64 = rng.sample(StandardNormal);
                        mean + fit.sigma * z
                    } else {
                        mean
                    }
                })
                .collect()
        };
        let mut cols = current.columns().to_vec();
        for (&i, v) in missing.iter().zip(fills) {
            cols[t][i] = v;
        }
        *current = CompleteDataset::from_parts_unchecked(current.names().to_vec(), current.kinds().to_vec(), cols);
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Intercept plus every column except `target`, categorical columns as
/// dummies for levels 2..p.
fn design_row(data: &CompleteDataset, target: usize, i: usize) -> Vec<f64> {
    let mut row = vec![1.0];
    for (j, kind) in data.kinds().iter().enumerate() {
        if j == target {
            continue;
        }
        let v = data.get(i, j);
        match kind {
            ColumnKind::Continuous => row.push(v),
            ColumnKind::Categorical { levels } => {
                row.extend((1..levels.len()).map(|l| if v as usize == l { 1.0 } else { 0.0 }))
            }
        }
    }
    row
}

pub(crate) struct LinearFit {
    pub coef: Vec<f64>,
    pub sigma: f64,
}

/// Ordinary least squares through the normal equations, with a small ridge
/// when the cross-product matrix is numerically singular.
pub(crate) fn least_squares(rows: impl Iterator<Item = Vec<f64>> + Clone, y: &[f64]) -> Result<LinearFit> {
    let n = y.len();
    let p = rows.clone().next().map_or(0, |r| r.len());
    if n == 0 || p == 0 {
        return Err(Error::Imputation("regression without observed rows".into()));
    }
    let mut xtx = DMatrix::<f64>::zeros(p, p);
    let mut xty = DVector::<f64>::zeros(p);
    for (row, &yi) in rows.clone().zip(y) {
        for a in 0..p {
            xty[a] += row[a] * yi;
            for b in 0..=a {
                xtx[(a, b)] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtx[(b, a)] = xtx[(a, b)];
        }
    }
    let scale = (0..p).map(|a| xtx[(a, a)]).fold(0.0, f64::max).max(1.0);
    let well_conditioned = |chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>| {
        let l = chol.l_dirty();
        (0..p).all(|a| l[(a, a)] * l[(a, a)] > 1e-10 * scale)
    };
    let solved = match xtx.clone().cholesky() {
        Some(chol) if well_conditioned(&chol) => chol.solve(&xty),
        _ => {
            let mut ridged = xtx.clone();
            for a in 0..p {
                ridged[(a, a)] += RIDGE * xtx[(a, a)].max(scale * 1e-12);
            }
            ridged
                .cholesky()
                .ok_or_else(|| Error::Numeric("ridge regression failed".into()))?
                .solve(&xty)
        }
    };
    let coef: Vec<f64> = solved.iter().copied().collect();
    if coef.iter().any(|c| !c.is_finite()) {
        return Err(Error::Numeric("non-finite regression coefficients".into()));
    }
    let rss: f64 = rows.zip(y).map(|(r, &yi)| (yi - dot(&coef, &r)).powi(2)).sum();
    let dof = n.saturating_sub(p).max(1);
    Ok(LinearFit { coef, sigma: (rss / dof as f64).sqrt() })
}

struct FittedGaussian {
    chain: Chain,
}

impl Imputer for FcsGaussian {
    fn name(&self) -> String {
        "fcs_gaussian".into()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        Ok(Box::new(FittedGaussian { chain: Chain::new(data, self.iterations, true)? }))
    }
}

impl FittedImputer for FittedGaussian {
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset> {
        self.chain.run(&mut stream(stream_seed))
    }
}

struct FittedPredict {
    completed: CompleteDataset,
}

impl Imputer for FcsRegressionPredict {
    fn name(&self) -> String {
        "fcs_regression_predict".into()
    }

    fn multiple_capable(&self) -> bool {
        false
    }

    /// The chain runs once here, seeded by the fit seed; every replicate is
    /// a copy of its result.
    fn fit(&self, data: &MaskedDataset, seed: u64) -> Result<Box<dyn FittedImputer>> {
        let chain = Chain::new(data, self.iterations, false)?;
        Ok(Box::new(FittedPredict { completed: chain.run(&mut stream(seed))? }))
    }
}

impl FittedImputer for FittedPredict {
    fn impute_stream(&self, _stream_seed: u64) -> Result<CompleteDataset> {
        Ok(self.completed.clone())
    }
}
