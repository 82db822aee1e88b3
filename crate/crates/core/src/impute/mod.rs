//! Imputation distributions.
//!
//! An [`Imputer`] is fit on an incomplete table and then produces completed
//! copies of it. Replicate `r` of `impute(k, seed)` is drawn from the stream
//! `derive_seed(seed, [REPLICATE, r])`, so a replicate does not depend on
//! how many others were requested or in which order they were computed.

mod fcs;
mod knn;
mod marginal;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use fcs::{FcsGaussian, FcsRegressionPredict};
pub use knn::KnnImputer;
pub use marginal::MarginalSample;
pub use oracle::{OracleDepUniform, OracleGaussian, OracleUniform, OracleUniformSq};

use crate::data::{CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, tag};

pub trait Imputer: Send + Sync {
    fn name(&self) -> String;

    /// Whether different replicates can differ. Single-imputation methods
    /// return identical replicates.
    fn multiple_capable(&self) -> bool;

    fn fit(&self, data: &MaskedDataset, seed: u64) -> Result<Box<dyn FittedImputer>>;
}

pub trait FittedImputer: Send + Sync {
    /// One completed copy of the training table drawn from `stream_seed`.
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset>;

    fn impute(&self, replicates: usize, seed: u64) -> Result<Vec<CompleteDataset>> {
        (0..replicates)
            .map(|r| self.impute_stream(derive_seed(seed, &[tag::REPLICATE, r as u64])))
            .collect()
    }
}

/// Fits `imputer` and draws `replicates` completions in one call.
pub fn fit_impute<I: Imputer + ?Sized>(imputer: &I, data: &MaskedDataset, replicates: usize, seed: u64) -> Result<Vec<CompleteDataset>> {
    let fitted = imputer.fit(data, derive_seed(seed, &[tag::FIT]))?;
    fitted.impute(replicates, seed)
}

pub(crate) fn require_continuous(data: &MaskedDataset, cols: impl IntoIterator<Item = usize>, who: &str) -> Result<()> {
    for j in cols {
        if data.kind(j).is_categorical() {
            return Err(Error::Imputation(format!(
                "{who} cannot impute categorical column {:?}",
                data.name(j)
            )));
        }
    }
    Ok(())
}

/// A serializable description of a built-in imputer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MethodSpec {
    FcsGaussian {
        #[serde(default = "default_iterations")]
        iterations: usize,
    },
    FcsRegressionPredict {
        #[serde(default = "default_iterations")]
        iterations: usize,
    },
    MarginalSample,
    Knn {
        #[serde(default = "default_neighbors")]
        k: usize,
    },
    OracleUniform,
    OracleUniformSq,
    OracleDepUniform {
        #[serde(default = "default_rho")]
        rho: f64,
    },
    /// Independent standard normal draws for every missing cell.
    OracleNormal,
    /// Standard normals where the columns `X1` and `X2` have correlation `rho`.
    OracleBivariateGaussian { rho: f64 },
    /// Zero-mean Gaussian with the given covariance over the named columns;
    /// unlisted columns are independent standard normals.
    OracleGaussian { columns: Vec<String>, covariance: Vec<Vec<f64>> },
}

fn default_iterations() -> usize {
    fcs::DEFAULT_ITERATIONS
}

fn default_neighbors() -> usize {
    knn::DEFAULT_NEIGHBORS
}

fn default_rho() -> f64 {
    0.7
}

impl MethodSpec {
    pub fn build(&self) -> Result<Box<dyn Imputer>> {
        Ok(match self {
            MethodSpec::FcsGaussian { iterations } => Box::new(FcsGaussian::new(*iterations)?),
            MethodSpec::FcsRegressionPredict { iterations } => Box::new(FcsRegressionPredict::new(*iterations)?),
            MethodSpec::MarginalSample => Box::new(MarginalSample),
            MethodSpec::Knn { k } => Box::new(KnnImputer::new(*k)?),
            MethodSpec::OracleUniform => Box::new(OracleUniform),
            MethodSpec::OracleUniformSq => Box::new(OracleUniformSq),
            MethodSpec::OracleDepUniform { rho } => Box::new(OracleDepUniform::new(*rho)?),
            MethodSpec::OracleNormal => Box::new(OracleGaussian::independent("oracle_normal")),
            MethodSpec::OracleBivariateGaussian { rho } => Box::new(OracleGaussian::new(
                format!("oracle_bivariate_gaussian(rho={rho})"),
                vec!["X1".into(), "X2".into()],
                vec![vec![1.0, *rho], vec![*rho, 1.0]],
            )?),
            MethodSpec::OracleGaussian { columns, covariance } => {
                Box::new(OracleGaussian::new("oracle_gaussian", columns.clone(), covariance.clone())?)
            }
        })
    }

    /// Short label used in reports.
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for MethodSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MethodSpec::FcsGaussian { iterations } if *iterations == default_iterations() => write!(f, "fcs_gaussian"),
            MethodSpec::FcsGaussian { iterations } => write!(f, "fcs_gaussian:iterations={iterations}"),
            MethodSpec::FcsRegressionPredict { iterations } if *iterations == default_iterations() => {
                write!(f, "fcs_regression_predict")
            }
            MethodSpec::FcsRegressionPredict { iterations } => {
                write!(f, "fcs_regression_predict:iterations={iterations}")
            }
            MethodSpec::MarginalSample => write!(f, "marginal_sample"),
            MethodSpec::Knn { k } if *k == default_neighbors() => write!(f, "knn"),
            MethodSpec::Knn { k } => write!(f, "knn:k={k}"),
            MethodSpec::OracleUniform => write!(f, "oracle_uniform"),
            MethodSpec::OracleUniformSq => write!(f, "oracle_uniform_sq"),
            MethodSpec::OracleDepUniform { rho } => write!(f, "oracle_dep_uniform:rho={rho}"),
            MethodSpec::OracleNormal => write!(f, "oracle_normal"),
            MethodSpec::OracleBivariateGaussian { rho } => write!(f, "oracle_bivariate_gaussian:rho={rho}"),
            MethodSpec::OracleGaussian { columns, .. } => write!(f, "oracle_gaussian[{}]", columns.join("|")),
        }
    }
}

impl FromStr for MethodSpec {
    type Err = Error;

    /// Parses `name` or `name:key=value,key=value`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, params) = s.split_once(':').unwrap_or((s, ""));
        let mut kv = std::collections::BTreeMap::new();
        for part in params.split(',').filter(|p| !p.trim().is_empty()) {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value in {part:?}")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut take = |key: &str| kv.remove(key);
        fn num<T: FromStr>(key: &str, v: String) -> Result<T> {
            v.parse().map_err(|_| Error::Config(format!("bad value {v:?} for {key}")))
        }
        let spec = match name.trim() {
            "fcs_gaussian" => MethodSpec::FcsGaussian {
                iterations: take("iterations").map(|v| num("iterations", v)).transpose()?.unwrap_or_else(default_iterations),
            },
            "fcs_regression_predict" => MethodSpec::FcsRegressionPredict {
                iterations: take("iterations").map(|v| num("iterations", v)).transpose()?.unwrap_or_else(default_iterations),
            },
            "marginal_sample" => MethodSpec::MarginalSample,
            "knn" => MethodSpec::Knn {
                k: take("k").map(|v| num("k", v)).transpose()?.unwrap_or_else(default_neighbors),
            },
            "oracle_uniform" => MethodSpec::OracleUniform,
            "oracle_uniform_sq" => MethodSpec::OracleUniformSq,
            "oracle_dep_uniform" => MethodSpec::OracleDepUniform {
                rho: take("rho").map(|v| num("rho", v)).transpose()?.unwrap_or_else(default_rho),
            },
            "oracle_normal" => MethodSpec::OracleNormal,
            "oracle_bivariate_gaussian" => MethodSpec::OracleBivariateGaussian {
                rho: take("rho").map(|v| num("rho", v)).transpose()?.unwrap_or_else(default_rho),
            },
            other => return Err(Error::Config(format!("unknown imputation method {other:?}"))),
        };
        if let Some(k) = kv.keys().next() {
            return Err(Error::Config(format!("unknown parameter {k:?} for {name}")));
        }
        Ok(spec)
    }
}
