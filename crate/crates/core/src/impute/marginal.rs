use rand::Rng;

use super::{FittedImputer, Imputer};
use crate::data::{CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::stream;

/// Fills each missing cell with a value drawn uniformly from the observed
/// values of its own column.
#[derive(Clone, Copy, Debug, Default)]
pub struct MarginalSample;

struct FittedMarginal {
    data: MaskedDataset,
    pools: Vec<Vec<f64>>,
}

/// Observed values of every column, failing on columns with missing cells
/// but nothing observed.
pub(crate) fn observed_pools(data: &MaskedDataset) -> Result<Vec<Vec<f64>>> {
    (0..data.n_cols())
        .map(|j| {
            let pool: Vec<f64> = data.column(j).iter().flatten().copied().collect();
            if pool.is_empty() && data.n_rows() > 0 {
                return Err(Error::Imputation(format!("column {:?} has no observed values", data.name(j))));
            }
            Ok(pool)
        })
        .collect()
}

impl Imputer for MarginalSample {
    fn name(&self) -> String {
        "marginal_sample".into()
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        Ok(Box::new(FittedMarginal { pools: observed_pools(data)?, data: data.clone() }))
    }
}

impl FittedImputer for FittedMarginal {
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset> {
        let mut rng = stream(stream_seed);
        Ok(CompleteDataset::fill_from(&self.data, |_, j| {
            let pool = &self.pools[j];
            pool[rng.random_range(0..pool.len())]
        }))
    }
}
