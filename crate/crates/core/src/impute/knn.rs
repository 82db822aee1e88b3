use rand::Rng;

use super::{FittedImputer, Imputer};
use crate::data::{CompleteDataset, MaskedDataset};
use crate::error::{Error, Result};
use crate::rng::stream;

pub const DEFAULT_NEIGHBORS: usize = 5;

/// Nearest-neighbour donor imputation.
///
/// For a missing cell in column t of row i, candidate donors are the rows
/// with t observed. Distances use the z-scored continuous columns other
/// than t that both rows observe, rescaled by `features / shared` so rows
/// with partial overlap stay comparable. The donor is drawn uniformly from
/// the `k` closest candidates (ties by row index); candidates sharing no
/// feature rank after all others.
#[derive(Clone, Copy, Debug)]
pub struct KnnImputer {
    k: usize,
}

impl KnnImputer {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("knn needs k >= 1".into()));
        }
        Ok(Self { k })
    }
}

impl Default for KnnImputer {
    fn default() -> Self {
        Self { k: DEFAULT_NEIGHBORS }
    }
}

struct FittedKnn {
    data: MaskedDataset,
    /// Donor rows per missing cell, in column-major cell order.
    donors: Vec<Vec<usize>>,
}

/// Observed values of the continuous columns, z-scored with observed
/// moments. Categorical columns become all-`None`.
fn standardized(data: &MaskedDataset) -> Vec<Vec<Option<f64>>> {
    (0..data.n_cols())
        .map(|j| {
            if data.kind(j).is_categorical() {
                return vec![None; data.n_rows()];
            }
            let obs: Vec<f64> = data.column(j).iter().flatten().copied().collect();
            let n = obs.len() as f64;
            let mean = obs.iter().sum::<f64>() / n.max(1.0);
            let var = obs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
            data.column(j).iter().map(|v| v.map(|v| (v - mean) / sd)).collect()
        })
        .collect()
}

fn neighbours(z: &[Vec<Option<f64>>], target: usize, row: usize, candidates: &[usize], k: usize) -> Vec<usize> {
    let features: Vec<usize> = (0..z.len()).filter(|&j| j != target).collect();
    let total = features.iter().filter(|&&j| z[j].iter().any(Option::is_some)).count().max(1) as f64;
    let mut scored: Vec<(f64, usize)> = candidates
        .iter()
        .filter(|&&c| c != row)
        .map(|&c| {
            let mut sq = 0.0;
            let mut shared = 0usize;
            for &j in &features {
                if let (Some(a), Some(b)) = (z[j][row], z[j][c]) {
                    sq += (a - b) * (a - b);
                    shared += 1;
                }
            }
            let dist = if shared == 0 { f64::INFINITY } else { (sq * total / shared as f64).sqrt() };
            (dist, c)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    scored.into_iter().map(|(_, c)| c).collect()
}

impl Imputer for KnnImputer {
    fn name(&self) -> String {
        format!("knn(k={})", self.k)
    }

    fn multiple_capable(&self) -> bool {
        true
    }

    fn fit(&self, data: &MaskedDataset, _seed: u64) -> Result<Box<dyn FittedImputer>> {
        let z = standardized(data);
        let mut donors = Vec::new();
        for t in 0..data.n_cols() {
            if data.missing_count(t) == 0 {
                continue;
            }
            let candidates: Vec<usize> = (0..data.n_rows()).filter(|&i| !data.is_missing(i, t)).collect();
            if candidates.is_empty() {
                return Err(Error::Imputation(format!("no row observes column {:?}", data.name(t))));
            }
            for i in (0..data.n_rows()).filter(|&i| data.is_missing(i, t)) {
                donors.push(neighbours(&z, t, i, &candidates, self.k));
            }
        }
        Ok(Box::new(FittedKnn { data: data.clone(), donors }))
    }
}

impl FittedImputer for FittedKnn {
    fn impute_stream(&self, stream_seed: u64) -> Result<CompleteDataset> {
        let mut rng = stream(stream_seed);
        let mut cell = 0;
        Ok(CompleteDataset::fill_from(&self.data, |_, j| {
            let pool = &self.donors[cell];
            cell += 1;
            let donor = pool[rng.random_range(0..pool.len())];
            self.data.get(donor, j).expect("donor observes the column")
        }))
    }
}
