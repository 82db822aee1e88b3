//! Energy-score and energy-distance kernels.
//!
//! All sums go through [`CompensatedSum`] in a fixed order, so results do not
//! depend on thread count.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::data::CompleteDataset;
use crate::error::{Error, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = Self::default();
        for x in iter {
            s.add(x);
        }
        s
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().collect::<CompensatedSum>().value()
}

#[inline]
pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    if a.len() == 1 {
        return (a[0] - b[0]).abs();
    }
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `N` draws of a scalar or vector quantity, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct ImputationDraws {
    arity: usize,
    values: Vec<f64>,
}

impl ImputationDraws {
    pub fn new(arity: usize, values: Vec<f64>) -> Result<Self> {
        if arity == 0 || values.is_empty() || values.len() % arity != 0 {
            return Err(Error::InvalidInput(format!(
                "{} values do not form draws of arity {arity}",
                values.len()
            )));
        }
        Ok(Self { arity, values })
    }

    pub fn scalars(values: Vec<f64>) -> Result<Self> {
        Self::new(1, values)
    }

    pub fn vectors(draws: &[Vec<f64>]) -> Result<Self> {
        let arity = draws.first().map_or(0, Vec::len);
        if draws.iter().any(|d| d.len() != arity) {
            return Err(Error::InvalidInput("draws of unequal arity".into()));
        }
        Self::new(arity, draws.concat())
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.arity
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn draw(&self, l: usize) -> &[f64] {
        &self.values[l * self.arity..(l + 1) * self.arity]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.arity)
    }

    /// True when every draw equals the first one.
    pub fn is_degenerate(&self) -> bool {
        let first = self.draw(0);
        self.iter().all(|d| d == first)
    }
}

/// Empirical energy score of `draws` against an observed `test` value:
///
/// `1/(2N²) Σ_l Σ_ℓ ‖x_l − x_ℓ‖ − 1/N Σ_l ‖x_l − test‖`
///
/// The double sum runs over all ordered pairs, zero diagonal included.
/// Degenerate draws short-circuit to `−‖x_1 − test‖`.
pub fn empirical_energy_score(draws: &ImputationDraws, test: &[f64]) -> Result<f64> {
    if test.len() != draws.arity() {
        return Err(Error::ShapeMismatch(format!(
            "test value has arity {}, draws have {}",
            test.len(),
            draws.arity()
        )));
    }
    if let Some(&v) = draws.values.iter().chain(test).find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { value: v, context: "energy score input".into() });
    }
    if draws.is_degenerate() {
        return Ok(-euclidean(draws.draw(0), test));
    }
    let n = draws.len() as f64;
    let mut pair = CompensatedSum::default();
    let mut dist = CompensatedSum::default();
    for (l, x) in draws.iter().enumerate() {
        for y in draws.iter().skip(l + 1) {
            pair.add(euclidean(x, y));
        }
        dist.add(euclidean(x, test));
    }
    // off-diagonal pairs counted once above, each ordered pair is twice that
    Ok(2.0 * pair.value() / (2.0 * n * n) - dist.value() / n)
}

/// A distribution over finitely many scalar atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteDistribution {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(atoms: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::InvalidInput("atoms and weights must be non-empty and of equal length".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || atoms.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("weights must be non-negative and atoms finite".into()));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { atoms, weights })
    }

    pub fn point_mass(atom: f64) -> Self {
        Self { atoms: vec![atom], weights: vec![1.0] }
    }

    pub fn uniform(atoms: Vec<f64>) -> Result<Self> {
        let w = 1.0 / atoms.len() as f64;
        let weights = vec![w; atoms.len()];
        Self::new(atoms, weights)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Atoms merged and sorted, zero-weight atoms dropped.
    pub fn canonical(&self) -> Vec<(f64, f64)> {
        let mut pairs: Vec<(f64, f64)> =
            self.atoms.iter().copied().zip(self.weights.iter().copied()).filter(|(_, w)| *w > 0.0).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(pairs.len());
        for (a, w) in pairs {
            match merged.last_mut() {
                Some(last) if last.0 == a => last.1 += w,
                _ => merged.push((a, w)),
            }
        }
        merged
    }
}

/// Expected energy score `E_{Y~truth}[½E|X−X'| − E|X−Y|]` with `X, X'` drawn
/// from `predictive`, by exhaustive summation over both supports.
pub fn expected_energy_score(predictive: &DiscreteDistribution, truth: &DiscreteDistribution) -> f64 {
    let p = predictive.atoms.iter().zip(&predictive.weights);
    let spread = compensated_sum(p.clone().flat_map(|(x, wx)| {
        predictive.atoms.iter().zip(&predictive.weights).map(move |(y, wy)| wx * wy * (x - y).abs())
    }));
    let miss = compensated_sum(truth.atoms.iter().zip(&truth.weights).flat_map(|(y, wy)| {
        p.clone().map(move |(x, wx)| wx * wy * (x - y).abs())
    }));
    0.5 * spread - miss
}

/// Sum of `‖x − y‖` over all (x, y) in `a × b`, accumulated row by row in
/// row order regardless of how rows are distributed over threads.
fn cross_distance_sum(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let row_sums: Vec<f64> = a
        .par_iter()
        .map(|x| compensated_sum(b.iter().map(|y| euclidean(x, y))))
        .collect();
    compensated_sum(row_sums)
}

fn lexicographic(a: &[Vec<f64>], b: &[Vec<f64>]) -> Ordering {
    a.len().cmp(&b.len()).then_with(|| {
        a.iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
    })
}

/// V-statistic energy distance
/// `2·mean‖x−y‖ − mean‖x−x'‖ − mean‖y−y'‖` between two samples of row vectors.
pub fn energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InvalidInput("energy distance needs non-empty samples".into()));
    }
    let width = a[0].len();
    if a.iter().chain(b).any(|r| r.len() != width) {
        return Err(Error::ShapeMismatch("samples have different column counts".into()));
    }
    if let Some(&v) = a.iter().chain(b).flatten().find(|v| !v.is_finite()) {
        return Err(Error::NonFinite { value: v, context: "energy distance input".into() });
    }
    // fixed argument order for the cross term keeps the result symmetric
    let (first, second) = if lexicographic(a, b) == Ordering::Greater { (b, a) } else { (a, b) };
    let na = a.len() as f64;
    let nb = b.len() as f64;
    let cross = cross_distance_sum(first, second) / (na * nb);
    let within_a = cross_distance_sum(a, a) / (na * na);
    let within_b = cross_distance_sum(b, b) / (nb * nb);
    Ok(2.0 * cross - (within_a + within_b))
}

/// Negative energy distance between a complete table and an imputed one,
/// categorical columns compared one-hot.
pub fn full_information_score(complete: &CompleteDataset, imputed: &CompleteDataset) -> Result<f64> {
    if complete.n_rows() != imputed.n_rows() || complete.n_cols() != imputed.n_cols() {
        return Err(Error::ShapeMismatch(format!(
            "complete is {}x{}, imputed is {}x{}",
            complete.n_rows(),
            complete.n_cols(),
            imputed.n_rows(),
            imputed.n_cols()
        )));
    }
    if complete.kinds() != imputed.kinds() {
        return Err(Error::ShapeMismatch("column kinds differ".into()));
    }
    Ok(-energy_distance(&complete.encoded_rows(), &imputed.encoded_rows())?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn point_mass_draws() {
        let d = ImputationDraws::scalars(vec![1.0; 7]).unwrap();
        assert_eq!(empirical_energy_score(&d, &[3.0]).unwrap(), -2.0);
    }

    #[test]
    fn two_draws_hand_value() {
        let d = ImputationDraws::scalars(vec![0.0, 2.0]).unwrap();
        assert_eq!(empirical_energy_score(&d, &[1.0]).unwrap(), -0.5);
    }

    #[test]
    fn one_hot_draws_hand_value() {
        let d = ImputationDraws::vectors(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let s = empirical_energy_score(&d, &[1.0, 0.0]).unwrap();
        assert!((s + 2f64.sqrt() / 4.0).abs() < 1e-15);
    }

    #[test]
    fn kernel_errors() {
        let d = ImputationDraws::scalars(vec![0.0, 1.0]).unwrap();
        assert!(empirical_energy_score(&d, &[f64::NAN]).is_err());
        assert!(empirical_energy_score(&d, &[0.0, 1.0]).is_err());
        assert!(ImputationDraws::scalars(vec![]).is_err());
    }

    #[test]
    fn expected_score_examples() {
        let zero = DiscreteDistribution::point_mass(0.0);
        let coin = DiscreteDistribution::uniform(vec![0.0, 1.0]).unwrap();
        assert_eq!(expected_energy_score(&zero, &zero), 0.0);
        assert_eq!(expected_energy_score(&coin, &zero), -0.25);
        assert_eq!(expected_energy_score(&coin, &coin), -0.25);
        assert_eq!(expected_energy_score(&zero, &coin), -0.5);
        assert!(DiscreteDistribution::new(vec![0.0, 1.0], vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn energy_distance_examples() {
        let a = vec![vec![0.0], vec![1.0]];
        assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(energy_distance(&[vec![0.0]], &[vec![1.0]]).unwrap(), 2.0);
        assert_eq!(energy_distance(&a, &a.clone()).unwrap(), 0.0);
        assert!(energy_distance(&a, &[vec![0.0, 1.0]]).is_err());
    }

    /// Straight double loop over all pairs, no compensation.
    fn naive_energy_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
        let mean = |u: &[Vec<f64>], v: &[Vec<f64>]| {
            let mut s = 0.0;
            for x in u {
                for y in v {
                    let mut q = 0.0;
                    for k in 0..x.len() {
                        q += (x[k] - y[k]) * (x[k] - y[k]);
                    }
                    s += q.sqrt();
                }
            }
            s / (u.len() * v.len()) as f64
        };
        2.0 * mean(a, b) - mean(a, a) - mean(b, b)
    }

    #[test]
    fn full_information_toy_matches_double_loop() {
        let complete = CompleteDataset::from_rows(
            &["a", "b"],
            &[vec![0.0, 1.0], vec![1.5, -2.0], vec![3.0, 0.5], vec![-1.0, 4.0]],
        )
        .unwrap();
        let imputed = CompleteDataset::from_rows(
            &["a", "b"],
            &[vec![0.0, 1.0], vec![0.2, -2.0], vec![3.0, 2.5], vec![-1.0, 4.0]],
        )
        .unwrap();
        let got = full_information_score(&complete, &imputed).unwrap();
        let want = -naive_energy_distance(&complete.encoded_rows(), &imputed.encoded_rows());
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert!(got < 0.0);
        assert_eq!(full_information_score(&complete, &complete).unwrap(), 0.0);
    }

    fn scalar_draws() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-50.0f64..50.0, 1..12), -50.0f64..50.0)
    }

    proptest! {
        #[test]
        fn translation_invariant((draws, y) in scalar_draws(), c in -100.0f64..100.0) {
            let base = empirical_energy_score(&ImputationDraws::scalars(draws.clone()).unwrap(), &[y]).unwrap();
            let shifted: Vec<f64> = draws.iter().map(|x| x + c).collect();
            let moved = empirical_energy_score(&ImputationDraws::scalars(shifted).unwrap(), &[y + c]).unwrap();
            prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base.abs()));
        }

        #[test]
        fn scale_equivariant((draws, y) in scalar_draws(), c in 0.01f64..100.0) {
            let base = empirical_energy_score(&ImputationDraws::scalars(draws.clone()).unwrap(), &[y]).unwrap();
            let scaled: Vec<f64> = draws.iter().map(|x| x * c).collect();
            let s = empirical_energy_score(&ImputationDraws::scalars(scaled).unwrap(), &[y * c]).unwrap();
            prop_assert!((s - c * base).abs() <= 1e-9 * (1.0 + (c * base).abs()));
        }

        #[test]
        fn degenerate_draws_identity(a in -50.0f64..50.0, y in -50.0f64..50.0, n in 1usize..60) {
            let s = empirical_energy_score(&ImputationDraws::scalars(vec![a; n]).unwrap(), &[y]).unwrap();
            prop_assert_eq!(s, -(a - y).abs());
        }

        #[test]
        fn energy_distance_symmetric(
            a in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..8),
            b in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 1..8),
        ) {
            let ab = energy_distance(&a, &b).unwrap();
            prop_assert_eq!(ab, energy_distance(&b, &a).unwrap());
            prop_assert_eq!(energy_distance(&a, &a).unwrap(), 0.0);
            prop_assert!(ab >= -1e-12);
            prop_assert!((ab - naive_energy_distance(&a, &b)).abs() < 1e-12);
        }
    }
}
