//! Univariate marginal model: one independent Bernoulli per bit, estimated as
//! the bit frequency of the selection and clamped to `[1/n, 1 - 1/n]`.

use rand::Rng;

use crate::model::{bernoulli_bits, check_genotypes, EdaRng, Model, ModelError};
use crate::problems::Genotype;

#[derive(Clone, Debug, PartialEq)]
pub struct MarginalModel {
    probabilities: Vec<f64>,
    min: f64,
    max: f64,
}

impl MarginalModel {
    /// Uniform marginals. The clamp interval collapses for `n < 3`, which is rejected.
    pub fn new(n: usize) -> Result<Self, ModelError> {
        if n < 3 {
            return Err(ModelError::Parameter(format!(
                "marginal model needs n >= 3, got {n}"
            )));
        }
        let min = 1.0 / n as f64;
        Ok(MarginalModel {
            probabilities: vec![0.5; n],
            min,
            max: 1.0 - min,
        })
    }

    pub fn with_probabilities(probabilities: Vec<f64>) -> Result<Self, ModelError> {
        let mut model = MarginalModel::new(probabilities.len())?;
        if probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(ModelError::Parameter(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        model.probabilities = probabilities;
        Ok(model)
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn clamp_bounds(&self) -> (f64, f64) {
        (self.min, self.max)
    }

    pub fn fit(&mut self, training_set: &[Genotype]) -> Result<(), ModelError> {
        check_genotypes(self.probabilities.len(), training_set)?;
        let m = training_set.len() as f64;
        let mut counts = vec![0usize; self.probabilities.len()];
        for g in training_set {
            for (c, &b) in counts.iter_mut().zip(g.bits()) {
                *c += b as usize;
            }
        }
        for (p, c) in self.probabilities.iter_mut().zip(counts) {
            *p = (c as f64 / m).clamp(self.min, self.max);
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<Genotype> {
        (0..count)
            .map(|_| bernoulli_bits(&self.probabilities, rng))
            .collect()
    }
}

impl Model for MarginalModel {
    fn name(&self) -> &'static str {
        "umda"
    }

    fn n(&self) -> usize {
        self.probabilities.len()
    }

    fn begin_generation(&mut self, _rng: &mut EdaRng) -> Result<(), ModelError> {
        Ok(())
    }

    fn fit(&mut self, selected: &[Genotype], _rng: &mut EdaRng) -> Result<(), ModelError> {
        MarginalModel::fit(self, selected)
    }

    fn sample(
        &self,
        count: usize,
        _selected: &[Genotype],
        rng: &mut EdaRng,
    ) -> Result<Vec<Genotype>, ModelError> {
        Ok(MarginalModel::sample(self, count, rng))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn set(rows: &[&str]) -> Vec<Genotype> {
        rows.iter().map(|s| s.parse().unwrap()).collect()
    }

    #[test]
    fn fit_examples() {
        let mut m = MarginalModel::new(4).unwrap();
        m.fit(&set(&["0000", "1111"])).unwrap();
        assert_eq!(m.probabilities(), &[0.5; 4]);
        m.fit(&set(&["1111"])).unwrap();
        assert_eq!(m.probabilities(), &[0.75; 4]);
        m.fit(&set(&["1000", "1000", "1000", "0000"])).unwrap();
        assert_eq!(m.probabilities(), &[0.75, 0.25, 0.25, 0.25]);
    }

    #[test]
    fn tiny_problems_are_rejected() {
        // at n = 2 the clamp interval [1/2, 1/2] would pin every marginal
        assert!(MarginalModel::new(2).is_err());
        assert!(MarginalModel::new(3).is_ok());
    }

    #[test]
    fn sampling_contracts() {
        let mut m = MarginalModel::new(100).unwrap();
        m.fit(&[Genotype::ones(100)]).unwrap();
        assert_eq!(m.probabilities()[0], 0.99);
        let mut rng = EdaRng::seed_from_u64(1);
        let samples = m.sample(1000, &mut rng);
        let mean = samples.iter().map(|g| g.count_ones()).sum::<usize>() as f64 / 100_000.0;
        assert!(mean >= 0.95, "{mean}");
        assert!(m.sample(0, &mut rng).is_empty());
        let a = m.sample(10, &mut EdaRng::seed_from_u64(9));
        let b = m.sample(10, &mut EdaRng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn chi_square_goodness_of_fit() {
        let mut rng = EdaRng::seed_from_u64(2024);
        let n = 16;
        let samples = 10_000;
        let critical = ChiSquared::new(n as f64).unwrap().inverse_cdf(0.99);
        for _ in 0..20 {
            let p: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.95)).collect();
            let m = MarginalModel::with_probabilities(p.clone()).unwrap();
            let draws = m.sample(samples, &mut rng);
            let statistic: f64 = (0..n)
                .map(|j| {
                    let ones = draws.iter().filter(|g| g.bits()[j] == 1).count() as f64;
                    let e1 = samples as f64 * p[j];
                    let e0 = samples as f64 - e1;
                    let zeros = samples as f64 - ones;
                    (ones - e1).powi(2) / e1 + (zeros - e0).powi(2) / e0
                })
                .sum();
            assert!(statistic < critical, "chi2 {statistic} >= {critical}");
        }
    }

    proptest! {
        #[test]
        fn clamp_invariant_after_fit(rows in proptest::collection::vec(proptest::collection::vec(0u8..=1, 7), 1..30)) {
            let data: Vec<Genotype> = rows.into_iter().map(|r| Genotype::new(r).unwrap()).collect();
            let mut m = MarginalModel::new(7).unwrap();
            m.fit(&data).unwrap();
            let (lo, hi) = m.clamp_bounds();
            prop_assert!(m.probabilities().iter().all(|&p| p >= lo && p <= hi));
        }
    }
}
