//! The contract between the EDA loop and its probabilistic models.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::nn::{Matrix, NnError};
use crate::problems::Genotype;

/// Random generator used for every run. Seeded per run, never shared.
pub type EdaRng = ChaCha8Rng;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("sampling needs at least one seed genotype")]
    NoSeeds,
    #[error("genotype has length {got}, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid model parameter: {0}")]
    Parameter(String),
}

/// A probabilistic model an EDA can fit to selected genotypes and sample from.
pub trait Model: Send {
    fn name(&self) -> &'static str;

    /// Genotype length this model was built for.
    fn n(&self) -> usize;

    /// Called once per generation before `fit`; models without warm start reset here.
    fn begin_generation(&mut self, rng: &mut EdaRng) -> Result<(), ModelError>;

    fn fit(&mut self, selected: &[Genotype], rng: &mut EdaRng) -> Result<(), ModelError>;

    /// `selected` is the current selection; models may use it as chain seeds.
    fn sample(
        &self,
        count: usize,
        selected: &[Genotype],
        rng: &mut EdaRng,
    ) -> Result<Vec<Genotype>, ModelError>;
}

pub(crate) fn check_genotypes(n: usize, set: &[Genotype]) -> Result<(), ModelError> {
    if set.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    check_lengths(n, set)
}

pub(crate) fn check_lengths(n: usize, set: &[Genotype]) -> Result<(), ModelError> {
    match set.iter().find(|g| g.len() != n) {
        Some(g) => Err(ModelError::LengthMismatch {
            expected: n,
            got: g.len(),
        }),
        None => Ok(()),
    }
}

pub(crate) fn genotype_matrix<'a>(
    n: usize,
    rows: impl ExactSizeIterator<Item = &'a Genotype>,
) -> Matrix {
    let count = rows.len();
    let mut data = Vec::with_capacity(count * n);
    for g in rows {
        data.extend(g.bits().iter().map(|&b| b as f64));
    }
    Matrix::from_vec(count, n, data).expect("rows have length n")
}

/// Independent Bernoulli draw per probability.
pub(crate) fn bernoulli_bits<R: Rng + ?Sized>(probabilities: &[f64], rng: &mut R) -> Genotype {
    Genotype::from_bits_unchecked(
        probabilities
            .iter()
            .map(|&p| (rng.gen::<f64>() < p) as u8)
            .collect(),
    )
}

/// Fisher-Yates order for one epoch.
pub(crate) fn shuffled_indices<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(rng);
    order
}
