//! Generational EDA: select, fit, sample, merge.
//!
//! Generation 0 is `N` uniform random genotypes. Every later generation keeps
//! the top `ceil(tau * N)` individuals, fits the model to them, samples `N`
//! candidates and forms the next population from the best `N` of
//! candidates plus selection. Fitness is cached by bit pattern so that
//! repeated genotypes are evaluated once.

use std::collections::HashMap;
use std::time::Instant;

use rand::SeedableRng;
use thiserror::Error;

use crate::dae::{DaeConfig, DaeModel};
use crate::gan::{GanConfig, GanModel};
use crate::model::{check_lengths, EdaRng, Model, ModelError};
use crate::problems::{Genotype, ProblemError, ProblemInstance};
use crate::umda::MarginalModel;

#[derive(Debug, Error)]
pub enum EdaError {
    #[error("invalid EDA configuration: {0}")]
    Config(String),
    #[error("model failure in generation {generation}: {source}")]
    Model {
        generation: usize,
        #[source]
        source: ModelError,
    },
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Population {
    genotypes: Vec<Genotype>,
    fitnesses: Vec<f64>,
}

impl Population {
    pub fn new(genotypes: Vec<Genotype>, fitnesses: Vec<f64>) -> Result<Self, EdaError> {
        if genotypes.len() != fitnesses.len() {
            return Err(EdaError::Config(format!(
                "{} genotypes but {} fitness values",
                genotypes.len(),
                fitnesses.len()
            )));
        }
        Ok(Population {
            genotypes,
            fitnesses,
        })
    }

    pub fn genotypes(&self) -> &[Genotype] {
        &self.genotypes
    }

    pub fn fitnesses(&self) -> &[f64] {
        &self.fitnesses
    }

    pub fn len(&self) -> usize {
        self.genotypes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genotypes.is_empty()
    }

    pub fn best_fitness(&self) -> Option<f64> {
        self.fitnesses.iter().copied().reduce(f64::max)
    }

    /// The `keep` fittest individuals in descending fitness order; ties keep
    /// their original relative order.
    fn top(self, keep: usize) -> Population {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.fitnesses[b].total_cmp(&self.fitnesses[a]));
        order.truncate(keep);
        let mut slots: Vec<Option<Genotype>> = self.genotypes.into_iter().map(Some).collect();
        let genotypes = order
            .iter()
            .map(|&i| slots[i].take().expect("unique index"))
            .collect();
        let fitnesses = order.iter().map(|&i| self.fitnesses[i]).collect();
        Population {
            genotypes,
            fitnesses,
        }
    }
}

/// `ceil(tau * n)`, tolerant of rounding noise in the product.
pub fn selection_size(population_size: usize, truncation: f64) -> usize {
    let exact = truncation * population_size as f64;
    ((exact - 1e-9).ceil().max(0.0) as usize).min(population_size)
}

pub fn select_truncation(pop: &Population, truncation: f64) -> Population {
    let keep = selection_size(pop.len(), truncation);
    pop.clone().top(keep)
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    Gan(GanConfig),
    Dae(DaeConfig),
    Umda,
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::Gan(_) => "gan",
            ModelSpec::Dae(_) => "dae",
            ModelSpec::Umda => "umda",
        }
    }

    pub fn build(&self, n: usize, rng: &mut EdaRng) -> Result<Box<dyn Model>, ModelError> {
        Ok(match self {
            ModelSpec::Gan(c) => Box::new(GanModel::new(n, c.clone(), rng)?),
            ModelSpec::Dae(c) => Box::new(DaeModel::new(n, c.clone(), rng)?),
            ModelSpec::Umda => Box::new(MarginalModel::new(n)?),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdaConfig {
    pub population_size: usize,
    pub truncation: f64,
    pub max_generations: usize,
    /// Stop after this many generations without a best-fitness improvement.
    pub stall_generations: usize,
    pub model: ModelSpec,
    pub seed: u64,
}

impl Default for EdaConfig {
    fn default() -> Self {
        EdaConfig {
            population_size: 100,
            truncation: 0.5,
            max_generations: 200,
            stall_generations: 30,
            model: ModelSpec::Umda,
            seed: 0,
        }
    }
}

impl EdaConfig {
    pub fn validate(&self) -> Result<(), EdaError> {
        if !(self.truncation > 0.0 && self.truncation <= 1.0) {
            return Err(EdaError::Config(format!(
                "truncation {} outside (0, 1]",
                self.truncation
            )));
        }
        if selection_size(self.population_size, self.truncation) < 2 {
            return Err(EdaError::Config(format!(
                "population {} with truncation {} selects fewer than 2 individuals",
                self.population_size, self.truncation
            )));
        }
        if self.stall_generations == 0 {
            return Err(EdaError::Config("stall generations must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    /// Best fitness of the population after each generation, generation 0 first.
    pub best_fitness_per_generation: Vec<f64>,
    /// Incremented on every cache miss.
    pub unique_evaluations: usize,
    /// Size of the evaluation cache at the end of the run.
    pub recounted_evaluations: usize,
    pub generations_run: usize,
    pub selection_size: usize,
    pub optimum_found: bool,
    pub best_genotype: Genotype,
    pub cpu_seconds: f64,
}

impl RunRecord {
    pub fn best_fitness(&self) -> f64 {
        *self
            .best_fitness_per_generation
            .last()
            .expect("generation 0 is always recorded")
    }
}

pub fn unique_eval_count(record: &RunRecord) -> usize {
    record.unique_evaluations
}

struct Evaluator<'a> {
    instance: &'a ProblemInstance,
    cache: HashMap<Genotype, f64>,
    unique: usize,
}

impl Evaluator<'_> {
    fn evaluate(&mut self, g: &Genotype) -> Result<f64, ProblemError> {
        if let Some(&f) = self.cache.get(g) {
            return Ok(f);
        }
        let f = self.instance.evaluate(g)?;
        self.cache.insert(g.clone(), f);
        self.unique += 1;
        Ok(f)
    }

    fn evaluate_all(&mut self, genotypes: Vec<Genotype>) -> Result<Population, EdaError> {
        let fitnesses = genotypes
            .iter()
            .map(|g| self.evaluate(g))
            .collect::<Result<Vec<_>, _>>()?;
        Population::new(genotypes, fitnesses)
    }
}

/// Runs one EDA with the model described by `config.model`.
pub fn run_eda(instance: &ProblemInstance, config: &EdaConfig) -> Result<RunRecord, EdaError> {
    config.validate()?;
    let mut rng = EdaRng::seed_from_u64(config.seed);
    let mut model = config
        .model
        .build(instance.n(), &mut rng)
        .map_err(|source| EdaError::Model {
            generation: 0,
            source,
        })?;
    run_eda_with_model(instance, config, model.as_mut(), &mut rng)
}

/// Runs one EDA with a caller-supplied model; `config.model` is ignored.
pub fn run_eda_with_model(
    instance: &ProblemInstance,
    config: &EdaConfig,
    model: &mut dyn Model,
    rng: &mut EdaRng,
) -> Result<RunRecord, EdaError> {
    config.validate()?;
    if model.n() != instance.n() {
        return Err(EdaError::Config(format!(
            "model built for n = {}, problem has n = {}",
            model.n(),
            instance.n()
        )));
    }
    let started = Instant::now();
    let n = instance.n();
    let size = config.population_size;
    let keep = selection_size(size, config.truncation);
    let mut evaluator = Evaluator {
        instance,
        cache: HashMap::new(),
        unique: 0,
    };

    let initial = (0..size).map(|_| Genotype::random(n, rng)).collect();
    let mut population = evaluator.evaluate_all(initial)?;
    let mut best = population.best_fitness().expect("population is non-empty");
    let mut trace = vec![best];
    let mut optimum_found = instance.is_optimal(best);
    let mut generations_run = 0;
    let mut stall = 0;

    while !optimum_found
        && generations_run < config.max_generations
        && stall < config.stall_generations
    {
        let generation = generations_run + 1;
        let model_err = |source| EdaError::Model { generation, source };
        let selected = population.top(keep);
        model.begin_generation(rng).map_err(model_err)?;
        model.fit(selected.genotypes(), rng).map_err(model_err)?;
        let candidates = model
            .sample(size, selected.genotypes(), rng)
            .map_err(model_err)?;
        if candidates.len() != size {
            return Err(model_err(ModelError::Parameter(format!(
                "model returned {} candidates, expected {size}",
                candidates.len()
            ))));
        }
        check_lengths(n, &candidates).map_err(model_err)?;
        let offspring = evaluator.evaluate_all(candidates)?;

        let mut genotypes = offspring.genotypes;
        let mut fitnesses = offspring.fitnesses;
        genotypes.extend(selected.genotypes);
        fitnesses.extend(selected.fitnesses);
        population = Population::new(genotypes, fitnesses)?.top(size);
        generations_run = generation;

        #[cfg(debug_assertions)]
        {
            let i = generation % population.len();
            debug_assert_eq!(
                instance.evaluate(&population.genotypes[i]).ok(),
                Some(population.fitnesses[i])
            );
        }

        let current = population.fitnesses[0];
        if current > best {
            best = current;
            stall = 0;
        } else {
            stall += 1;
        }
        trace.push(current);
        optimum_found = instance.is_optimal(current);
    }

    let best_genotype = population.top(1).genotypes.pop().expect("non-empty");
    Ok(RunRecord {
        seed: config.seed,
        best_fitness_per_generation: trace,
        unique_evaluations: evaluator.unique,
        recounted_evaluations: evaluator.cache.len(),
        generations_run,
        selection_size: keep,
        optimum_found,
        best_genotype,
        cpu_seconds: started.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pop(fitnesses: &[f64]) -> Population {
        let genotypes = (0..fitnesses.len())
            .map(|i| Genotype::from_index(i as u64, 4))
            .collect();
        Population::new(genotypes, fitnesses.to_vec()).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let p = pop(&[3.0, 1.0, 2.0, 4.0]);
        let s = select_truncation(&p, 0.5);
        assert_eq!(s.fitnesses(), &[4.0, 3.0]);
        assert_eq!(s.genotypes()[0], Genotype::from_index(3, 4));

        let s = select_truncation(&p, 1.0);
        assert_eq!(s.fitnesses(), &[4.0, 3.0, 2.0, 1.0]);

        let p = pop(&[2.0, 2.0, 2.0]);
        let s = select_truncation(&p, 0.34);
        assert_eq!(s.len(), 2);
        assert_eq!(
            s.genotypes(),
            &[Genotype::from_index(0, 4), Genotype::from_index(1, 4)]
        );
    }

    #[test]
    fn selection_size_rounding() {
        assert_eq!(selection_size(10, 0.3), 3);
        assert_eq!(selection_size(3, 0.34), 2);
        assert_eq!(selection_size(200, 0.5), 100);
        assert_eq!(selection_size(7, 0.5), 4);
    }

    #[test]
    fn config_guards() {
        let bad = EdaConfig {
            population_size: 3,
            truncation: 0.3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = EdaConfig {
            truncation: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn umda_solves_small_onemax() {
        let instance = ProblemInstance::onemax(30).unwrap();
        let config = EdaConfig {
            population_size: 100,
            seed: 1,
            ..Default::default()
        };
        let record = run_eda(&instance, &config).unwrap();
        assert!(record.optimum_found);
        assert!(record.generations_run <= 60, "{}", record.generations_run);
        assert_eq!(record.best_fitness(), 30.0);
        assert_eq!(record.selection_size, 50);
    }

    #[test]
    fn zero_generations_records_only_the_initial_population() {
        let instance = ProblemInstance::onemax(30).unwrap();
        let config = EdaConfig {
            population_size: 40,
            max_generations: 0,
            seed: 3,
            ..Default::default()
        };
        let record = run_eda(&instance, &config).unwrap();
        assert_eq!(record.generations_run, 0);
        assert_eq!(record.best_fitness_per_generation.len(), 1);
        assert!(record.unique_evaluations <= 40);
    }

    /// Always proposes the same genotype.
    struct Constant(Genotype);

    impl Model for Constant {
        fn name(&self) -> &'static str {
            "constant"
        }
        fn n(&self) -> usize {
            self.0.len()
        }
        fn begin_generation(&mut self, _rng: &mut EdaRng) -> Result<(), ModelError> {
            Ok(())
        }
        fn fit(&mut self, _selected: &[Genotype], _rng: &mut EdaRng) -> Result<(), ModelError> {
            Ok(())
        }
        fn sample(
            &self,
            count: usize,
            _selected: &[Genotype],
            _rng: &mut EdaRng,
        ) -> Result<Vec<Genotype>, ModelError> {
            Ok(vec![self.0.clone(); count])
        }
    }

    #[test]
    fn duplicate_candidates_are_counted_once() {
        let instance = ProblemInstance::onemax(20).unwrap();
        let config = EdaConfig {
            population_size: 30,
            max_generations: 10,
            stall_generations: 100,
            ..Default::default()
        };
        let mut model = Constant("10101010101010101010".parse().unwrap());
        let mut rng = EdaRng::seed_from_u64(5);
        let record = run_eda_with_model(&instance, &config, &mut model, &mut rng).unwrap();
        assert_eq!(record.generations_run, 10);
        assert!(record.unique_evaluations <= 30 + 1);
        assert_eq!(record.unique_evaluations, record.recounted_evaluations);
    }

    #[test]
    fn stall_terminates() {
        let instance = ProblemInstance::onemax(20).unwrap();
        let config = EdaConfig {
            population_size: 30,
            stall_generations: 4,
            ..Default::default()
        };
        let mut model = Constant(Genotype::zeros(20));
        let mut rng = EdaRng::seed_from_u64(5);
        let record = run_eda_with_model(&instance, &config, &mut model, &mut rng).unwrap();
        assert_eq!(record.generations_run, 4);
        assert!(!record.optimum_found);
    }

    /// Proposes fresh random genotypes; never revisits with overwhelming probability.
    struct Fresh(usize);

    impl Model for Fresh {
        fn name(&self) -> &'static str {
            "fresh"
        }
        fn n(&self) -> usize {
            self.0
        }
        fn begin_generation(&mut self, _rng: &mut EdaRng) -> Result<(), ModelError> {
            Ok(())
        }
        fn fit(&mut self, _selected: &[Genotype], _rng: &mut EdaRng) -> Result<(), ModelError> {
            Ok(())
        }
        fn sample(
            &self,
            count: usize,
            _selected: &[Genotype],
            rng: &mut EdaRng,
        ) -> Result<Vec<Genotype>, ModelError> {
            Ok((0..count).map(|_| Genotype::random(self.0, rng)).collect())
        }
    }

    #[test]
    fn distinct_candidates_attain_the_upper_bound() {
        let instance = ProblemInstance::onemax(64).unwrap();
        let config = EdaConfig {
            population_size: 20,
            max_generations: 5,
            stall_generations: 100,
            ..Default::default()
        };
        let mut rng = EdaRng::seed_from_u64(1);
        let record = run_eda_with_model(&instance, &config, &mut Fresh(64), &mut rng).unwrap();
        assert_eq!(record.unique_evaluations, 20 + 20 * record.generations_run);
        assert_eq!(unique_eval_count(&record), record.recounted_evaluations);
    }

    struct Failing;

    impl Model for Failing {
        fn name(&self) -> &'static str {
            "failing"
        }
        fn n(&self) -> usize {
            8
        }
        fn begin_generation(&mut self, _rng: &mut EdaRng) -> Result<(), ModelError> {
            Ok(())
        }
        fn fit(&mut self, _selected: &[Genotype], _rng: &mut EdaRng) -> Result<(), ModelError> {
            Err(ModelError::EmptyTrainingSet)
        }
        fn sample(
            &self,
            _count: usize,
            _selected: &[Genotype],
            _rng: &mut EdaRng,
        ) -> Result<Vec<Genotype>, ModelError> {
            unreachable!()
        }
    }

    #[test]
    fn model_failures_carry_the_generation() {
        let instance = ProblemInstance::onemax(8).unwrap();
        let config = EdaConfig {
            population_size: 10,
            ..Default::default()
        };
        let err = run_eda_with_model(
            &instance,
            &config,
            &mut Failing,
            &mut EdaRng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(matches!(err, EdaError::Model { generation: 1, .. }));
    }

    #[test]
    fn runs_are_deterministic_and_elitist() {
        let instance = ProblemInstance::concat_trap(20, 5).unwrap();
        let config = EdaConfig {
            population_size: 60,
            seed: 11,
            ..Default::default()
        };
        let mut a = run_eda(&instance, &config).unwrap();
        let mut b = run_eda(&instance, &config).unwrap();
        a.cpu_seconds = 0.0;
        b.cpu_seconds = 0.0;
        assert_eq!(a, b);
        assert!(a
            .best_fitness_per_generation
            .windows(2)
            .all(|w| w[1] >= w[0]));
        assert!(a.unique_evaluations <= 60 * (a.generations_run + 1));
    }
}
