//! Denoising autoencoder model.
//!
//! Training corrupts each bit with probability `corruption_rate` by resetting
//! it to a uniformly random value and learns to reconstruct the clean input
//! under summed per-bit cross-entropy. Sampling runs a short chain from the
//! selected genotypes: corrupt, reconstruct, draw each bit from the
//! reconstruction probabilities.

use std::io::Write;

use rand::Rng;

use crate::model::{
    bernoulli_bits, check_genotypes, check_lengths, genotype_matrix, shuffled_indices, EdaRng,
    Model, ModelError,
};
use crate::nn::{
    cross_entropy_gradient, cross_entropy_loss, sgd_step, Activation, InitSpec, Matrix, Mode,
    Network, NnError, OptimizerConfig, OptimizerState,
};
use crate::problems::Genotype;

#[derive(Clone, Debug, PartialEq)]
pub struct DaeConfig {
    /// Hidden width; `None` uses the genotype length.
    pub hidden: Option<usize>,
    pub hidden_activation: Activation,
    pub corruption_rate: f64,
    /// Corruption used inside the sampling chain; `None` reuses `corruption_rate`.
    pub sample_corruption_rate: Option<f64>,
    pub chain_steps: usize,
    pub init: InitSpec,
    pub optimizer: OptimizerConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub warm_start: bool,
}

impl Default for DaeConfig {
    fn default() -> Self {
        DaeConfig {
            hidden: None,
            hidden_activation: Activation::Sigmoid,
            corruption_rate: 0.1,
            sample_corruption_rate: Some(0.7),
            chain_steps: 1,
            init: InitSpec::Normal { sigma: 0.01 },
            optimizer: OptimizerConfig::sgd(0.1),
            epochs: 30,
            batch_size: 1,
            warm_start: false,
        }
    }
}

impl DaeConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden == Some(0) {
            return Err(ModelError::Parameter("hidden width must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Parameter("batch size must be >= 1".into()));
        }
        for rate in [Some(self.corruption_rate), self.sample_corruption_rate]
            .into_iter()
            .flatten()
        {
            if !(0.0..=1.0).contains(&rate) {
                return Err(ModelError::Parameter(format!(
                    "corruption rate {rate} outside [0, 1]"
                )));
            }
        }
        self.optimizer.validate()?;
        Ok(())
    }

    fn sampling_corruption(&self) -> f64 {
        self.sample_corruption_rate.unwrap_or(self.corruption_rate)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DaeEpochStats {
    pub epoch: usize,
    pub mean_reconstruction_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DaeTrace {
    pub epochs: Vec<DaeEpochStats>,
}

impl DaeTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["epoch", "mean_reconstruction_loss"])?;
        for e in &self.epochs {
            w.write_record([e.epoch.to_string(), e.mean_reconstruction_loss.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct DaeModel {
    n: usize,
    config: DaeConfig,
    net: Network,
    state: OptimizerState,
    last_trace: DaeTrace,
}

/// Salt-and-pepper noise: each entry is reset to a fair coin flip with probability `rate`.
fn corrupt<R: Rng + ?Sized>(batch: &mut Matrix, rate: f64, rng: &mut R) {
    if rate == 0.0 {
        return;
    }
    for v in batch.as_mut_slice() {
        if rng.gen::<f64>() < rate {
            *v = rng.gen_range(0..=1) as f64;
        }
    }
}

impl DaeModel {
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        config: DaeConfig,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Parameter("genotype length must be >= 1".into()));
        }
        config.validate()?;
        let net = build_network(n, &config, rng)?;
        Ok(DaeModel {
            n,
            state: OptimizerState::new(&net),
            net,
            config,
            last_trace: DaeTrace::default(),
        })
    }

    pub fn config(&self) -> &DaeConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut Network {
        &mut self.net
    }

    pub fn last_trace(&self) -> &DaeTrace {
        &self.last_trace
    }

    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), ModelError> {
        self.net = build_network(self.n, &self.config, rng)?;
        self.state = OptimizerState::new(&self.net);
        Ok(())
    }

    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        training_set: &[Genotype],
        rng: &mut R,
    ) -> Result<&DaeTrace, ModelError> {
        check_genotypes(self.n, training_set)?;
        let mut trace = DaeTrace::default();
        for epoch in 0..self.config.epochs {
            let order = shuffled_indices(training_set.len(), rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let clean = genotype_matrix(self.n, chunk.iter().map(|&i| &training_set[i]));
                let mut noisy = clean.clone();
                corrupt(&mut noisy, self.config.corruption_rate, rng);
                let record = self.net.forward(&noisy, Mode::Train, rng)?;
                let scale = 1.0 / chunk.len() as f64;
                let mut grad = Matrix::zeros(clean.rows(), clean.cols());
                for ((g, &y), &t) in grad
                    .as_mut_slice()
                    .iter_mut()
                    .zip(record.output().as_slice())
                    .zip(clean.as_slice())
                {
                    total += cross_entropy_loss(y, t);
                    *g = cross_entropy_gradient(y, t) * scale;
                }
                let grads = self.net.backward(&record, &grad)?;
                sgd_step(
                    &mut self.net,
                    &grads,
                    &self.config.optimizer,
                    &mut self.state,
                    epoch,
                )?;
            }
            let mean = total / training_set.len() as f64;
            if !mean.is_finite() {
                return Err(NnError::Numeric(format!(
                    "non-finite reconstruction loss in epoch {epoch}"
                ))
                .into());
            }
            trace.epochs.push(DaeEpochStats {
                epoch,
                mean_reconstruction_loss: mean,
            });
        }
        self.last_trace = trace;
        Ok(&self.last_trace)
    }

    /// Reconstruction probabilities of an uncorrupted genotype.
    pub fn reconstruct(&self, g: &Genotype) -> Result<Vec<f64>, ModelError> {
        check_lengths(self.n, std::slice::from_ref(g))?;
        Ok(self
            .net
            .predict(&Matrix::row_vector(g.to_f64()))?
            .into_vec())
    }

    /// Probabilities used by one chain step started at `g`: corrupt at the
    /// sampling rate, then reconstruct.
    pub fn chain_probabilities<R: Rng + ?Sized>(
        &self,
        g: &Genotype,
        rng: &mut R,
    ) -> Result<Vec<f64>, ModelError> {
        check_lengths(self.n, std::slice::from_ref(g))?;
        let mut x = Matrix::row_vector(g.to_f64());
        corrupt(&mut x, self.config.sampling_corruption(), rng);
        Ok(self.net.predict(&x)?.into_vec())
    }

    /// `count` chains, the i-th starting from `seeds[i % seeds.len()]`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        count: usize,
        seeds: &[Genotype],
        rng: &mut R,
    ) -> Result<Vec<Genotype>, ModelError> {
        if count == 0 {
            return Ok(Vec::new());
        }
        if seeds.is_empty() {
            return Err(ModelError::NoSeeds);
        }
        check_lengths(self.n, seeds)?;
        let mut current: Vec<Genotype> =
            (0..count).map(|i| seeds[i % seeds.len()].clone()).collect();
        let rate = self.config.sampling_corruption();
        for _ in 0..self.config.chain_steps {
            let mut x = genotype_matrix(self.n, current.iter());
            corrupt(&mut x, rate, rng);
            let probabilities = self.net.predict(&x)?;
            current = (0..count)
                .map(|r| bernoulli_bits(probabilities.row(r), rng))
                .collect();
        }
        Ok(current)
    }
}

fn build_network<R: Rng + ?Sized>(
    n: usize,
    config: &DaeConfig,
    rng: &mut R,
) -> Result<Network, ModelError> {
    let hidden = config.hidden.unwrap_or(n);
    Ok(Network::new(
        &[n, hidden, n],
        &[config.hidden_activation, Activation::Sigmoid],
        config.init,
        rng,
    )?)
}

impl Model for DaeModel {
    fn name(&self) -> &'static str {
        "dae"
    }

    fn n(&self) -> usize {
        self.n
    }

    fn begin_generation(&mut self, rng: &mut EdaRng) -> Result<(), ModelError> {
        if !self.config.warm_start {
            self.reinitialize(rng)?;
        }
        Ok(())
    }

    fn fit(&mut self, selected: &[Genotype], rng: &mut EdaRng) -> Result<(), ModelError> {
        DaeModel::fit(self, selected, rng).map(|_| ())
    }

    fn sample(
        &self,
        count: usize,
        selected: &[Genotype],
        rng: &mut EdaRng,
    ) -> Result<Vec<Genotype>, ModelError> {
        DaeModel::sample(self, count, selected, rng)
    }
}
