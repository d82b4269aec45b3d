//! Generative adversarial network used as an EDA model.
//!
//! The generator maps prior noise to per-bit probabilities, the discriminator
//! maps a bit vector to the probability that it came from the training data.
//! Training alternates strictly: for every training example one discriminator
//! step on a fresh generator sample (target 0), one on the example (target 1),
//! then one generator step that descends `ln(1 - D(G(z)))` with the error
//! backpropagated through the frozen discriminator.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

use crate::model::{
    bernoulli_bits, check_genotypes, genotype_matrix, shuffled_indices, EdaRng, Model, ModelError,
};
use crate::nn::gradcheck::{check_network, GradientComparison};
use crate::nn::{
    cross_entropy_gradient, cross_entropy_loss, generator_loss, generator_loss_gradient, sgd_step,
    Activation, InitSpec, Matrix, Mode, Network, NnError, OptimizerConfig, OptimizerState,
};
use crate::problems::Genotype;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorDistribution {
    /// Independent uniform(0, 1) per component.
    Uniform,
    /// Independent standard normal per component.
    Normal,
}

impl fmt::Display for PriorDistribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorDistribution::Uniform => "uniform",
            PriorDistribution::Normal => "normal",
        })
    }
}

impl FromStr for PriorDistribution {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(PriorDistribution::Uniform),
            "normal" => Ok(PriorDistribution::Normal),
            other => Err(ModelError::Parameter(format!(
                "unknown prior '{other}' (expected uniform or normal)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanConfig {
    /// Noise dimension; `None` uses the genotype length.
    pub z_dim: Option<usize>,
    pub prior: PriorDistribution,
    /// Hidden widths; `None` uses the genotype length.
    pub generator_hidden: Option<usize>,
    pub discriminator_hidden: Option<usize>,
    pub hidden_activation: Activation,
    pub init: InitSpec,
    pub generator_optimizer: OptimizerConfig,
    pub discriminator_optimizer: OptimizerConfig,
    /// Dropout on the hidden layer of both networks.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Keep parameters across EDA generations instead of reinitializing.
    pub warm_start: bool,
    /// Keep every discriminator prediction in the training trace.
    pub record_steps: bool,
}

impl Default for GanConfig {
    fn default() -> Self {
        GanConfig {
            z_dim: None,
            prior: PriorDistribution::Uniform,
            generator_hidden: None,
            discriminator_hidden: None,
            hidden_activation: Activation::Relu,
            init: InitSpec::Normal { sigma: 0.01 },
            generator_optimizer: OptimizerConfig::sgd(0.1),
            discriminator_optimizer: OptimizerConfig::sgd(0.1),
            dropout: 0.0,
            epochs: 10,
            batch_size: 1,
            warm_start: false,
            record_steps: false,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.z_dim == Some(0)
            || self.generator_hidden == Some(0)
            || self.discriminator_hidden == Some(0)
        {
            return Err(ModelError::Parameter("layer widths must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(ModelError::Parameter("batch size must be >= 1".into()));
        }
        self.generator_optimizer.validate()?;
        self.discriminator_optimizer.validate()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GanEpochStats {
    pub epoch: usize,
    pub mean_loss_d: f64,
    pub mean_loss_g: f64,
    pub mean_d_real: f64,
    pub mean_d_fake: f64,
}

/// One discriminator prediction and the loss it was trained on.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscriminatorStep {
    pub epoch: usize,
    pub prediction: f64,
    pub target: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GanTrace {
    pub epochs: Vec<GanEpochStats>,
    pub steps: Vec<DiscriminatorStep>,
}

impl GanTrace {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "epoch",
            "mean_loss_D",
            "mean_loss_G",
            "mean_D_real",
            "mean_D_fake",
        ])?;
        for e in &self.epochs {
            w.write_record([
                e.epoch.to_string(),
                e.mean_loss_d.to_string(),
                e.mean_loss_g.to_string(),
                e.mean_d_real.to_string(),
                e.mean_d_fake.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GanModel {
    n: usize,
    config: GanConfig,
    generator: Network,
    discriminator: Network,
    generator_state: OptimizerState,
    discriminator_state: OptimizerState,
    last_trace: GanTrace,
}

impl GanModel {
    pub fn new<R: Rng + ?Sized>(
        n: usize,
        config: GanConfig,
        rng: &mut R,
    ) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::Parameter("genotype length must be >= 1".into()));
        }
        config.validate()?;
        let (generator, discriminator) = build_networks(n, &config, rng)?;
        Ok(GanModel {
            n,
            generator_state: OptimizerState::new(&generator),
            discriminator_state: OptimizerState::new(&discriminator),
            generator,
            discriminator,
            config,
            last_trace: GanTrace::default(),
        })
    }

    pub fn config(&self) -> &GanConfig {
        &self.config
    }

    pub fn z_dim(&self) -> usize {
        self.config.z_dim.unwrap_or(self.n)
    }

    pub fn generator(&self) -> &Network {
        &self.generator
    }

    pub fn discriminator(&self) -> &Network {
        &self.discriminator
    }

    pub fn generator_mut(&mut self) -> &mut Network {
        &mut self.generator
    }

    pub fn discriminator_mut(&mut self) -> &mut Network {
        &mut self.discriminator
    }

    pub fn last_trace(&self) -> &GanTrace {
        &self.last_trace
    }

    /// Fresh parameters and optimizer state.
    pub fn reinitialize<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(), ModelError> {
        let (generator, discriminator) = build_networks(self.n, &self.config, rng)?;
        self.generator_state = OptimizerState::new(&generator);
        self.discriminator_state = OptimizerState::new(&discriminator);
        self.generator = generator;
        self.discriminator = discriminator;
        Ok(())
    }

    pub fn sample_prior<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Matrix {
        let z_dim = self.z_dim();
        let data = match self.config.prior {
            PriorDistribution::Uniform => (0..rows * z_dim).map(|_| rng.gen::<f64>()).collect(),
            PriorDistribution::Normal => (0..rows * z_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect(),
        };
        Matrix::from_vec(rows, z_dim, data).expect("sized by construction")
    }

    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        training_set: &[Genotype],
        rng: &mut R,
    ) -> Result<&GanTrace, ModelError> {
        check_genotypes(self.n, training_set)?;
        let mut trace = GanTrace::default();
        for epoch in 0..self.config.epochs {
            let order = shuffled_indices(training_set.len(), rng);
            let mut loss_d = 0.0;
            let mut loss_g = 0.0;
            let mut d_real = 0.0;
            let mut d_fake = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                // discriminator: generator sample first, then the training example
                let z = self.sample_prior(chunk.len(), rng);
                let fake = self
                    .generator
                    .forward(&z, Mode::Train, rng)?
                    .output()
                    .clone();
                let real = genotype_matrix(self.n, chunk.iter().map(|&i| &training_set[i]));
                for (batch, target) in [(&fake, 0.0), (&real, 1.0)] {
                    let predictions = self.discriminator_step(batch, target, epoch, rng)?;
                    for &y in &predictions {
                        let loss = cross_entropy_loss(y, target);
                        loss_d += loss;
                        if target == 1.0 {
                            d_real += y;
                        } else {
                            d_fake += y;
                        }
                        if self.config.record_steps {
                            trace.steps.push(DiscriminatorStep {
                                epoch,
                                prediction: y,
                                target,
                                loss,
                            });
                        }
                    }
                }
                loss_g += self.generator_step(chunk.len(), epoch, rng)?;
            }
            let m = training_set.len() as f64;
            let stats = GanEpochStats {
                epoch,
                mean_loss_d: loss_d / (2.0 * m),
                mean_loss_g: loss_g / m,
                mean_d_real: d_real / m,
                mean_d_fake: d_fake / m,
            };
            if !(stats.mean_loss_d.is_finite() && stats.mean_loss_g.is_finite()) {
                return Err(
                    NnError::Numeric(format!("non-finite GAN loss in epoch {epoch}")).into(),
                );
            }
            trace.epochs.push(stats);
        }
        self.last_trace = trace;
        Ok(&self.last_trace)
    }

    /// One SGD step of the discriminator on a batch that is entirely real or
    /// entirely generated. Returns the predictions the step was computed from.
    fn discriminator_step<R: Rng + ?Sized>(
        &mut self,
        batch: &Matrix,
        target: f64,
        epoch: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>, ModelError> {
        let record = self.discriminator.forward(batch, Mode::Train, rng)?;
        let predictions = record.output().as_slice().to_vec();
        let scale = 1.0 / predictions.len() as f64;
        let output_grad = Matrix::from_vec(
            predictions.len(),
            1,
            predictions
                .iter()
                .map(|&y| cross_entropy_gradient(y, target) * scale)
                .collect(),
        )?;
        let grads = self.discriminator.backward(&record, &output_grad)?;
        sgd_step(
            &mut self.discriminator,
            &grads,
            &self.config.discriminator_optimizer,
            &mut self.discriminator_state,
            epoch,
        )?;
        Ok(predictions)
    }

    /// One SGD step of the generator; the discriminator is only read. Returns
    /// the summed generator loss of the batch.
    fn generator_step<R: Rng + ?Sized>(
        &mut self,
        rows: usize,
        epoch: usize,
        rng: &mut R,
    ) -> Result<f64, ModelError> {
        let z = self.sample_prior(rows, rng);
        let g_record = self.generator.forward(&z, Mode::Train, rng)?;
        let d_record = self
            .discriminator
            .forward(g_record.output(), Mode::Train, rng)?;
        let verdicts = d_record.output().as_slice();
        let scale = 1.0 / rows as f64;
        let loss: f64 = verdicts.iter().map(|&y| generator_loss(y)).sum();
        let output_grad = Matrix::from_vec(
            rows,
            1,
            verdicts
                .iter()
                .map(|&y| generator_loss_gradient(y) * scale)
                .collect(),
        )?;
        let through_d = self.discriminator.backward(&d_record, &output_grad)?;
        let grads = self.generator.backward(&g_record, &through_d.input)?;
        sgd_step(
            &mut self.generator,
            &grads,
            &self.config.generator_optimizer,
            &mut self.generator_state,
            epoch,
        )?;
        Ok(loss)
    }

    /// Per-bit probabilities `G(z)` for `count` prior draws.
    pub fn generate_probabilities<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Matrix, ModelError> {
        let z = self.sample_prior(count, rng);
        Ok(self.generator.predict(&z)?)
    }

    pub fn sample<R: Rng + ?Sized>(
        &self,
        count: usize,
        rng: &mut R,
    ) -> Result<Vec<Genotype>, ModelError> {
        if count == 0 {
            return Ok(Vec::new());
        }
        let probabilities = self.generate_probabilities(count, rng)?;
        Ok((0..count)
            .map(|r| bernoulli_bits(probabilities.row(r), rng))
            .collect())
    }

    pub fn discriminator_score(&self, g: &Genotype) -> Result<f64, ModelError> {
        if g.len() != self.n {
            return Err(ModelError::LengthMismatch {
                expected: self.n,
                got: g.len(),
            });
        }
        let y = self
            .discriminator
            .predict(&Matrix::row_vector(g.to_f64()))?;
        Ok(y.get(0, 0))
    }

    /// Backprop of the summed generator loss over `z` against central
    /// differences through the composed `D(G(z))`. Dropout must be off.
    pub fn check_generator_gradient(&self, z: &Matrix) -> Result<GradientComparison, ModelError> {
        let d = &self.discriminator;
        let loss = |generated: &Matrix| -> Result<(f64, Matrix), NnError> {
            let mut unused = rand::rngs::mock::StepRng::new(0, 0);
            let record = d.forward(generated, Mode::Train, &mut unused)?;
            let verdicts = record.output().as_slice();
            let total = verdicts.iter().map(|&y| generator_loss(y)).sum();
            let grad = Matrix::from_vec(
                verdicts.len(),
                1,
                verdicts
                    .iter()
                    .map(|&y| generator_loss_gradient(y))
                    .collect(),
            )?;
            Ok((total, d.backward(&record, &grad)?.input))
        };
        Ok(check_network(&self.generator, z, &loss)?)
    }
}

/// Generator gradients through `D(G(z))` for randomly initialized GANs of a
/// few sizes. Returns the largest relative error seen.
pub fn composed_gradient_check(seed: u64) -> Result<f64, ModelError> {
    let mut rng = EdaRng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for n in [4, 7, 12] {
        let config = GanConfig {
            init: InitSpec::Uniform { half_width: 0.5 },
            ..Default::default()
        };
        let model = GanModel::new(n, config, &mut rng)?;
        let z = model.sample_prior(3, &mut rng);
        worst = worst.max(model.check_generator_gradient(&z)?.max_relative_error);
    }
    Ok(worst)
}

fn build_networks<R: Rng + ?Sized>(
    n: usize,
    config: &GanConfig,
    rng: &mut R,
) -> Result<(Network, Network), ModelError> {
    let z_dim = config.z_dim.unwrap_or(n);
    let g_hidden = config.generator_hidden.unwrap_or(n);
    let d_hidden = config.discriminator_hidden.unwrap_or(n);
    let act = [config.hidden_activation, Activation::Sigmoid];
    let mut generator = Network::new(&[z_dim, g_hidden, n], &act, config.init, rng)?;
    let mut discriminator = Network::new(&[n, d_hidden, 1], &act, config.init, rng)?;
    if config.dropout > 0.0 {
        generator.set_dropout(1, config.dropout)?;
        discriminator.set_dropout(1, config.dropout)?;
    }
    Ok((generator, discriminator))
}

impl Model for GanModel {
    fn name(&self) -> &'static str {
        "gan"
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
        GanModel::fit(self, selected, rng).map(|_| ())
    }

    fn sample(
        &self,
        count: usize,
        _selected: &[Genotype],
        rng: &mut EdaRng,
    ) -> Result<Vec<Genotype>, ModelError> {
        GanModel::sample(self, count, rng)
    }
}
