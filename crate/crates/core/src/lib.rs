//! Estimation-of-distribution algorithms over bit-string benchmarks, with a
//! generative adversarial network, a denoising autoencoder and a univariate
//! marginal model as interchangeable probabilistic models.
//!
//! ```
//! use edalab::eda::{run_eda, EdaConfig, ModelSpec};
//! use edalab::problems::ProblemInstance;
//!
//! let onemax = ProblemInstance::onemax(20).unwrap();
//! let config = EdaConfig { population_size: 60, model: ModelSpec::Umda, seed: 1, ..Default::default() };
//! let record = run_eda(&onemax, &config).unwrap();
//! assert!(record.best_fitness() <= 20.0);
//! ```

pub mod dae;
pub mod eda;
pub mod gan;
pub mod harness;
pub mod model;
pub mod nn;
pub mod problems;
pub mod umda;

pub use eda::{run_eda, EdaConfig, ModelSpec, RunRecord};
pub use model::{EdaRng, Model, ModelError};
pub use problems::{Genotype, ProblemInstance};
