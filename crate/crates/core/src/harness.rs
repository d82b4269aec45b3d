//! Experiment driver: `key=value` configuration files, population-size sweeps
//! with repeated seeded runs, CSV output and NK instance verification.
//!
//! Configuration keys (all optional unless marked):
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `problem` | required | `onemax`, `trap`, `nk` or `hiff` |
//! | `n` | required unless `nk.instance` | genotype length |
//! | `k` | trap: 5, nk: 4 | trap block size / NK neighborhood |
//! | `nk.instance` | | NK instance file (overrides `n`, `k`) |
//! | `nk.seed` | 1 | generator seed when no instance file is given |
//! | `model` | required | `gan`, `dae` or `umda` |
//! | `pop_sizes` | `32,64,128,256,512` | population sizes |
//! | `runs` | 20 | runs per population size |
//! | `seed` | 42 | base seed; run `i` uses `seed + i` |
//! | `truncation` | 0.5 | selected fraction |
//! | `max_generations` | 200 | |
//! | `stall_generations` | 30 | |
//! | `output` | | output directory |
//! | `opt.alpha`, `opt.momentum`, `opt.weight_decay` | model default | SGD settings for every network |
//! | `opt.alpha_schedule`, `opt.momentum_schedule`, `opt.weight_decay_schedule` | constant | `epoch:multiplier,...` |
//! | `opt.init`, `opt.init_scale` | `normal`, 0.01 | weight initialization |
//! | `gan.z_dim`, `gan.prior`, `gan.g_hidden`, `gan.d_hidden`, `gan.hidden_activation` | | GAN topology |
//! | `gan.epochs`, `gan.batch_size`, `gan.dropout`, `gan.warm_start`, `gan.g_alpha`, `gan.d_alpha` | | GAN training |
//! | `dae.hidden`, `dae.hidden_activation`, `dae.rho`, `dae.sample_rho`, `dae.chain_steps` | | DAE model |
//! | `dae.epochs`, `dae.batch_size`, `dae.warm_start` | | DAE training |

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::dae::DaeConfig;
use crate::eda::{run_eda, EdaConfig, EdaError, ModelSpec, RunRecord};
use crate::gan::{GanConfig, PriorDistribution};
use crate::nn::{Activation, InitSpec, OptimizerConfig, Schedule};
use crate::problems::{
    generate_nk_instance, load_nk_instance, Genotype, ProblemError, ProblemInstance, ProblemKind,
};

pub const DEFAULT_POPULATION_SIZES: [usize; 5] = [32, 64, 128, 256, 512];
pub const DEFAULT_RUNS: usize = 20;
pub const DEFAULT_SEED: u64 = 42;

pub const RUN_COLUMNS: [&str; 12] = [
    "problem",
    "n",
    "k",
    "model",
    "pop_size",
    "run_id",
    "seed",
    "generations",
    "unique_evals",
    "best_fitness",
    "optimum_found",
    "cpu_seconds",
];

pub const AGGREGATE_COLUMNS: [&str; 10] = [
    "problem",
    "n",
    "k",
    "model",
    "pop_size",
    "mean_best_fitness",
    "std_best_fitness",
    "mean_unique_evals",
    "mean_cpu_seconds",
    "success_fraction",
];

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown key '{key}'")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value '{value}' for '{key}', expected {expected}")]
    InvalidValue {
        line: usize,
        key: String,
        value: String,
        expected: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Eda(#[from] EdaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub enum ProblemSpec {
    OneMax { n: usize },
    Trap { n: usize, k: usize },
    Hiff { n: usize },
    NkFile { path: PathBuf },
    NkGenerated { n: usize, k: usize, seed: u64 },
}

impl ProblemSpec {
    pub fn instantiate(&self) -> Result<ProblemInstance, ProblemError> {
        match self {
            ProblemSpec::OneMax { n } => ProblemInstance::onemax(*n),
            ProblemSpec::Trap { n, k } => ProblemInstance::concat_trap(*n, *k),
            ProblemSpec::Hiff { n } => ProblemInstance::hiff(*n),
            ProblemSpec::NkFile { path } => load_nk_instance(path),
            ProblemSpec::NkGenerated { n, k, seed } => generate_nk_instance(*n, *k, *seed),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub model: ModelSpec,
    pub population_sizes: Vec<usize>,
    pub runs_per_setting: usize,
    pub base_seed: u64,
    pub truncation: f64,
    pub max_generations: usize,
    pub stall_generations: usize,
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, model: ModelSpec) -> Self {
        let eda = EdaConfig::default();
        ExperimentConfig {
            problem,
            model,
            population_sizes: DEFAULT_POPULATION_SIZES.to_vec(),
            runs_per_setting: DEFAULT_RUNS,
            base_seed: DEFAULT_SEED,
            truncation: eda.truncation,
            max_generations: eda.max_generations,
            stall_generations: eda.stall_generations,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.population_sizes.is_empty() {
            return Err(HarnessError::Config(
                "population sizes must not be empty".into(),
            ));
        }
        if self.runs_per_setting == 0 {
            return Err(HarnessError::Config("runs per setting must be >= 1".into()));
        }
        for &size in &self.population_sizes {
            self.eda_config(size, self.base_seed).validate()?;
        }
        Ok(())
    }

    pub fn eda_config(&self, population_size: usize, seed: u64) -> EdaConfig {
        EdaConfig {
            population_size,
            truncation: self.truncation,
            max_generations: self.max_generations,
            stall_generations: self.stall_generations,
            model: self.model.clone(),
            seed,
        }
    }
}

struct Entry {
    line: usize,
    value: String,
    used: bool,
}

/// Key lookup with typed conversion and line-numbered errors.
struct Entries(HashMap<String, Entry>);

impl Entries {
    fn raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.0.get_mut(key).map(|e| {
            e.used = true;
            (e.line, e.value.clone())
        })
    }

    fn get<T: FromStr>(&mut self, key: &str, expected: &str) -> Result<Option<T>, HarnessError> {
        match self.raw(key) {
            None => Ok(None),
            Some((line, value)) => {
                value
                    .parse::<T>()
                    .map(Some)
                    .map_err(|_| HarnessError::InvalidValue {
                        line,
                        key: key.into(),
                        value,
                        expected: expected.into(),
                    })
            }
        }
    }

    fn checked<T: FromStr + Copy>(
        &mut self,
        key: &str,
        expected: &str,
        ok: impl Fn(T) -> bool,
    ) -> Result<Option<T>, HarnessError> {
        let line = self.0.get(key).map(|e| e.line);
        match self.get::<T>(key, expected)? {
            Some(v) if !ok(v) => Err(HarnessError::InvalidValue {
                line: line.unwrap_or(0),
                key: key.into(),
                value: self.0[key].value.clone(),
                expected: expected.into(),
            }),
            other => Ok(other),
        }
    }

    fn invalid(&self, key: &str, expected: &str) -> HarnessError {
        let e = &self.0[key];
        HarnessError::InvalidValue {
            line: e.line,
            key: key.into(),
            value: e.value.clone(),
            expected: expected.into(),
        }
    }

    fn schedule(&mut self, key: &str) -> Result<Option<Schedule>, HarnessError> {
        let Some((_, value)) = self.raw(key) else {
            return Ok(None);
        };
        let expected = "'epoch:multiplier' pairs separated by commas";
        let points = value
            .split(',')
            .map(|pair| {
                let (e, m) = pair.split_once(':')?;
                Some((e.trim().parse().ok()?, m.trim().parse().ok()?))
            })
            .collect::<Option<Vec<(f64, f64)>>>()
            .ok_or_else(|| self.invalid(key, expected))?;
        Schedule::new(points)
            .map(Some)
            .map_err(|_| self.invalid(key, expected))
    }
}

fn parse_list(value: &str) -> Option<Vec<usize>> {
    value
        .split(',')
        .map(|s| s.trim().parse().ok().filter(|&v| v > 0))
        .collect()
}

const KNOWN_KEYS: &[&str] = &[
    "problem",
    "n",
    "k",
    "nk.instance",
    "nk.seed",
    "model",
    "pop_sizes",
    "runs",
    "seed",
    "truncation",
    "max_generations",
    "stall_generations",
    "output",
    "opt.alpha",
    "opt.momentum",
    "opt.weight_decay",
    "opt.alpha_schedule",
    "opt.momentum_schedule",
    "opt.weight_decay_schedule",
    "opt.init",
    "opt.init_scale",
    "gan.z_dim",
    "gan.prior",
    "gan.g_hidden",
    "gan.d_hidden",
    "gan.hidden_activation",
    "gan.epochs",
    "gan.batch_size",
    "gan.dropout",
    "gan.warm_start",
    "gan.g_alpha",
    "gan.d_alpha",
    "dae.hidden",
    "dae.hidden_activation",
    "dae.rho",
    "dae.sample_rho",
    "dae.chain_steps",
    "dae.epochs",
    "dae.batch_size",
    "dae.warm_start",
];

/// Parses a configuration file. Relative `nk.instance` paths are kept as written.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, HarnessError> {
    let mut map = HashMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| HarnessError::Parse {
            line,
            message: format!("expected 'key=value', found '{content}'"),
        })?;
        let key = key.trim();
        if !KNOWN_KEYS.contains(&key) {
            return Err(HarnessError::UnknownKey {
                line,
                key: key.into(),
            });
        }
        let entry = Entry {
            line,
            value: value.trim().to_string(),
            used: false,
        };
        if map.insert(key.to_string(), entry).is_some() {
            return Err(HarnessError::Parse {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
    }
    let mut e = Entries(map);

    let kind: ProblemKind = e
        .get("problem", "one of onemax, trap, nk, hiff")?
        .ok_or_else(|| HarnessError::Config("missing required key 'problem'".into()))?;
    let n = e.checked::<usize>("n", "a positive integer", |v| v > 0)?;
    let k = e.checked::<usize>("k", "a positive integer", |v| v > 0)?;
    let require_n = || n.ok_or_else(|| HarnessError::Config(format!("problem '{kind}' needs 'n'")));
    let problem = match kind {
        ProblemKind::OneMax => ProblemSpec::OneMax { n: require_n()? },
        ProblemKind::Hiff => ProblemSpec::Hiff { n: require_n()? },
        ProblemKind::ConcatTrap => ProblemSpec::Trap {
            n: require_n()?,
            k: k.unwrap_or(5),
        },
        ProblemKind::NkLandscape => match e.raw("nk.instance") {
            Some((_, path)) => ProblemSpec::NkFile { path: path.into() },
            None => ProblemSpec::NkGenerated {
                n: require_n()?,
                k: k.unwrap_or(4),
                seed: e.get("nk.seed", "an unsigned integer")?.unwrap_or(1),
            },
        },
    };

    let init_kind = e.get::<String>("opt.init", "normal or uniform")?;
    let init_scale = e.checked::<f64>("opt.init_scale", "a number >= 0", |v| {
        v >= 0.0 && v.is_finite()
    })?;
    let init = match (init_kind.as_deref(), init_scale) {
        (None, None) => None,
        (None | Some("normal"), scale) => Some(InitSpec::Normal {
            sigma: scale.unwrap_or(0.01),
        }),
        (Some("uniform"), scale) => Some(InitSpec::Uniform {
            half_width: scale.unwrap_or(0.01),
        }),
        (Some(_), _) => return Err(e.invalid("opt.init", "normal or uniform")),
    };
    let alpha = e.checked::<f64>("opt.alpha", "a number in [0, 1)", |v| {
        (0.0..1.0).contains(&v)
    })?;
    let momentum = e.checked::<f64>("opt.momentum", "a number in [0, 1)", |v| {
        (0.0..1.0).contains(&v)
    })?;
    let weight_decay = e.checked::<f64>("opt.weight_decay", "a number >= 0", |v| {
        v >= 0.0 && v.is_finite()
    })?;
    let schedules = (
        e.schedule("opt.alpha_schedule")?,
        e.schedule("opt.momentum_schedule")?,
        e.schedule("opt.weight_decay_schedule")?,
    );
    let apply_opt = |base: &OptimizerConfig| {
        let mut o = base.clone();
        if let Some(v) = alpha {
            o.learning_rate = v;
        }
        if let Some(v) = momentum {
            o.momentum = v;
        }
        if let Some(v) = weight_decay {
            o.weight_decay = v;
        }
        if let Some(s) = &schedules.0 {
            o.learning_rate_schedule = s.clone();
        }
        if let Some(s) = &schedules.1 {
            o.momentum_schedule = s.clone();
        }
        if let Some(s) = &schedules.2 {
            o.weight_decay_schedule = s.clone();
        }
        o
    };
    let positive = |v: usize| v > 0;
    let unit = |v: f64| (0.0..1.0).contains(&v);
    let probability = |v: f64| (0.0..=1.0).contains(&v);

    let mut gan = GanConfig::default();
    gan.generator_optimizer = apply_opt(&gan.generator_optimizer);
    gan.discriminator_optimizer = apply_opt(&gan.discriminator_optimizer);
    if let Some(init) = init {
        gan.init = init;
    }
    if let Some(v) = e.checked("gan.z_dim", "a positive integer", positive)? {
        gan.z_dim = Some(v);
    }
    if let Some(v) = e.get::<PriorDistribution>("gan.prior", "uniform or normal")? {
        gan.prior = v;
    }
    if let Some(v) = e.checked("gan.g_hidden", "a positive integer", positive)? {
        gan.generator_hidden = Some(v);
    }
    if let Some(v) = e.checked("gan.d_hidden", "a positive integer", positive)? {
        gan.discriminator_hidden = Some(v);
    }
    if let Some(v) = e.get::<Activation>("gan.hidden_activation", "sigmoid, relu or linear")? {
        gan.hidden_activation = v;
    }
    if let Some(v) = e.get("gan.epochs", "a non-negative integer")? {
        gan.epochs = v;
    }
    if let Some(v) = e.checked("gan.batch_size", "a positive integer", positive)? {
        gan.batch_size = v;
    }
    if let Some(v) = e.checked("gan.dropout", "a number in [0, 1)", unit)? {
        gan.dropout = v;
    }
    if let Some(v) = e.get("gan.warm_start", "true or false")? {
        gan.warm_start = v;
    }
    if let Some(v) = e.checked("gan.g_alpha", "a number in [0, 1)", unit)? {
        gan.generator_optimizer.learning_rate = v;
    }
    if let Some(v) = e.checked("gan.d_alpha", "a number in [0, 1)", unit)? {
        gan.discriminator_optimizer.learning_rate = v;
    }

    let mut dae = DaeConfig::default();
    dae.optimizer = apply_opt(&dae.optimizer);
    if let Some(init) = init {
        dae.init = init;
    }
    if let Some(v) = e.checked("dae.hidden", "a positive integer", positive)? {
        dae.hidden = Some(v);
    }
    if let Some(v) = e.get::<Activation>("dae.hidden_activation", "sigmoid, relu or linear")? {
        dae.hidden_activation = v;
    }
    if let Some(v) = e.checked("dae.rho", "a number in [0, 1]", probability)? {
        dae.corruption_rate = v;
    }
    if let Some(v) = e.checked("dae.sample_rho", "a number in [0, 1]", probability)? {
        dae.sample_corruption_rate = Some(v);
    }
    if let Some(v) = e.get("dae.chain_steps", "a non-negative integer")? {
        dae.chain_steps = v;
    }
    if let Some(v) = e.get("dae.epochs", "a non-negative integer")? {
        dae.epochs = v;
    }
    if let Some(v) = e.checked("dae.batch_size", "a positive integer", positive)? {
        dae.batch_size = v;
    }
    if let Some(v) = e.get("dae.warm_start", "true or false")? {
        dae.warm_start = v;
    }

    let model = match e
        .get::<String>("model", "one of gan, dae, umda")?
        .as_deref()
    {
        Some("gan") => ModelSpec::Gan(gan),
        Some("dae") => ModelSpec::Dae(dae),
        Some("umda") => ModelSpec::Umda,
        Some(_) => return Err(e.invalid("model", "one of gan, dae, umda")),
        None => return Err(HarnessError::Config("missing required key 'model'".into())),
    };

    let mut config = ExperimentConfig::new(problem, model);
    if let Some((line, value)) = e.raw("pop_sizes") {
        config.population_sizes = parse_list(&value).ok_or(HarnessError::InvalidValue {
            line,
            key: "pop_sizes".into(),
            value,
            expected: "comma-separated positive integers".into(),
        })?;
    }
    if let Some(v) = e.checked("runs", "a positive integer", positive)? {
        config.runs_per_setting = v;
    }
    if let Some(v) = e.get("seed", "an unsigned integer")? {
        config.base_seed = v;
    }
    if let Some(v) = e.checked("truncation", "a number in (0, 1]", |v: f64| {
        v > 0.0 && v <= 1.0
    })? {
        config.truncation = v;
    }
    if let Some(v) = e.get("max_generations", "a non-negative integer")? {
        config.max_generations = v;
    }
    if let Some(v) = e.checked("stall_generations", "a positive integer", positive)? {
        config.stall_generations = v;
    }
    if let Some((_, v)) = e.raw("output") {
        config.output = Some(v.into());
    }
    debug_assert!(e.0.iter().all(|(k, v)| v.used || k.starts_with("nk.")));

    match &config.model {
        ModelSpec::Gan(g) => g
            .validate()
            .map_err(|err| HarnessError::Config(err.to_string()))?,
        ModelSpec::Dae(d) => d
            .validate()
            .map_err(|err| HarnessError::Config(err.to_string()))?,
        ModelSpec::Umda => {}
    }
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let mut config = parse_config(&std::fs::read_to_string(path)?)?;
    // instance paths are relative to the config file
    if let ProblemSpec::NkFile { path: instance } = &mut config.problem {
        if instance.is_relative() {
            if let Some(dir) = path.parent() {
                *instance = dir.join(&*instance);
            }
        }
    }
    Ok(config)
}

/// One per-run line of a sweep.
#[derive(Clone, Debug)]
pub struct RunRow {
    pub pop_size: usize,
    pub run_id: usize,
    pub seed: u64,
    pub outcome: Result<RunRecord, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub pop_size: usize,
    pub completed_runs: usize,
    pub mean_best_fitness: f64,
    pub std_best_fitness: f64,
    pub mean_unique_evals: f64,
    pub mean_cpu_seconds: f64,
    pub success_fraction: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub problem: ProblemKind,
    pub n: usize,
    pub k: Option<usize>,
    pub model: &'static str,
    pub known_optimum: Option<f64>,
    pub runs: Vec<RunRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl SweepResult {
    pub fn failures(&self) -> usize {
        self.runs.iter().filter(|r| r.outcome.is_err()).count()
    }

    pub fn aggregate(&self, pop_size: usize) -> Option<&AggregateRow> {
        self.aggregates.iter().find(|a| a.pop_size == pop_size)
    }

    pub fn records(&self, pop_size: usize) -> impl Iterator<Item = &RunRecord> {
        self.runs
            .iter()
            .filter(move |r| r.pop_size == pop_size)
            .filter_map(|r| r.outcome.as_ref().ok())
    }

    fn prefix(&self) -> [String; 4] {
        [
            self.problem.name().to_string(),
            self.n.to_string(),
            self.k.map(|k| k.to_string()).unwrap_or_default(),
            self.model.to_string(),
        ]
    }

    pub fn write_runs_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_COLUMNS)?;
        for row in &self.runs {
            let mut fields: Vec<String> = self.prefix().to_vec();
            fields.extend([
                row.pop_size.to_string(),
                row.run_id.to_string(),
                row.seed.to_string(),
            ]);
            match &row.outcome {
                Ok(r) => fields.extend([
                    r.generations_run.to_string(),
                    r.unique_evaluations.to_string(),
                    r.best_fitness().to_string(),
                    r.optimum_found.to_string(),
                    r.cpu_seconds.to_string(),
                ]),
                // failed runs keep their seed but carry no results
                Err(_) => fields.extend(["", "", "", "false", ""].map(String::from)),
            }
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_aggregate_csv<W: Write>(&self, out: W) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(AGGREGATE_COLUMNS)?;
        for a in &self.aggregates {
            let mut fields: Vec<String> = self.prefix().to_vec();
            fields.extend([
                a.pop_size.to_string(),
                a.mean_best_fitness.to_string(),
                a.std_best_fitness.to_string(),
                a.mean_unique_evals.to_string(),
                a.mean_cpu_seconds.to_string(),
                a.success_fraction.to_string(),
            ]);
            w.write_record(&fields)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `runs.csv` and `aggregate.csv` into `dir`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
        std::fs::create_dir_all(dir)?;
        let runs = dir.join("runs.csv");
        let aggregate = dir.join("aggregate.csv");
        self.write_runs_csv(std::fs::File::create(&runs)?)?;
        self.write_aggregate_csv(std::fs::File::create(&aggregate)?)?;
        Ok((runs, aggregate))
    }
}

/// Mean and sample standard deviation (n - 1 denominator; 0 for a single value).
pub fn mean_and_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0);
    (mean, var.sqrt())
}

pub fn aggregate_records(
    pop_size: usize,
    records: &[&RunRecord],
    attempted: usize,
) -> AggregateRow {
    let best: Vec<f64> = records.iter().map(|r| r.best_fitness()).collect();
    let (mean_best_fitness, std_best_fitness) = mean_and_std(&best);
    let evals: Vec<f64> = records
        .iter()
        .map(|r| r.unique_evaluations as f64)
        .collect();
    let cpu: Vec<f64> = records.iter().map(|r| r.cpu_seconds).collect();
    let successes = records.iter().filter(|r| r.optimum_found).count();
    AggregateRow {
        pop_size,
        completed_runs: records.len(),
        mean_best_fitness,
        std_best_fitness,
        mean_unique_evals: mean_and_std(&evals).0,
        mean_cpu_seconds: mean_and_std(&cpu).0,
        success_fraction: successes as f64 / attempted.max(1) as f64,
    }
}

/// Re-executes a single run of a sweep from its population size and seed.
pub fn reproduce_run(
    config: &ExperimentConfig,
    instance: &ProblemInstance,
    pop_size: usize,
    seed: u64,
) -> Result<RunRecord, EdaError> {
    run_eda(instance, &config.eda_config(pop_size, seed))
}

/// Runs every (population size, run index) pair on a pool of `jobs` workers.
/// Rows come back sorted by population size, then run index.
pub fn run_sweep(config: &ExperimentConfig, jobs: usize) -> Result<SweepResult, HarnessError> {
    config.validate()?;
    let instance = config.problem.instantiate()?;
    let mut sizes = config.population_sizes.clone();
    sizes.sort_unstable();
    sizes.dedup();
    let tasks: Vec<(usize, usize, u64)> = sizes
        .iter()
        .flat_map(|&size| {
            (0..config.runs_per_setting)
                .map(move |run| (size, run, config.base_seed.wrapping_add(run as u64)))
        })
        .collect();
    let execute = |&(pop_size, run_id, seed): &(usize, usize, u64)| RunRow {
        pop_size,
        run_id,
        seed,
        outcome: reproduce_run(config, &instance, pop_size, seed).map_err(|e| e.to_string()),
    };
    let runs: Vec<RunRow> = if jobs <= 1 {
        tasks.iter().map(execute).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
        pool.install(|| tasks.par_iter().map(execute).collect())
    };
    let aggregates = sizes
        .iter()
        .map(|&size| {
            let records: Vec<&RunRecord> = runs
                .iter()
                .filter(|r| r.pop_size == size)
                .filter_map(|r| r.outcome.as_ref().ok())
                .collect();
            aggregate_records(size, &records, config.runs_per_setting)
        })
        .collect();
    Ok(SweepResult {
        problem: instance.kind(),
        n: instance.n(),
        k: instance.k(),
        model: config.model.name(),
        known_optimum: instance.known_optimum(),
        runs,
        aggregates,
    })
}

/// A per-run CSV line read back from disk. Result fields are `None` for failed runs.
#[derive(Clone, Debug, PartialEq)]
pub struct RunCsvRow {
    pub problem: String,
    pub n: usize,
    pub k: Option<usize>,
    pub model: String,
    pub pop_size: usize,
    pub run_id: usize,
    pub seed: u64,
    pub generations: Option<usize>,
    pub unique_evals: Option<usize>,
    pub best_fitness: Option<f64>,
    pub optimum_found: bool,
    pub cpu_seconds: Option<f64>,
}

pub fn read_runs_csv<R: Read>(input: R) -> Result<Vec<RunCsvRow>, HarnessError> {
    let mut reader = csv::Reader::from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.iter().ne(RUN_COLUMNS) {
        return Err(HarnessError::Config(format!(
            "unexpected run CSV header {headers:?}"
        )));
    }
    let bad = |row: usize, col: &str| HarnessError::Parse {
        line: row + 2,
        message: format!("invalid '{col}' field"),
    };
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        fn opt<T: FromStr>(s: &str) -> Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        rows.push(RunCsvRow {
            problem: field(0).to_string(),
            n: field(1).parse().map_err(|_| bad(i, "n"))?,
            k: opt(field(2)).map_err(|_| bad(i, "k"))?,
            model: field(3).to_string(),
            pop_size: field(4).parse().map_err(|_| bad(i, "pop_size"))?,
            run_id: field(5).parse().map_err(|_| bad(i, "run_id"))?,
            seed: field(6).parse().map_err(|_| bad(i, "seed"))?,
            generations: opt(field(7)).map_err(|_| bad(i, "generations"))?,
            unique_evals: opt(field(8)).map_err(|_| bad(i, "unique_evals"))?,
            best_fitness: opt(field(9)).map_err(|_| bad(i, "best_fitness"))?,
            optimum_found: field(10).parse().map_err(|_| bad(i, "optimum_found"))?,
            cpu_seconds: opt(field(11)).map_err(|_| bad(i, "cpu_seconds"))?,
        });
    }
    Ok(rows)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerifyStatus {
    Match,
    Mismatch,
    /// The file carries no `optimum` line.
    Missing,
}

#[derive(Clone, Debug, PartialEq)]
pub struct VerifyReport {
    pub n: usize,
    pub k: usize,
    pub stated_optimum: Option<f64>,
    pub brute_force_optimum: f64,
    pub argmax: Genotype,
    pub status: VerifyStatus,
}

impl fmt::Display for VerifyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let stated = self
            .stated_optimum
            .map_or_else(|| "none".to_string(), |v| v.to_string());
        let status = match self.status {
            VerifyStatus::Match => "match",
            VerifyStatus::Mismatch => "MISMATCH",
            VerifyStatus::Missing => "no optimum line",
        };
        write!(
            f,
            "nk n={} k={}: stated optimum {stated}, brute force {} at {}: {status}",
            self.n, self.k, self.brute_force_optimum, self.argmax
        )
    }
}

pub fn verify_instance(path: &Path) -> Result<VerifyReport, HarnessError> {
    let instance = load_nk_instance(path)?;
    let (best, argmax) = instance.brute_force_optimum()?;
    let stated = instance.known_optimum();
    let status = match stated {
        None => VerifyStatus::Missing,
        Some(v) if (v - best).abs() <= 1e-9 * best.abs().max(1.0) => VerifyStatus::Match,
        Some(_) => VerifyStatus::Mismatch,
    };
    Ok(VerifyReport {
        n: instance.n(),
        k: instance.k().expect("nk instance"),
        stated_optimum: stated,
        brute_force_optimum: best,
        argmax,
        status,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{format_nk_instance, save_nk_instance};

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config("problem=onemax\nn=30\nmodel=umda\n").unwrap();
        assert_eq!(c.problem, ProblemSpec::OneMax { n: 30 });
        assert_eq!(c.model, ModelSpec::Umda);
        assert_eq!(c.truncation, 0.5);
        assert_eq!(c.population_sizes, vec![32, 64, 128, 256, 512]);
        assert_eq!(c.runs_per_setting, 20);
        assert_eq!(c.base_seed, 42);
        assert_eq!(c.max_generations, 200);
        assert_eq!(c.stall_generations, 30);
    }

    #[test]
    fn zero_gan_epochs_is_valid() {
        let c = parse_config("problem=onemax\nn=30\nmodel=gan\ngan.epochs=0\n").unwrap();
        match c.model {
            ModelSpec::Gan(g) => assert_eq!(g.epochs, 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        let err = parse_config("problem=onemax\nn=30\nmodel=umda\ntruncation=1.5\n").unwrap_err();
        assert!(
            matches!(&err, HarnessError::InvalidValue { line: 4, key, .. } if key == "truncation"),
            "{err}"
        );
        let err = parse_config("problem=onemax\nn=30\nmodel=umda\ncolour=blue\n").unwrap_err();
        assert!(
            matches!(err, HarnessError::UnknownKey { line: 4, .. }),
            "{err}"
        );
        let err = parse_config("problem=onemax\nn 30\n").unwrap_err();
        assert!(matches!(err, HarnessError::Parse { line: 2, .. }), "{err}");
        let err = parse_config("problem=onemax\nn=30\nmodel=umda\npop_sizes=\n").unwrap_err();
        assert!(matches!(err, HarnessError::InvalidValue { .. }), "{err}");
        assert!(parse_config("problem=onemax\nn=30\n").is_err());
        assert!(parse_config("problem=tsp\nn=30\nmodel=umda\n").is_err());
        assert!(parse_config("problem=onemax\nn=30\nmodel=umda\nn=31\n").is_err());
        assert!(parse_config("problem=trap\nn=31\nmodel=umda\n").is_ok());
    }

    #[test]
    fn namespaced_keys() {
        let text = "\
# GAN on traps
problem = trap
n = 20
k = 4
model = gan
opt.alpha = 0.05        # shared
opt.momentum = 0.5
opt.alpha_schedule = 0:1, 10:0.1
opt.init = uniform
opt.init_scale = 0.1
gan.d_alpha = 0.02
gan.z_dim = 8
gan.prior = normal
gan.epochs = 3
pop_sizes = 16, 64
runs = 2
seed = 7
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.problem, ProblemSpec::Trap { n: 20, k: 4 });
        assert_eq!(c.population_sizes, vec![16, 64]);
        let ModelSpec::Gan(g) = c.model else { panic!() };
        assert_eq!(g.generator_optimizer.learning_rate, 0.05);
        assert_eq!(g.discriminator_optimizer.learning_rate, 0.02);
        assert_eq!(g.generator_optimizer.momentum, 0.5);
        assert_eq!(g.generator_optimizer.learning_rate_schedule.at(5), 0.55);
        assert_eq!(g.init, InitSpec::Uniform { half_width: 0.1 });
        assert_eq!(g.z_dim, Some(8));
        assert_eq!(g.prior, PriorDistribution::Normal);
    }

    #[test]
    fn empty_population_list_is_a_config_error() {
        let mut c = parse_config("problem=onemax\nn=30\nmodel=umda\n").unwrap();
        c.population_sizes.clear();
        assert!(matches!(run_sweep(&c, 1), Err(HarnessError::Config(_))));
    }

    #[test]
    fn nk_problem_specs() {
        let c = parse_config("problem=nk\nn=12\nk=3\nnk.seed=9\nmodel=umda\n").unwrap();
        assert_eq!(
            c.problem,
            ProblemSpec::NkGenerated {
                n: 12,
                k: 3,
                seed: 9
            }
        );
        let dir = tempfile::tempdir().unwrap();
        let inst = generate_nk_instance(10, 2, 1).unwrap();
        save_nk_instance(&inst, &dir.path().join("a.nk")).unwrap();
        let cfg = dir.path().join("exp.cfg");
        std::fs::write(&cfg, "problem=nk\nnk.instance=a.nk\nmodel=umda\n").unwrap();
        let c = load_config(&cfg).unwrap();
        assert_eq!(c.problem.instantiate().unwrap(), inst);
    }

    fn small_sweep() -> ExperimentConfig {
        let mut c =
            parse_config("problem=onemax\nn=20\nmodel=umda\npop_sizes=40,20\nruns=3\nseed=5\n")
                .unwrap();
        c.max_generations = 50;
        c
    }

    #[test]
    fn sweep_rows_are_canonical_and_aggregates_recompute() {
        let c = small_sweep();
        let result = run_sweep(&c, 2).unwrap();
        let order: Vec<(usize, usize, u64)> = result
            .runs
            .iter()
            .map(|r| (r.pop_size, r.run_id, r.seed))
            .collect();
        assert_eq!(
            order,
            vec![
                (20, 0, 5),
                (20, 1, 6),
                (20, 2, 7),
                (40, 0, 5),
                (40, 1, 6),
                (40, 2, 7)
            ]
        );

        let mut buf = Vec::new();
        result.write_runs_csv(&mut buf).unwrap();
        let rows = read_runs_csv(buf.as_slice()).unwrap();
        for a in &result.aggregates {
            let best: Vec<f64> = rows
                .iter()
                .filter(|r| r.pop_size == a.pop_size)
                .map(|r| r.best_fitness.unwrap())
                .collect();
            let (m, s) = mean_and_std(&best);
            assert!((m - a.mean_best_fitness).abs() <= 1e-12);
            assert!((s - a.std_best_fitness).abs() <= 1e-12);
            assert!((0.0..=1.0).contains(&a.success_fraction));
            assert!(a.mean_best_fitness <= 20.0);
        }
        let mut agg = Vec::new();
        result.write_aggregate_csv(&mut agg).unwrap();
        let text = String::from_utf8(agg).unwrap();
        assert!(text.starts_with(&AGGREGATE_COLUMNS.join(",")));
        assert!(text
            .lines()
            .nth(1)
            .unwrap()
            .starts_with("onemax,20,,umda,20,"));
    }

    #[test]
    fn sweeps_are_deterministic_except_timing() {
        let c = small_sweep();
        let strip = |r: &SweepResult| {
            let mut buf = Vec::new();
            r.write_runs_csv(&mut buf).unwrap();
            read_runs_csv(buf.as_slice())
                .unwrap()
                .into_iter()
                .map(|mut row| {
                    row.cpu_seconds = None;
                    row
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(
            strip(&run_sweep(&c, 1).unwrap()),
            strip(&run_sweep(&c, 3).unwrap())
        );
    }

    #[test]
    fn verify_reports() {
        let dir = tempfile::tempdir().unwrap();
        let inst = generate_nk_instance(12, 4, 1).unwrap();
        let good = dir.path().join("good.nk");
        save_nk_instance(&inst, &good).unwrap();
        assert_eq!(verify_instance(&good).unwrap().status, VerifyStatus::Match);

        let off = inst.known_optimum().unwrap() + 1.0;
        let bad = dir.path().join("bad.nk");
        std::fs::write(
            &bad,
            format_nk_instance(&inst.clone().with_known_optimum(Some(off))).unwrap(),
        )
        .unwrap();
        let report = verify_instance(&bad).unwrap();
        assert_eq!(report.status, VerifyStatus::Mismatch);
        assert!(report.to_string().contains("MISMATCH"));

        let missing = dir.path().join("missing.nk");
        std::fs::write(
            &missing,
            format_nk_instance(&inst.with_known_optimum(None)).unwrap(),
        )
        .unwrap();
        assert_eq!(
            verify_instance(&missing).unwrap().status,
            VerifyStatus::Missing
        );

        let big = dir.path().join("big.nk");
        save_nk_instance(&generate_nk_instance(30, 2, 1).unwrap(), &big).unwrap();
        assert!(matches!(
            verify_instance(&big),
            Err(HarnessError::Problem(ProblemError::Capacity { n: 30, .. }))
        ));
    }
}
