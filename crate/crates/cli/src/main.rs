use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use edalab::gan::composed_gradient_check;
use edalab::harness::{load_config, run_sweep, verify_instance, VerifyStatus};
use edalab::nn::gradcheck::{run_suite, MAX_RELATIVE_ERROR};
use edalab::problems::{generate_nk_instance, save_nk_instance};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUN_FAILURES: u8 = 2;
const EXIT_MISMATCH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "edalab",
    version,
    about = "EDA experiments with GAN, DAE and UMDA models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a population-size sweep and write runs.csv and aggregate.csv
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the config's `output` key, then ./results
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; defaults to the number of CPUs
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Brute-force an NK instance and compare with its stated optimum
    Verify {
        #[arg(long)]
        instance: PathBuf,
    },
    /// Generate a random NK instance file
    GenNk {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Finite-difference check of backpropagation on random networks
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        configurations: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(config: PathBuf, out: Option<PathBuf>, jobs: Option<usize>) -> anyhow::Result<ExitCode> {
    let config = load_config(&config).with_context(|| format!("reading {}", config.display()))?;
    let jobs = jobs.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |p| p.get()));
    let out = out
        .or_else(|| config.output.clone())
        .unwrap_or_else(|| PathBuf::from("results"));
    let result = run_sweep(&config, jobs.max(1))?;
    let (runs, aggregate) = result.write_to_dir(&out)?;
    for a in &result.aggregates {
        println!(
            "{} n={} {} N={}: best {:.4} ± {:.4}, unique evals {:.1}, cpu {:.3}s, success {:.2}",
            result.problem.name(),
            result.n,
            result.model,
            a.pop_size,
            a.mean_best_fitness,
            a.std_best_fitness,
            a.mean_unique_evals,
            a.mean_cpu_seconds,
            a.success_fraction
        );
    }
    println!("wrote {} and {}", runs.display(), aggregate.display());
    let failures = result.failures();
    if failures == 0 {
        return Ok(ExitCode::SUCCESS);
    }
    for row in &result.runs {
        if let Err(e) = &row.outcome {
            eprintln!("run failed (N={}, seed {}): {e}", row.pop_size, row.seed);
        }
    }
    eprintln!("{failures} of {} runs failed", result.runs.len());
    Ok(ExitCode::from(EXIT_RUN_FAILURES))
}

fn verify(instance: PathBuf) -> anyhow::Result<ExitCode> {
    let report =
        verify_instance(&instance).with_context(|| format!("verifying {}", instance.display()))?;
    println!("{report}");
    Ok(match report.status {
        VerifyStatus::Match => ExitCode::SUCCESS,
        VerifyStatus::Mismatch | VerifyStatus::Missing => ExitCode::from(EXIT_MISMATCH),
    })
}

fn gen_nk(n: usize, k: usize, seed: u64, out: PathBuf) -> anyhow::Result<ExitCode> {
    let instance = generate_nk_instance(n, k, seed)?;
    save_nk_instance(&instance, &out)?;
    match instance.known_optimum() {
        Some(opt) => println!("wrote {} (optimum {opt})", out.display()),
        None => println!("wrote {} (no optimum line, n > 20)", out.display()),
    }
    Ok(ExitCode::SUCCESS)
}

fn gradcheck(configurations: usize, seed: u64) -> anyhow::Result<ExitCode> {
    let report = run_suite(configurations, seed)?;
    let composed = composed_gradient_check(seed)?;
    println!(
        "{} networks, {} entries checked, {} skipped at ReLU kinks, {} saturated draws replaced",
        report.configurations, report.parameters_checked, report.kinks_skipped, report.redrawn
    );
    println!(
        "max relative error {:.3e} (worst {}), D(G(z)) {:.3e}, limit {:.0e}",
        report.max_relative_error, report.worst_configuration, composed, MAX_RELATIVE_ERROR
    );
    if report.passed() && composed <= MAX_RELATIVE_ERROR {
        println!("gradcheck passed");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("gradcheck FAILED");
        Ok(ExitCode::FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Run { config, out, jobs } => run(config, out, jobs),
        Command::Verify { instance } => verify(instance),
        Command::GenNk { n, k, seed, out } => gen_nk(n, k, seed, out),
        Command::Gradcheck {
            configurations,
            seed,
        } => gradcheck(configurations, seed),
    };
    outcome.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::from(EXIT_CONFIG)
    })
}
