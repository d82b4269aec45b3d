use edalab::dae::{DaeConfig, DaeModel};
use edalab::eda::{run_eda, select_truncation, selection_size, EdaConfig, ModelSpec, Population};
use edalab::gan::{GanConfig, GanModel};
use edalab::harness::{mean_and_std, parse_config, read_runs_csv, run_sweep};
use edalab::problems::{
    format_nk_instance, generate_nk_instance, parse_nk_instance, Genotype, ProblemInstance,
};
use edalab::EdaRng;
use proptest::prelude::*;
use rand::SeedableRng;

fn problem(kind: u8, blocks: usize) -> ProblemInstance {
    match kind {
        0 => ProblemInstance::onemax(4 * blocks).unwrap(),
        1 => ProblemInstance::concat_trap(4 * blocks, 4).unwrap(),
        _ => ProblemInstance::hiff(1 << (blocks + 1)).unwrap(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn eda_run_invariants(
        kind in 0u8..3,
        blocks in 1usize..5,
        size in 4usize..40,
        truncation in 0.1f64..=1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(selection_size(size, truncation) >= 2);
        let instance = problem(kind, blocks);
        let config = EdaConfig {
            population_size: size,
            truncation,
            max_generations: 25,
            stall_generations: 8,
            model: ModelSpec::Umda,
            seed,
        };
        let record = run_eda(&instance, &config).unwrap();
        let trace = &record.best_fitness_per_generation;
        prop_assert_eq!(trace.len(), record.generations_run + 1);
        prop_assert!(trace.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(record.unique_evaluations, record.recounted_evaluations);
        prop_assert!(record.unique_evaluations <= size * (record.generations_run + 1));
        prop_assert_eq!(record.selection_size, (truncation * size as f64 - 1e-9).ceil() as usize);
        prop_assert_eq!(instance.evaluate(&record.best_genotype).unwrap(), record.best_fitness());
        prop_assert!(record.best_fitness() <= instance.known_optimum().unwrap());
        prop_assert_eq!(record.optimum_found, instance.is_optimal(record.best_fitness()));

        let again = run_eda(&instance, &config).unwrap();
        prop_assert_eq!(&again.best_fitness_per_generation, trace);
        prop_assert_eq!(again.unique_evaluations, record.unique_evaluations);
        prop_assert_eq!(again.best_genotype, record.best_genotype);
    }

    #[test]
    fn truncation_keeps_the_best(
        fitnesses in proptest::collection::vec(0u8..6, 2..40),
        truncation in 0.05f64..=1.0,
    ) {
        let n = fitnesses.len();
        let genotypes: Vec<Genotype> = (0..n).map(|i| Genotype::from_index(i as u64, 8)).collect();
        let values: Vec<f64> = fitnesses.iter().map(|&f| f as f64).collect();
        let pop = Population::new(genotypes, values.clone()).unwrap();
        let selected = select_truncation(&pop, truncation);
        let keep = selection_size(n, truncation);
        prop_assert_eq!(selected.len(), keep);
        prop_assert!(selected.fitnesses().windows(2).all(|w| w[0] >= w[1]));
        let mut sorted = values;
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        prop_assert_eq!(selected.fitnesses(), &sorted[..keep]);
        // equal fitness keeps the original order
        for w in selected.genotypes().windows(2).zip(selected.fitnesses().windows(2)) {
            if w.1[0] == w.1[1] {
                prop_assert!(w.0[0].bits() < w.0[1].bits());
            }
        }
    }

    #[test]
    fn nk_text_round_trip(n in 2usize..14, k_raw in 1usize..6, seed in any::<u64>(), probe in any::<u64>()) {
        let k = k_raw.min(n - 1);
        let instance = generate_nk_instance(n, k, seed).unwrap();
        let reparsed = parse_nk_instance(&format_nk_instance(&instance).unwrap()).unwrap();
        let g = Genotype::from_index(probe % (1u64 << n), n);
        prop_assert_eq!(instance.evaluate(&g).unwrap(), reparsed.evaluate(&g).unwrap());
        prop_assert_eq!(instance.known_optimum(), reparsed.known_optimum());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn model_samples_are_binary_and_sized(n in 3usize..12, rows in 1usize..12, count in 0usize..30, seed in any::<u64>()) {
        let mut rng = EdaRng::seed_from_u64(seed);
        let data: Vec<Genotype> = (0..rows).map(|_| Genotype::random(n, &mut rng)).collect();

        let mut gan = GanModel::new(n, GanConfig { epochs: 2, ..Default::default() }, &mut rng).unwrap();
        gan.fit(&data, &mut rng).unwrap();
        let samples = gan.sample(count, &mut rng).unwrap();
        prop_assert_eq!(samples.len(), count);
        prop_assert!(samples.iter().all(|g| g.len() == n && g.bits().iter().all(|&b| b <= 1)));

        let mut dae = DaeModel::new(n, DaeConfig { epochs: 2, ..Default::default() }, &mut rng).unwrap();
        dae.fit(&data, &mut rng).unwrap();
        let samples = dae.sample(count, &data, &mut rng).unwrap();
        prop_assert_eq!(samples.len(), count);
        prop_assert!(samples.iter().all(|g| g.len() == n && g.bits().iter().all(|&b| b <= 1)));
    }

    #[test]
    fn aggregates_recompute_from_run_rows(runs in 1usize..5, seed in 0u64..1000) {
        let text = format!("problem=trap\nn=12\nk=4\nmodel=umda\npop_sizes=10,24\nruns={runs}\nseed={seed}\nmax_generations=20\n");
        let result = run_sweep(&parse_config(&text).unwrap(), 1).unwrap();
        let mut csv = Vec::new();
        result.write_runs_csv(&mut csv).unwrap();
        let rows = read_runs_csv(csv.as_slice()).unwrap();
        prop_assert_eq!(rows.len(), 2 * runs);
        for a in &result.aggregates {
            let mine: Vec<_> = rows.iter().filter(|r| r.pop_size == a.pop_size).collect();
            let best: Vec<f64> = mine.iter().map(|r| r.best_fitness.unwrap()).collect();
            let evals: Vec<f64> = mine.iter().map(|r| r.unique_evals.unwrap() as f64).collect();
            let (mean, std) = mean_and_std(&best);
            prop_assert!((mean - a.mean_best_fitness).abs() <= 1e-12);
            prop_assert!((std - a.std_best_fitness).abs() <= 1e-12);
            prop_assert!((mean_and_std(&evals).0 - a.mean_unique_evals).abs() <= 1e-12);
            let wins = mine.iter().filter(|r| r.optimum_found).count() as f64 / runs as f64;
            prop_assert!((wins - a.success_fraction).abs() <= 1e-12);
            prop_assert!(a.mean_best_fitness <= 12.0);
        }
    }
}

#[test]
fn umda_calibration_sweep() {
    let config =
        parse_config("problem=onemax\nn=30\nmodel=umda\npop_sizes=50,100,200\nruns=20\n").unwrap();
    let result = run_sweep(&config, 1).unwrap();
    let fractions: Vec<f64> = result
        .aggregates
        .iter()
        .map(|a| a.success_fraction)
        .collect();
    assert!(fractions.windows(2).all(|w| w[0] <= w[1]), "{fractions:?}");
    assert_eq!(fractions[2], 1.0, "{fractions:?}");
}
