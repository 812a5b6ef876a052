//! Randomized invariants: the residual-fitness law, the structure of the
//! genetic operators, partition balance, rank statistics, quantization, and
//! round trips of the text formats.

use proptest::prelude::*;
use rand::Rng;
use usability_core::evaluation::{confusion, kfold, metrics, split, ScoredTruth, SplitSpec};
use usability_core::ga::{
    crossover, evolve, fitness_from_objective, mutate, Chromosome, GaConfig, GeneDomain,
};
use usability_core::scoring::{FeatureScore, FeatureScoreTable, ScoringProblem};
use usability_core::survey::{
    auto_label, encode, generate_synthetic, polarity_table, Band, FeatureMatrix, LabelBands,
    PolarityRow, PolarityTable, SynthMode,
};
use usability_core::RngSpec;

fn gene_pair() -> impl Strategy<Value = (Vec<u32>, Vec<u32>)> {
    (2usize..30).prop_flat_map(|len| {
        (prop::collection::vec(0u32..100, len), prop::collection::vec(0u32..100, len))
    })
}

/// Labeled single-feature matrix with at least two rows per class.
fn labeled_matrix(n: usize, n_classes: usize, rng: &mut impl Rng) -> FeatureMatrix {
    let labels: Vec<usize> = (0..n)
        .map(|i| if i < 2 * n_classes { i % n_classes } else { rng.gen_range(0..n_classes) })
        .collect();
    FeatureMatrix {
        values: (0..n).map(|i| vec![i as f64 / n as f64]).collect(),
        labels: Some(labels),
        feature_names: vec!["index".to_string()],
        class_names: (0..n_classes).map(|c| format!("c{c}")).collect(),
    }
}

proptest! {
    #[test]
    fn fitness_follows_the_residual_law(
        residuals in prop::collection::vec(-3.0f64..3.0, 1..40),
    ) {
        let n = residuals.len() as f64;
        let rms = (residuals.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        let fitness = fitness_from_objective(rms).unwrap();
        prop_assert_eq!(fitness, 1.0 / (1.0 + rms));
        prop_assert!(fitness > 0.0 && fitness <= 1.0);
        prop_assert_eq!(fitness == 1.0, rms == 0.0);
    }

    #[test]
    fn fitness_orders_opposite_to_objectives(a in 0.0f64..10.0, b in 0.0f64..10.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let f_lo = fitness_from_objective(lo).unwrap();
        let f_hi = fitness_from_objective(hi).unwrap();
        prop_assert!(f_lo >= f_hi);
        if hi - lo > 1e-9 {
            prop_assert!(f_lo > f_hi);
        }
    }

    #[test]
    fn crossover_swaps_a_suffix((p1, p2) in gene_pair(), seed in any::<u64>()) {
        let a = Chromosome::new(p1);
        let b = Chromosome::new(p2);
        let mut rng = RngSpec::new(seed).rng();
        let (c1, c2) = crossover(&a, &b, 1.0, &mut rng).unwrap();
        let len = a.genes.len();
        let some_cut = (1..len).any(|k| {
            c1.genes[..k] == a.genes[..k]
                && c1.genes[k..] == b.genes[k..]
                && c2.genes[..k] == b.genes[..k]
                && c2.genes[k..] == a.genes[k..]
        });
        prop_assert!(some_cut, "children are not a suffix swap of the parents");
    }

    #[test]
    fn zero_rate_crossover_copies((p1, p2) in gene_pair(), seed in any::<u64>()) {
        let a = Chromosome::new(p1);
        let b = Chromosome::new(p2);
        let mut rng = RngSpec::new(seed).rng();
        let (c1, c2) = crossover(&a, &b, 0.0, &mut rng).unwrap();
        prop_assert_eq!(c1.genes, a.genes);
        prop_assert_eq!(c2.genes, b.genes);
    }

    #[test]
    fn mutation_touches_at_most_the_sweep_count(
        pop in 2usize..8,
        genes in 1usize..10,
        lo in 0u32..50,
        span in 0u32..50,
        rate in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let mut config = GaConfig::new(pop, genes, GeneDomain::new(lo, lo + span).unwrap());
        config.mutation_rate = rate;
        let mut population: Vec<Chromosome> =
            (0..pop).map(|_| Chromosome::new(vec![lo; genes])).collect();
        let mut rng = RngSpec::new(seed).rng();
        mutate(&mut population, &config, &mut rng);
        let changed: usize = population
            .iter()
            .map(|m| m.genes.iter().filter(|&&g| g != lo).count())
            .sum();
        prop_assert!(changed <= config.mutation_count());
        for member in &population {
            for &g in &member.genes {
                prop_assert!((lo..=lo + span).contains(&g));
            }
        }
    }

    #[test]
    fn best_fitness_never_drops_and_reruns_agree(
        pop in 2usize..10,
        genes in 1usize..6,
        gens in 1usize..25,
        seed in any::<u64>(),
    ) {
        let mut config = GaConfig::new(pop, genes, GeneDomain::new(0, 9).unwrap());
        config.max_generations = gens;
        let fitness =
            |g: &[u32]| Ok(1.0 / (1.0 + g.iter().map(|&v| v as f64).sum::<f64>()));
        let (best, trace) = evolve(fitness, &config, RngSpec::new(seed)).unwrap();
        for w in trace.entries.windows(2) {
            prop_assert!(w[1].best_fitness >= w[0].best_fitness);
        }
        prop_assert_eq!(best.fitness.unwrap(), trace.entries.last().unwrap().best_fitness);

        let (again, trace_again) = evolve(fitness, &config, RngSpec::new(seed)).unwrap();
        prop_assert_eq!(best.genes, again.genes);
        prop_assert_eq!(trace, trace_again);
    }

    #[test]
    fn folds_partition_the_rows_evenly(
        n in 10usize..200,
        k in 2usize..8,
        n_classes in 2usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = RngSpec::new(seed).rng();
        let fm = labeled_matrix(n, n_classes, &mut rng);
        let labels = fm.labels().unwrap().to_vec();
        let spec = SplitSpec::new(RngSpec::new(seed ^ 0x5eed));
        let folds = kfold(&fm, k, &spec).unwrap();

        let sizes: Vec<usize> = folds.iter().map(|(_, test)| test.len()).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut seen: Vec<usize> = folds.iter().flat_map(|(_, test)| test.clone()).collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..n).collect::<Vec<_>>());
        for (train, test) in &folds {
            let mut joined: Vec<usize> = train.iter().chain(test).copied().collect();
            joined.sort_unstable();
            prop_assert_eq!(joined, (0..n).collect::<Vec<_>>());
        }
        for class in 0..n_classes {
            let per_fold: Vec<usize> = folds
                .iter()
                .map(|(_, test)| test.iter().filter(|&&i| labels[i] == class).count())
                .collect();
            prop_assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn stratified_split_keeps_proportions(
        n in 10usize..200,
        n_classes in 2usize..5,
        seed in any::<u64>(),
    ) {
        let mut rng = RngSpec::new(seed).rng();
        let fm = labeled_matrix(n, n_classes, &mut rng);
        let labels = fm.labels().unwrap().to_vec();
        let (train, test) = split(&fm, &SplitSpec::new(RngSpec::new(seed ^ 0x5eed))).unwrap();
        prop_assert_eq!(train.n_rows() + test.n_rows(), n);
        let train_labels = train.labels().unwrap();
        for class in 0..n_classes {
            let total = labels.iter().filter(|&&l| l == class).count();
            let in_train = train_labels.iter().filter(|&&l| l == class).count();
            let share = train.n_rows() as f64 * total as f64 / n as f64;
            prop_assert!(
                (in_train as f64 - share).abs() <= 1.0 + 1e-9,
                "class {} holds {} of {} rows against a share of {:.2}",
                class, in_train, total, share
            );
        }
    }

    #[test]
    fn auc_ignores_monotone_rescaling(
        truth in prop::collection::vec(0usize..3, 4..60),
        seed in any::<u64>(),
    ) {
        let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        let mut rng = RngSpec::new(seed).rng();
        let scores: Vec<Vec<f64>> =
            truth.iter().map(|_| (0..3).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let rescaled: Vec<Vec<f64>> = scores
            .iter()
            .map(|row| row.iter().map(|v| (3.0 * v - 1.0).exp()).collect())
            .collect();
        let cm = confusion(&truth, &truth, &names).unwrap();
        let base = metrics(&cm, Some(ScoredTruth { scores: &scores, truth: &truth })).unwrap();
        let after = metrics(&cm, Some(ScoredTruth { scores: &rescaled, truth: &truth })).unwrap();
        prop_assert_eq!(base.auc, after.auc);
    }

    #[test]
    fn score_table_survives_csv(
        rows in prop::collection::btree_map("[A-Za-z][A-Za-z ]{0,12}[A-Za-z]", 0.0f64..1.0, 1..8),
    ) {
        let table = FeatureScoreTable::new(
            rows.into_iter()
                .map(|(feature, score)| FeatureScore {
                    feature,
                    score: (score * 1e4).round() / 1e4,
                })
                .collect(),
        );
        let back = FeatureScoreTable::from_csv_str(&table.to_csv_string()).unwrap();
        prop_assert_eq!(table, back);
    }

    #[test]
    fn exact_synthesis_round_trips_counts(
        counts in prop::collection::vec(0u64..30, 5),
        seed in any::<u64>(),
    ) {
        let total: u64 = counts.iter().sum();
        prop_assume!(total > 0);
        let mut fixed = [0u64; 5];
        fixed.copy_from_slice(&counts);
        let pt = PolarityTable {
            rows: vec![PolarityRow { feature: "only".to_string(), counts: fixed }],
        };
        let ds =
            generate_synthetic(&pt, total as usize, SynthMode::Exact, RngSpec::new(seed)).unwrap();
        prop_assert_eq!(polarity_table(&ds).rows, pt.rows);
    }

    #[test]
    fn sampled_synthesis_keeps_row_totals(
        counts in prop::collection::vec(1u64..20, 5),
        n in 1usize..60,
        seed in any::<u64>(),
    ) {
        let mut fixed = [0u64; 5];
        fixed.copy_from_slice(&counts);
        let pt = PolarityTable {
            rows: vec![PolarityRow { feature: "only".to_string(), counts: fixed }],
        };
        let ds = generate_synthetic(&pt, n, SynthMode::Sampled, RngSpec::new(seed)).unwrap();
        let back = polarity_table(&ds);
        prop_assert_eq!(back.rows[0].counts.iter().sum::<u64>(), n as u64);
    }

    #[test]
    fn encoded_surveys_stay_in_unit_range(
        rows in prop::collection::vec(prop::collection::vec(1u64..25, 5), 1..4),
        n in 1usize..40,
        seed in any::<u64>(),
    ) {
        let pt = PolarityTable {
            rows: rows
                .iter()
                .enumerate()
                .map(|(i, c)| {
                    let mut counts = [0u64; 5];
                    counts.copy_from_slice(c);
                    PolarityRow { feature: format!("f{i}"), counts }
                })
                .collect(),
        };
        let ds = generate_synthetic(&pt, n, SynthMode::Sampled, RngSpec::new(seed)).unwrap();
        let fm = encode(&ds);
        for row in &fm.values {
            for &v in row {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }

        let bands = LabelBands::default_six();
        let labeled = auto_label(&fm, &bands);
        let labels = labeled.labels().unwrap();
        for (row, &label) in fm.values.iter().zip(labels) {
            let mean = row.iter().sum::<f64>() / row.len() as f64;
            let expected = bands
                .bands
                .iter()
                .position(|b| mean >= b.threshold)
                .unwrap_or(bands.bands.len() - 1);
            prop_assert_eq!(label, expected);
        }
    }

    #[test]
    fn banding_picks_the_first_reached_threshold(
        levels in prop::collection::btree_set(0u32..1000, 1..7),
        mean in 0u32..1000,
    ) {
        let thresholds: Vec<f64> =
            levels.iter().rev().map(|&t| t as f64 / 1000.0).collect();
        let bands = LabelBands::new(
            thresholds
                .iter()
                .enumerate()
                .map(|(i, &threshold)| Band { threshold, class: format!("b{i}") })
                .collect(),
        )
        .unwrap();
        let mean = mean as f64 / 1000.0;
        let above = thresholds.iter().filter(|&&t| t > mean).count();
        prop_assert_eq!(bands.label_for(mean), above.min(thresholds.len() - 1));
    }

    #[test]
    fn weight_quantization_stays_within_half_a_step(
        denominator in 1u32..500,
        weight in 0.0f64..1.0,
    ) {
        let resolution = 1.0 / denominator as f64;
        let matrix = FeatureMatrix {
            values: vec![vec![0.5]],
            labels: None,
            feature_names: vec!["only".to_string()],
            class_names: Vec::new(),
        };
        let problem = ScoringProblem::new(matrix, vec![0.5], resolution).unwrap();
        let gene = problem.quantize(weight);
        prop_assert!(gene <= problem.gene_levels());
        let decoded = problem.decode(&[gene])[0];
        prop_assert!((0.0..=1.0).contains(&decoded));
        prop_assert!((decoded - weight).abs() <= resolution / 2.0 + 1e-9);
    }
}
