//! Integer-gene genetic algorithm: roulette selection, single-point
//! crossover, resampling mutation, elitism.
//!
//! Genes are unsigned integers over an inclusive domain, so the same engine
//! drives the arithmetic demo (domain 0..=30), quantized weights, and bit
//! masks (domain 0..=1, where resampling acts as a fair bit flip).

use std::cmp::Ordering;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngSpec;

/// Inclusive integer range genes are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneDomain {
    pub lo: u32,
    pub hi: u32,
}

impl GeneDomain {
    pub fn new(lo: u32, hi: u32) -> Result<Self> {
        if lo > hi {
            return Err(Error::InvalidRange {
                what: format!("gene domain {lo}..={hi}"),
            });
        }
        Ok(GeneDomain { lo, hi })
    }

    pub fn bits() -> Self {
        GeneDomain { lo: 0, hi: 1 }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.gen_range(self.lo..=self.hi)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chromosome {
    pub genes: Vec<u32>,
    /// Fitness from the most recent evaluation; cleared by crossover and
    /// mutation.
    pub fitness: Option<f64>,
}

impl Chromosome {
    pub fn new(genes: Vec<u32>) -> Self {
        Chromosome { genes, fitness: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaConfig {
    pub population_size: usize,
    pub gene_count: usize,
    pub domain: GeneDomain,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elitism: usize,
    pub max_generations: usize,
    pub target_fitness: Option<f64>,
}

impl GaConfig {
    /// Crossover 0.25, mutation 0.10, elitism 1, 100 generations.
    pub fn new(population_size: usize, gene_count: usize, domain: GeneDomain) -> Self {
        GaConfig {
            population_size,
            gene_count,
            domain,
            crossover_rate: 0.25,
            mutation_rate: 0.10,
            elitism: 1,
            max_generations: 100,
            target_fitness: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.population_size < 2 {
            return Err(Error::Config {
                message: format!("population size {} is below 2", self.population_size),
            });
        }
        if self.gene_count == 0 {
            return Err(Error::Config {
                message: "gene count is zero".to_string(),
            });
        }
        if self.domain.lo > self.domain.hi {
            return Err(Error::InvalidRange {
                what: format!("gene domain {}..={}", self.domain.lo, self.domain.hi),
            });
        }
        for (rate, name) in [
            (self.crossover_rate, "crossover rate"),
            (self.mutation_rate, "mutation rate"),
        ] {
            if !(0.0..=1.0).contains(&rate) {
                return Err(Error::Config {
                    message: format!("{name} {rate} is outside [0,1]"),
                });
            }
        }
        if self.elitism > self.population_size {
            return Err(Error::Config {
                message: format!(
                    "elitism {} exceeds population size {}",
                    self.elitism, self.population_size
                ),
            });
        }
        Ok(())
    }

    /// Gene positions across the whole population.
    pub fn total_genes(&self) -> usize {
        self.population_size * self.gene_count
    }

    /// Genes resampled per mutation sweep: round(rate x total genes).
    pub fn mutation_count(&self) -> usize {
        (self.mutation_rate * self.total_genes() as f64).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub generation: usize,
    pub best_fitness: f64,
    pub mean_fitness: f64,
    pub best: Vec<u32>,
}

/// Per-generation fitness summary; with elitism >= 1 the best column never
/// decreases.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvolutionTrace {
    pub entries: Vec<TraceEntry>,
}

impl EvolutionTrace {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("generation,best_fitness,mean_fitness\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.generation, e.best_fitness, e.mean_fitness));
        }
        out
    }
}

/// Objective of the worked demo: |a + 2b + 3c + 4d - 30| over four genes.
pub fn demo_objective(genes: &[u32]) -> Result<f64> {
    if genes.len() != 4 {
        return Err(Error::WrongGeneCount { expected: 4, got: genes.len() });
    }
    let weighted: i64 = genes.iter().zip(1i64..).map(|(&g, k)| g as i64 * k).sum();
    Ok((weighted - 30).abs() as f64)
}

/// Maps an objective to a fitness in (0,1]: 1/(1 + objective). Strictly
/// decreasing, equal to 1 exactly at objective 0.
pub fn fitness_from_objective(objective: f64) -> Result<f64> {
    if !(objective >= 0.0) {
        return Err(Error::NegativeObjective { value: objective });
    }
    Ok(1.0 / (1.0 + objective))
}

/// Fitness of the worked demo, maximal exactly on solutions of the equation.
pub fn demo_fitness(genes: &[u32]) -> Result<f64> {
    fitness_from_objective(demo_objective(genes)?)
}

/// Draws an index with probability proportional to its fitness. Every
/// fitness must be strictly positive.
pub fn roulette_select(fitnesses: &[f64], rng: &mut ChaCha8Rng) -> Result<usize> {
    if fitnesses.is_empty() || fitnesses.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::ZeroTotalFitness);
    }
    let total: f64 = fitnesses.iter().sum();
    let mut draw = rng.gen_range(0.0..total);
    for (i, f) in fitnesses.iter().enumerate() {
        if draw < *f {
            return Ok(i);
        }
        draw -= f;
    }
    Ok(fitnesses.len() - 1)
}

/// Single-point crossover: with probability `rate` the parents swap suffixes
/// at a cut drawn from 1..gene_count, otherwise they are copied unchanged.
pub fn crossover(
    a: &Chromosome,
    b: &Chromosome,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(Chromosome, Chromosome)> {
    if a.genes.len() != b.genes.len() {
        return Err(Error::GeneCountMismatch { left: a.genes.len(), right: b.genes.len() });
    }
    let len = a.genes.len();
    if len < 2 || !(rng.gen_range(0.0..1.0) < rate) {
        return Ok((a.clone(), b.clone()));
    }
    let cut = rng.gen_range(1..len);
    let mut left = a.genes[..cut].to_vec();
    left.extend_from_slice(&b.genes[cut..]);
    let mut right = b.genes[..cut].to_vec();
    right.extend_from_slice(&a.genes[cut..]);
    Ok((Chromosome::new(left), Chromosome::new(right)))
}

/// Resamples round(mutation_rate x total genes) distinct gene positions from
/// the domain, chosen uniformly across the whole population.
pub fn mutate(population: &mut [Chromosome], config: &GaConfig, rng: &mut ChaCha8Rng) {
    mutate_positions(population, config.mutation_count(), config.domain, rng);
}

fn mutate_positions(
    population: &mut [Chromosome],
    count: usize,
    domain: GeneDomain,
    rng: &mut ChaCha8Rng,
) {
    let gene_count = match population.first() {
        Some(c) => c.genes.len(),
        None => return,
    };
    let total = population.len() * gene_count;
    let count = count.min(total);
    if count == 0 {
        return;
    }
    for pos in rand::seq::index::sample(rng, total, count) {
        let member = &mut population[pos / gene_count];
        member.genes[pos % gene_count] = domain.sample(rng);
        member.fitness = None;
    }
}

/// Member indices ordered by fitness descending, ties by index.
fn ranked(population: &[Chromosome]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..population.len()).collect();
    order.sort_by(|&i, &j| {
        let fi = population[i].fitness.unwrap_or(f64::NEG_INFINITY);
        let fj = population[j].fitness.unwrap_or(f64::NEG_INFINITY);
        fj.partial_cmp(&fi).unwrap_or(Ordering::Equal).then(i.cmp(&j))
    });
    order
}

/// Runs the evolve loop: evaluate, record, then select/crossover/mutate into
/// the next generation, stopping at max_generations or target_fitness.
/// Returns the best chromosome ever evaluated and the full trace.
///
/// The member built for slot i of generation g draws from the stream derived
/// with tags (g, i); the mutation sweep of generation g takes the
/// out-of-band index (g, population_size).
pub fn evolve<F>(
    fitness: F,
    config: &GaConfig,
    rng: RngSpec,
) -> Result<(Chromosome, EvolutionTrace)>
where
    F: FnMut(&[u32]) -> Result<f64>,
{
    evolve_seeded(fitness, &[], config, rng)
}

/// Same loop as [`evolve`], with the first initial members pinned to `seeds`
/// instead of drawn at random. Extra seeds beyond the population are dropped.
pub fn evolve_seeded<F>(
    fitness: F,
    seeds: &[Vec<u32>],
    config: &GaConfig,
    rng: RngSpec,
) -> Result<(Chromosome, EvolutionTrace)>
where
    F: FnMut(&[u32]) -> Result<f64>,
{
    let run = evolve_detailed(fitness, seeds, |_, _| {}, config, rng)?;
    Ok((run.best, run.trace))
}

/// A finished run: the best chromosome ever evaluated, the per-generation
/// trace, and the final evaluated population.
#[derive(Debug, Clone)]
pub struct GaRun {
    pub best: Chromosome,
    pub trace: EvolutionTrace,
    pub population: Vec<Chromosome>,
}

/// The full loop behind [`evolve`]. `repair` runs on every freshly drawn,
/// crossed, or mutated gene vector (never on caller seeds or elites) and may
/// rewrite genes that violate a representation constraint, drawing from the
/// stream that produced the member.
pub fn evolve_detailed<F, R>(
    mut fitness: F,
    seeds: &[Vec<u32>],
    mut repair: R,
    config: &GaConfig,
    rng: RngSpec,
) -> Result<GaRun>
where
    F: FnMut(&[u32]) -> Result<f64>,
    R: FnMut(&mut [u32], &mut ChaCha8Rng),
{
    config.validate()?;
    for seed in seeds {
        if seed.len() != config.gene_count {
            return Err(Error::WrongGeneCount { expected: config.gene_count, got: seed.len() });
        }
    }

    let mut population: Vec<Chromosome> = (0..config.population_size)
        .map(|i| match seeds.get(i) {
            Some(genes) => Chromosome::new(genes.clone()),
            None => {
                let mut member_rng = rng.derive(&[0, i as u64]).rng();
                let mut genes: Vec<u32> =
                    (0..config.gene_count).map(|_| config.domain.sample(&mut member_rng)).collect();
                repair(&mut genes, &mut member_rng);
                Chromosome::new(genes)
            }
        })
        .collect();

    let mut trace = EvolutionTrace::default();
    let mut best_ever: Option<Chromosome> = None;

    for generation in 0.. {
        for member in population.iter_mut() {
            if member.fitness.is_none() {
                let value = fitness(&member.genes)?;
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::Internal {
                        message: format!("fitness callback returned {value}"),
                    });
                }
                member.fitness = Some(value);
            }
        }

        let order = ranked(&population);
        let best = &population[order[0]];
        let mean = population.iter().map(|c| c.fitness.unwrap()).sum::<f64>()
            / population.len() as f64;
        trace.entries.push(TraceEntry {
            generation,
            best_fitness: best.fitness.unwrap(),
            mean_fitness: mean,
            best: best.genes.clone(),
        });
        if best_ever.as_ref().map_or(true, |b| best.fitness > b.fitness) {
            best_ever = Some(best.clone());
        }

        let best_fitness = best_ever.as_ref().unwrap().fitness.unwrap();
        if config.target_fitness.map_or(false, |t| best_fitness >= t) {
            break;
        }
        if generation == config.max_generations {
            break;
        }

        let fitnesses: Vec<f64> = population.iter().map(|c| c.fitness.unwrap()).collect();
        let next_gen = generation as u64 + 1;
        let mut next: Vec<Chromosome> = order[..config.elitism]
            .iter()
            .map(|&i| population[i].clone())
            .collect();
        for slot in config.elitism..config.population_size {
            let mut member_rng = rng.derive(&[next_gen, slot as u64]).rng();
            let p1 = roulette_select(&fitnesses, &mut member_rng)?;
            let p2 = roulette_select(&fitnesses, &mut member_rng)?;
            let (mut child, _) = crossover(
                &population[p1],
                &population[p2],
                config.crossover_rate,
                &mut member_rng,
            )?;
            repair(&mut child.genes, &mut member_rng);
            next.push(child);
        }

        let mut sweep_rng = rng.derive(&[next_gen, config.population_size as u64]).rng();
        mutate_positions(
            &mut next[config.elitism..],
            config.mutation_count(),
            config.domain,
            &mut sweep_rng,
        );
        for member in &mut next[config.elitism..] {
            repair(&mut member.genes, &mut sweep_rng);
        }
        population = next;
    }

    Ok(GaRun { best: best_ever.unwrap(), trace, population })
}
