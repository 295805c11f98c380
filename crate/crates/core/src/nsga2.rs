//! NSGA-II over flat parameter vectors with noisy, episode-averaged fitness.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::env::{derive_seed, evaluate_policy, EnvConfig, EnvError, Goal, ObservationMode};
use crate::policy::{MlpSpec, PolicyParams};

#[derive(Debug, Error)]
pub enum EvolveError {
    #[error("invalid NSGA-II config: {0}")]
    Config(String),
    #[error(transparent)]
    Env(#[from] EnvError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Nsga2Config {
    pub population_size: usize,
    /// Offspring generations after the initial population.
    pub generations: usize,
    /// Per-gene swap probability in uniform crossover.
    pub crossover_rate: f64,
    /// Per-gene probability of Gaussian noise.
    pub mutation_rate: f64,
    pub mutation_scale: f64,
    /// Episodes averaged per fitness evaluation.
    pub n_eval: usize,
    pub hidden_dim: usize,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Nsga2Config {
            population_size: 40,
            generations: 12,
            crossover_rate: 0.5,
            mutation_rate: 0.01,
            mutation_scale: 0.1,
            n_eval: 30,
            hidden_dim: crate::policy::DEFAULT_HIDDEN,
        }
    }
}

impl Nsga2Config {
    /// Number of generations an environment-step budget pays for.
    pub fn generations_for_budget(&self, env_steps: u64, horizon_weeks: usize) -> usize {
        let per_gen = (self.population_size * self.n_eval * horizon_weeks) as u64;
        (env_steps / per_gen.max(1)) as usize
    }

    pub fn validate(&self) -> Result<(), EvolveError> {
        let bad = |m: &str| Err(EvolveError::Config(m.to_string()));
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return bad("population size must be even and at least 2");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("rates must lie in [0, 1]");
        }
        if !(self.mutation_scale >= 0.0) || self.n_eval == 0 || self.hidden_dim == 0 {
            return bad("mutation scale, n_eval and hidden_dim must be valid");
        }
        Ok(())
    }
}

/// Mean costs and their standard errors; both objectives are minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fitness {
    pub objectives: [f64; 2],
    pub stderr: [f64; 2],
}

impl Fitness {
    pub fn exact(objectives: [f64; 2]) -> Self {
        Fitness {
            objectives,
            stderr: [0.0; 2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub genome: Vec<f64>,
    pub fitness: Fitness,
    pub rank: usize,
    pub crowding: f64,
}

/// `a` dominates `b`: no worse on both objectives and better on one.
pub fn dominates(a: &[f64; 2], b: &[f64; 2]) -> bool {
    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
}

/// Partitions point indices into successive non-dominated fronts.
pub fn fast_non_dominated_sort(points: &[[f64; 2]]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates(&points[p], &points[q]) {
                dominated_by[p].push(q);
            } else if dominates(&points[q], &points[p]) {
                counts[p] += 1;
            }
        }
        if counts[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                counts[q] -= 1;
                if counts[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(next);
        i += 1;
    }
    fronts.pop();
    fronts
}

/// Crowding distance of each point within one front.
///
/// Extremes on an axis get +∞; an axis with zero range contributes nothing.
pub fn crowding_distance(points: &[[f64; 2]]) -> Vec<f64> {
    let n = points.len();
    let mut dist = vec![0.0; n];
    for m in 0..2 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| points[a][m].total_cmp(&points[b][m]));
        let lo = points[order[0]][m];
        let hi = points[order[n - 1]][m];
        let range = hi - lo;
        if !(range > 0.0) {
            continue;
        }
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        for k in 1..n.saturating_sub(1) {
            let i = order[k];
            if dist[i].is_finite() {
                dist[i] += (points[order[k + 1]][m] - points[order[k - 1]][m]) / range;
            }
        }
    }
    dist
}

/// Sets rank and crowding on every individual.
pub fn assign_rank_and_crowding(pop: &mut [Individual]) -> Vec<Vec<usize>> {
    let points: Vec<[f64; 2]> = pop.iter().map(|ind| ind.fitness.objectives).collect();
    let fronts = fast_non_dominated_sort(&points);
    for (rank, front) in fronts.iter().enumerate() {
        let fp: Vec<[f64; 2]> = front.iter().map(|&i| points[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&fp)) {
            pop[i].rank = rank;
            pop[i].crowding = d;
        }
    }
    fronts
}

/// Binary tournament: lower rank, then larger crowding, then a coin flip.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[Individual], rng: &mut R) -> usize {
    let a = rng.random_range(0..pop.len());
    let b = rng.random_range(0..pop.len());
    let (x, y) = (&pop[a], &pop[b]);
    if x.rank != y.rank {
        return if x.rank < y.rank { a } else { b };
    }
    if x.crowding != y.crowding {
        return if x.crowding > y.crowding { a } else { b };
    }
    if rng.random::<bool>() {
        a
    } else {
        b
    }
}

/// Uniform crossover: each gene is swapped between the children with probability `rate`.
pub fn crossover<R: Rng + ?Sized>(a: &[f64], b: &[f64], rate: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(a.len(), b.len(), "genomes differ in length");
    let mut ca = a.to_vec();
    let mut cb = b.to_vec();
    for i in 0..a.len() {
        if rng.random::<f64>() < rate {
            std::mem::swap(&mut ca[i], &mut cb[i]);
        }
    }
    (ca, cb)
}

/// Adds N(0, scale²) noise to each gene with probability `rate`.
pub fn mutate<R: Rng + ?Sized>(genome: &mut [f64], rate: f64, scale: f64, rng: &mut R) {
    for g in genome.iter_mut() {
        if rng.random::<f64>() < rate {
            let z: f64 = StandardNormal.sample(rng);
            *g += scale * z;
        }
    }
}

/// Something NSGA-II can optimize.
pub trait Problem: Sync {
    fn genome_len(&self) -> usize;
    fn init_genome(&self, rng: &mut ChaCha8Rng) -> Vec<f64>;
    /// Evaluates a batch; all genomes of one generation share `generation`.
    fn evaluate(&self, genomes: &[Vec<f64>], generation: usize) -> Result<Vec<Fitness>, EvolveError>;
}

/// Front-0 snapshot after one generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    /// Indices into that generation's population.
    pub members: Vec<usize>,
    pub fitness: Vec<Fitness>,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub population: Vec<Individual>,
    pub history: Vec<GenerationLog>,
}

impl Evolution {
    /// Rank-0 individuals of the final population.
    pub fn front(&self) -> Vec<&Individual> {
        self.population.iter().filter(|i| i.rank == 0).collect()
    }
}

fn log_front(generation: usize, pop: &[Individual]) -> GenerationLog {
    let members: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].rank == 0).collect();
    GenerationLog {
        generation,
        fitness: members.iter().map(|&i| pop[i].fitness).collect(),
        members,
    }
}

/// Keeps `n` individuals front by front, cutting the last front by crowding.
fn environmental_selection(mut merged: Vec<Individual>, n: usize) -> Vec<Individual> {
    let fronts = assign_rank_and_crowding(&mut merged);
    let mut keep: Vec<usize> = Vec::with_capacity(n);
    for front in fronts {
        if keep.len() + front.len() <= n {
            keep.extend(front);
        } else {
            let mut rest = front;
            rest.sort_by(|&a, &b| merged[b].crowding.total_cmp(&merged[a].crowding));
            keep.extend(rest.into_iter().take(n - keep.len()));
        }
        if keep.len() == n {
            break;
        }
    }
    let mut slots: Vec<Option<Individual>> = merged.into_iter().map(Some).collect();
    let mut next: Vec<Individual> = keep.into_iter().map(|i| slots[i].take().expect("index kept once")).collect();
    // Ranks and crowding are relative to the surviving population.
    assign_rank_and_crowding(&mut next);
    next
}

/// Generational NSGA-II.
///
/// `on_generation` sees every generation's population after selection
/// (generation 0 is the initial population).
pub fn evolve<P: Problem, F>(
    problem: &P,
    cfg: &Nsga2Config,
    seed: u64,
    mut on_generation: F,
) -> Result<Evolution, EvolveError>
where
    F: FnMut(usize, &[Individual]) -> Result<(), EvolveError>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let genomes: Vec<Vec<f64>> = (0..cfg.population_size).map(|_| problem.init_genome(&mut rng)).collect();
    let fitness = problem.evaluate(&genomes, 0)?;
    let mut pop: Vec<Individual> = genomes
        .into_iter()
        .zip(fitness)
        .map(|(genome, fitness)| Individual {
            genome,
            fitness,
            rank: 0,
            crowding: 0.0,
        })
        .collect();
    assign_rank_and_crowding(&mut pop);
    let mut history = vec![log_front(0, &pop)];
    on_generation(0, &pop)?;

    for generation in 1..=cfg.generations {
        let mut children = Vec::with_capacity(cfg.population_size);
        while children.len() < cfg.population_size {
            let pa = tournament_select(&pop, &mut rng);
            let pb = tournament_select(&pop, &mut rng);
            let (mut ca, mut cb) = crossover(&pop[pa].genome, &pop[pb].genome, cfg.crossover_rate, &mut rng);
            mutate(&mut ca, cfg.mutation_rate, cfg.mutation_scale, &mut rng);
            mutate(&mut cb, cfg.mutation_rate, cfg.mutation_scale, &mut rng);
            children.push(ca);
            children.push(cb);
        }
        let fitness = problem.evaluate(&children, generation)?;
        let mut merged = pop;
        merged.extend(children.into_iter().zip(fitness).map(|(genome, fitness)| Individual {
            genome,
            fitness,
            rank: 0,
            crowding: 0.0,
        }));
        pop = environmental_selection(merged, cfg.population_size);
        history.push(log_front(generation, &pop));
        on_generation(generation, &pop)?;
        log::debug!("generation {generation}: front size {}", history[generation].members.len());
    }
    Ok(Evolution {
        population: pop,
        history,
    })
}

/// Area dominated by `points` inside the box bounded by `reference` (minimization).
pub fn hypervolume_2d(points: &[[f64; 2]], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<[f64; 2]> = points
        .iter()
        .copied()
        .filter(|p| p[0] < reference[0] && p[1] < reference[1])
        .collect();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    let mut area = 0.0;
    let mut ceiling = reference[1];
    for p in pts {
        if p[1] < ceiling {
            area += (reference[0] - p[0]) * (ceiling - p[1]);
            ceiling = p[1];
        }
    }
    area
}

/// Policy search on the epidemic: genomes are Q-style networks acting greedily
/// on base observations; fitness is (mean deaths, mean € loss).
#[derive(Debug, Clone, Copy)]
pub struct EpidemicProblem {
    pub env: EnvConfig,
    pub spec: MlpSpec,
    pub n_eval: usize,
    pub seed: u64,
}

impl EpidemicProblem {
    pub fn new(env: &EnvConfig, cfg: &Nsga2Config, seed: u64) -> Self {
        let env = env.with_mode(ObservationMode::Base);
        EpidemicProblem {
            env,
            spec: MlpSpec {
                input_dim: env.mode.dim(),
                hidden_dim: cfg.hidden_dim,
                output_dim: 2,
            },
            n_eval: cfg.n_eval,
            seed,
        }
    }

    /// Episode seeds shared by every individual of a generation.
    pub fn generation_seed(&self, generation: usize) -> u64 {
        derive_seed(self.seed ^ 0xE5A2_0000, generation as u64)
    }

    pub fn policy(&self, genome: &[f64]) -> PolicyParams {
        PolicyParams::from_flat(self.spec, genome.to_vec()).expect("genome length matches spec")
    }
}

impl Problem for EpidemicProblem {
    fn genome_len(&self) -> usize {
        self.spec.param_count()
    }

    fn init_genome(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        PolicyParams::init_uniform(self.spec, rng).into_flat()
    }

    fn evaluate(&self, genomes: &[Vec<f64>], generation: usize) -> Result<Vec<Fitness>, EvolveError> {
        let seed = self.generation_seed(generation);
        // β only affects the recorded aggregate, not the fitness.
        let goal = Goal::beta(0.5).expect("unit interval");
        genomes
            .par_iter()
            .map(|g| {
                let s = evaluate_policy(&self.policy(g), &self.env, goal, self.n_eval, seed)?;
                Ok(Fitness {
                    objectives: [s.health_mean, s.eco_mean],
                    stderr: [s.health_stderr, s.eco_stderr],
                })
            })
            .collect()
    }
}

/// Runs NSGA-II on the epidemic.
pub fn evolve_epidemic<F>(env: &EnvConfig, cfg: &Nsga2Config, seed: u64, on_generation: F) -> Result<(EpidemicProblem, Evolution), EvolveError>
where
    F: FnMut(usize, &[Individual]) -> Result<(), EvolveError>,
{
    let problem = EpidemicProblem::new(env, cfg, seed);
    let evo = evolve(&problem, cfg, seed, on_generation)?;
    Ok((problem, evo))
}

/// Minimize `(g₁², (g₁ − 1)²)`; the second gene is ignored.
#[derive(Debug, Clone, Copy, Default)]
pub struct SquaresSurrogate;

impl Problem for SquaresSurrogate {
    fn genome_len(&self) -> usize {
        2
    }

    fn init_genome(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..2).map(|_| rng.random_range(-2.0..3.0)).collect()
    }

    fn evaluate(&self, genomes: &[Vec<f64>], _generation: usize) -> Result<Vec<Fitness>, EvolveError> {
        Ok(genomes
            .iter()
            .map(|g| Fitness::exact([g[0] * g[0], (g[0] - 1.0) * (g[0] - 1.0)]))
            .collect())
    }
}
