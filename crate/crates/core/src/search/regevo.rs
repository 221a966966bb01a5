//! Regularized evolution: tournament selection with oldest-first eviction.

use std::collections::VecDeque;
use std::sync::Mutex;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{lex_better, update_best, FitnessFn, GenerationRecord, Individual};
use crate::error::{Error, Result};
use crate::program::{random_program, MemoryLayout, Program};
use crate::seed;
use crate::variation::{crossover, Mutator};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegEvoConfig {
    pub population_size: usize,
    pub tournament_size: usize,
    /// Chance of crossing the winner with a second tournament winner
    /// before mutation.
    pub crossover_prob: f64,
    pub episodes: usize,
}

impl Default for RegEvoConfig {
    fn default() -> Self {
        RegEvoConfig {
            population_size: 100,
            tournament_size: 10,
            crossover_prob: 0.1,
            episodes: 10,
        }
    }
}

impl RegEvoConfig {
    pub fn check(&self) -> Result<()> {
        if self.population_size == 0 || self.tournament_size == 0 || self.episodes == 0 {
            return Err(Error::Config(
                "population_size, tournament_size and episodes must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config("crossover_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Index of the fittest of `t` distinct uniformly drawn members (first
/// objective), ties broken uniformly.
pub fn tournament<R: Rng + ?Sized>(population: &VecDeque<Individual>, t: usize, rng: &mut R) -> usize {
    let t = t.min(population.len());
    let mut best = usize::MAX;
    let mut ties = 0;
    for k in index::sample(rng, population.len(), t) {
        let f = population[k].fitness[0];
        if best == usize::MAX || f > population[best].fitness[0] {
            best = k;
            ties = 1;
        } else if f == population[best].fitness[0] {
            ties += 1;
            if rng.random_range(0..ties) == 0 {
                best = k;
            }
        }
    }
    best
}

struct State {
    population: VecDeque<Individual>,
    evaluations: u64,
    births: u64,
    best: Vec<f64>,
    champion: Option<Individual>,
}

impl State {
    fn add(&mut self, ind: Individual, capacity: usize) {
        update_best(&mut self.best, &ind.fitness);
        if self
            .champion
            .as_ref()
            .is_none_or(|c| lex_better(&ind.fitness, &c.fitness))
        {
            self.champion = Some(ind.clone());
        }
        self.population.push_back(ind);
        while self.population.len() > capacity {
            self.population.pop_front();
        }
    }

    fn record(&self) -> GenerationRecord {
        let refs: Vec<&Individual> = self.population.iter().collect();
        GenerationRecord::new(self.evaluations, &self.best, &refs)
    }
}

pub struct RegEvo<'f> {
    pub config: RegEvoConfig,
    pub mutator: Mutator,
    fitness: &'f FitnessFn<'f>,
    layout: MemoryLayout,
    state: State,
    rng: ChaCha8Rng,
    master_seed: u64,
}

impl<'f> RegEvo<'f> {
    pub fn new(
        config: RegEvoConfig,
        mutator: Mutator,
        fitness: &'f FitnessFn<'f>,
        layout: MemoryLayout,
        master_seed: u64,
    ) -> Result<Self> {
        config.check()?;
        layout.check()?;
        Ok(RegEvo {
            config,
            mutator,
            fitness,
            layout,
            state: State {
                population: VecDeque::new(),
                evaluations: 0,
                births: 0,
                best: Vec::new(),
                champion: None,
            },
            rng: ChaCha8Rng::seed_from_u64(master_seed),
            master_seed,
        })
    }

    pub fn population(&self) -> &VecDeque<Individual> {
        &self.state.population
    }

    pub fn evaluations(&self) -> u64 {
        self.state.evaluations
    }

    pub fn best_fitness(&self) -> &[f64] {
        &self.state.best
    }

    /// Best individual ever evaluated.
    pub fn champion(&self) -> Option<&Individual> {
        self.state.champion.as_ref()
    }

    fn eval_seed(master: u64, counter: u64) -> u64 {
        seed::derive(master ^ 0xE7A1, counter)
    }

    fn score(&self, program: &Program, counter: u64) -> Vec<f64> {
        match (self.fitness)(program, Self::eval_seed(self.master_seed, counter)) {
            Ok(f) if f.iter().all(|x| x.is_finite()) => f,
            _ => vec![0.0],
        }
    }

    fn admit(&mut self, program: Program) {
        let counter = self.state.evaluations;
        let fitness = self.score(&program, counter);
        self.state.evaluations += 1;
        let ind = Individual {
            program,
            fitness,
            age: self.state.births,
            eval_episodes: self.config.episodes,
        };
        self.state.births += 1;
        self.state.add(ind, self.config.population_size);
    }

    pub fn initialize(&mut self) -> Result<GenerationRecord> {
        let programs = (0..self.config.population_size)
            .map(|_| random_program(self.layout, &self.mutator.gen, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.initialize_with(programs))
    }

    pub fn initialize_with(&mut self, programs: Vec<Program>) -> GenerationRecord {
        for p in programs {
            self.admit(p);
        }
        self.state.record()
    }

    fn breed<R: Rng + ?Sized>(
        config: &RegEvoConfig,
        mutator: &Mutator,
        population: &VecDeque<Individual>,
        rng: &mut R,
    ) -> Program {
        let a = tournament(population, config.tournament_size, rng);
        let parent = if rng.random_bool(config.crossover_prob) {
            let b = tournament(population, config.tournament_size, rng);
            crossover(&population[a].program, &population[b].program, rng)
                .expect("population shares one layout")
        } else {
            population[a].program.clone()
        };
        mutator.mutate(&parent, rng)
    }

    /// One select / mutate / evaluate / insert / evict cycle.
    pub fn step(&mut self) -> Result<()> {
        if self.state.population.is_empty() {
            return Err(Error::Config("population not initialized".into()));
        }
        let child = Self::breed(&self.config, &self.mutator, &self.state.population, &mut self.rng);
        self.admit(child);
        Ok(())
    }

    fn check_budget(&self, budget: u64) -> Result<()> {
        if budget < self.config.population_size as u64 {
            return Err(Error::Config(format!(
                "budget {budget} is below the population size {}",
                self.config.population_size
            )));
        }
        Ok(())
    }

    /// Serial, fully reproducible run. A record is emitted after the initial
    /// population, every `population_size` evaluations, and at the end.
    pub fn run<F>(&mut self, budget: u64, mut on_generation: F) -> Result<()>
    where
        F: FnMut(&GenerationRecord) -> Result<()>,
    {
        self.check_budget(budget)?;
        if self.state.population.is_empty() {
            let rec = self.initialize()?;
            on_generation(&rec)?;
        }
        let every = self.config.population_size as u64;
        while self.state.evaluations < budget {
            self.step()?;
            if self.state.evaluations % every == 0 || self.state.evaluations == budget {
                on_generation(&self.state.record())?;
            }
        }
        Ok(())
    }

    /// Asynchronous run with `workers` threads sharing the population. Each
    /// worker selects under the lock, breeds and evaluates outside it, then
    /// inserts under the lock. Not reproducible across runs.
    pub fn run_parallel<F>(&mut self, budget: u64, workers: usize, mut on_generation: F) -> Result<()>
    where
        F: FnMut(&GenerationRecord) -> Result<()>,
    {
        self.check_budget(budget)?;
        if self.state.population.is_empty() {
            let rec = self.initialize()?;
            on_generation(&rec)?;
        }
        let every = self.config.population_size as u64;
        let capacity = self.config.population_size;
        let started = Mutex::new(self.state.evaluations);
        let shared = Mutex::new((
            std::mem::replace(
                &mut self.state,
                State {
                    population: VecDeque::new(),
                    evaluations: 0,
                    births: 0,
                    best: Vec::new(),
                    champion: None,
                },
            ),
            Vec::<GenerationRecord>::new(),
        ));
        let (config, mutator, fitness, master) =
            (&self.config, &self.mutator, self.fitness, self.master_seed);
        std::thread::scope(|scope| {
            for w in 0..workers.max(1) {
                let (started, shared) = (&started, &shared);
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(master ^ 0x3017, w as u64));
                    loop {
                        let (child, counter) = {
                            let mut n = started.lock().expect("lock");
                            if *n >= budget {
                                break;
                            }
                            *n += 1;
                            let guard = shared.lock().expect("lock");
                            (Self::breed(config, mutator, &guard.0.population, &mut rng), *n - 1)
                        };
                        let f = match fitness(&child, Self::eval_seed(master, counter)) {
                            Ok(f) if f.iter().all(|x| x.is_finite()) => f,
                            _ => vec![0.0],
                        };
                        let mut guard = shared.lock().expect("lock");
                        let (state, records) = &mut *guard;
                        let ind = Individual {
                            program: child,
                            fitness: f,
                            age: state.births,
                            eval_episodes: config.episodes,
                        };
                        state.births += 1;
                        state.evaluations += 1;
                        state.add(ind, capacity);
                        if state.evaluations % every == 0 || state.evaluations == budget {
                            records.push(state.record());
                        }
                    }
                });
            }
        });
        let (state, records) = shared.into_inner().expect("lock");
        self.state = state;
        for r in &records {
            on_generation(r)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::GenConfig;
    use crate::variation::MutationWeights;

    fn layout() -> MemoryLayout {
        MemoryLayout {
            n_scalar: 2,
            n_vector: 2,
            n_matrix: 1,
            n_index: 1,
            vec_dim: 2,
            mat_dim: 2,
        }
    }

    fn first_scalar(p: &Program, _s: u64) -> Result<Vec<f64>> {
        Ok(vec![p.init.scalars[0]])
    }

    fn engine<'f>(f: &'f FitnessFn<'f>, p: usize, t: usize, seed: u64) -> RegEvo<'f> {
        let mutator = Mutator::new(
            MutationWeights::default(),
            GenConfig {
                max_instructions: 3,
                max_cadfs: 1,
                ..GenConfig::default()
            },
            None,
        )
        .unwrap();
        let config = RegEvoConfig {
            population_size: p,
            tournament_size: t,
            ..RegEvoConfig::default()
        };
        RegEvo::new(config, mutator, f, layout(), seed).unwrap()
    }

    fn ind(f: f64, age: u64) -> Individual {
        Individual {
            program: Program::empty(layout()),
            fitness: vec![f],
            age,
            eval_episodes: 1,
        }
    }

    #[test]
    fn full_tournament_finds_global_best() {
        let pop: VecDeque<Individual> = (0..30).map(|k| ind(((k * 7) % 30) as f64, k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let k = tournament(&pop, 30, &mut rng);
            assert_eq!(pop[k].fitness[0], 29.0);
        }
    }

    #[test]
    fn ties_are_random() {
        let pop: VecDeque<Individual> = (0..4).map(|k| ind(1.0, k)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut seen = [0; 4];
        for _ in 0..400 {
            seen[tournament(&pop, 4, &mut rng)] += 1;
        }
        assert!(seen.iter().all(|&c| c > 50), "{seen:?}");
    }

    #[test]
    fn size_one_population_replaces() {
        let mut e = engine(&first_scalar, 1, 1, 0);
        e.initialize().unwrap();
        for _ in 0..10 {
            let before = e.population()[0].age;
            e.step().unwrap();
            assert_eq!(e.population().len(), 1);
            assert_eq!(e.population()[0].age, before + 1);
        }
    }

    #[test]
    fn hill_climbs_first_constant() {
        let mut e = engine(&first_scalar, 20, 5, 1);
        let mut curve = Vec::new();
        e.run(5000, |r| {
            curve.push(r.best_fitness[0]);
            Ok(())
        })
        .unwrap();
        assert!(curve.windows(2).all(|w| w[0] <= w[1]));
        // init constants are uniform in [-1, 1]: the 99th percentile is 0.98
        assert!(*curve.last().unwrap() > 0.98);
        assert_eq!(e.evaluations(), 5000);
        assert_eq!(e.population().len(), 20);
    }

    #[test]
    fn serial_runs_repeat() {
        let run = || {
            let mut e = engine(&first_scalar, 10, 3, 7);
            let mut log = Vec::new();
            e.run(300, |r| {
                log.push(serde_json::to_string(r).unwrap());
                Ok(())
            })
            .unwrap();
            log
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn parallel_run_spends_budget() {
        let mut e = engine(&first_scalar, 10, 3, 7);
        let mut n = 0;
        e.run_parallel(200, 3, |_| {
            n += 1;
            Ok(())
        })
        .unwrap();
        assert_eq!(e.evaluations(), 200);
        assert_eq!(e.population().len(), 10);
        assert_eq!(n, 20);
    }

    #[test]
    fn budget_below_population_rejected() {
        let mut e = engine(&first_scalar, 10, 3, 7);
        assert!(e.run(5, |_| Ok(())).is_err());
    }
}
