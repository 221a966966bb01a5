//! NSGA-II over programs (all objectives maximized).

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{lex_better, update_best, FitnessFn, GenerationRecord, Individual};
use crate::error::{Error, Result};
use crate::program::{random_program, MemoryLayout, Program};
use crate::seed;
use crate::variation::{crossover, Mutator};

/// `a` is at least as good everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return false;
        }
        strictly |= x > y;
    }
    strictly
}

/// Pareto fronts, best first; indices within a front are ascending.
pub fn nondominated_sort(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by = vec![0usize; n];
    let mut dominating: Vec<Vec<usize>> = vec![Vec::new(); n];
    for p in 0..n {
        for q in p + 1..n {
            if dominates(&points[p], &points[q]) {
                dominating[p].push(q);
                dominated_by[q] += 1;
            } else if dominates(&points[q], &points[p]) {
                dominating[q].push(p);
                dominated_by[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&p| dominated_by[p] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominating[p] {
                dominated_by[q] -= 1;
                if dominated_by[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance within one front. Boundary points per objective get
/// `+inf`; interior points add the range-normalized gap between their
/// neighbours, and objectives with zero range contribute nothing.
pub fn crowding_distance(front: &[Vec<f64>]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut dist = vec![0.0; n];
    let n_obj = front[0].len();
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..n_obj {
        order.sort_by(|&i, &j| front[i][m].total_cmp(&front[j][m]));
        let lo = front[order[0]][m];
        let hi = front[order[n - 1]][m];
        dist[order[0]] = f64::INFINITY;
        dist[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for k in 1..n - 1 {
            dist[order[k]] += (front[order[k + 1]][m] - front[order[k - 1]][m]) / range;
        }
    }
    dist
}

/// Area dominated by `points` and bounded below by `reference`.
pub fn hypervolume_2d(points: &[Vec<f64>], reference: [f64; 2]) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .map(|p| (p[0], p[1]))
        .filter(|&(x, y)| x > reference[0] && y > reference[1])
        .collect();
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut hv = 0.0;
    let mut top = reference[1];
    for (x, y) in pts {
        if y > top {
            hv += (x - reference[0]) * (y - top);
            top = y;
        }
    }
    hv
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Nsga2Config {
    pub parents: usize,
    pub children: usize,
    pub crossover_prob: f64,
    pub episodes: usize,
}

impl Default for Nsga2Config {
    fn default() -> Self {
        Nsga2Config {
            parents: 100,
            children: 1000,
            crossover_prob: 1.0,
            episodes: 32,
        }
    }
}

impl Nsga2Config {
    pub fn check(&self) -> Result<()> {
        if self.parents < 2 || self.children == 0 || self.episodes == 0 {
            return Err(Error::Config(
                "nsga2 needs at least 2 parents, 1 child and 1 episode".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Config("crossover_prob must be in [0, 1]".into()));
        }
        Ok(())
    }
}

const N_OBJECTIVES: usize = 2;

pub struct Nsga2<'f> {
    pub config: Nsga2Config,
    pub mutator: Mutator,
    fitness: &'f FitnessFn<'f>,
    layout: MemoryLayout,
    pub population: Vec<Individual>,
    rank: Vec<usize>,
    crowding: Vec<f64>,
    rng: ChaCha8Rng,
    master_seed: u64,
    evaluations: u64,
    births: u64,
    best: Vec<f64>,
    champion: Option<Individual>,
    parallel: bool,
}

impl<'f> Nsga2<'f> {
    pub fn new(
        config: Nsga2Config,
        mutator: Mutator,
        fitness: &'f FitnessFn<'f>,
        layout: MemoryLayout,
        master_seed: u64,
        parallel: bool,
    ) -> Result<Self> {
        config.check()?;
        layout.check()?;
        Ok(Nsga2 {
            config,
            mutator,
            fitness,
            layout,
            population: Vec::new(),
            rank: Vec::new(),
            crowding: Vec::new(),
            rng: ChaCha8Rng::seed_from_u64(master_seed),
            master_seed,
            evaluations: 0,
            births: 0,
            best: Vec::new(),
            champion: None,
            parallel,
        })
    }

    pub fn evaluations(&self) -> u64 {
        self.evaluations
    }

    /// Running per-objective maximum over every evaluation.
    pub fn best_fitness(&self) -> &[f64] {
        &self.best
    }

    /// Best individual ever evaluated, lexicographically by fitness.
    pub fn champion(&self) -> Option<&Individual> {
        self.champion.as_ref()
    }

    /// Evaluates programs with seeds drawn in order; failures score zero.
    fn evaluate_all(&mut self, programs: Vec<Program>) -> Vec<Individual> {
        let base = self.evaluations;
        let master = self.master_seed;
        let fitness = self.fitness;
        let eval = |(k, p): (usize, Program)| {
            let s = seed::derive(master ^ 0xE7A1, base + k as u64);
            let f = match fitness(&p, s) {
                Ok(f) if f.iter().all(|x| x.is_finite()) => f,
                _ => vec![0.0; N_OBJECTIVES],
            };
            (p, f)
        };
        let scored: Vec<(Program, Vec<f64>)> = if self.parallel {
            programs.into_par_iter().enumerate().map(eval).collect()
        } else {
            programs.into_iter().enumerate().map(eval).collect()
        };
        self.evaluations += scored.len() as u64;
        let episodes = self.config.episodes;
        scored
            .into_iter()
            .map(|(program, fitness)| {
                update_best(&mut self.best, &fitness);
                let ind = Individual {
                    program,
                    fitness,
                    age: self.births,
                    eval_episodes: episodes,
                };
                self.births += 1;
                if self
                    .champion
                    .as_ref()
                    .is_none_or(|c| lex_better(&ind.fitness, &c.fitness))
                {
                    self.champion = Some(ind.clone());
                }
                ind
            })
            .collect()
    }

    fn record(&self) -> GenerationRecord {
        let refs: Vec<&Individual> = self.population.iter().collect();
        GenerationRecord::new(self.evaluations, &self.best, &refs)
    }

    /// Random initial parents.
    pub fn initialize(&mut self) -> Result<GenerationRecord> {
        let programs = (0..self.config.parents)
            .map(|_| random_program(self.layout, &self.mutator.gen, &mut self.rng))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.initialize_with(programs))
    }

    pub fn initialize_with(&mut self, programs: Vec<Program>) -> GenerationRecord {
        self.population = self.evaluate_all(programs);
        self.rerank();
        self.record()
    }

    fn rerank(&mut self) {
        let points: Vec<Vec<f64>> = self.population.iter().map(|i| i.fitness.clone()).collect();
        self.rank = vec![0; points.len()];
        self.crowding = vec![0.0; points.len()];
        for (r, front) in nondominated_sort(&points).into_iter().enumerate() {
            let pts: Vec<Vec<f64>> = front.iter().map(|&k| points[k].clone()).collect();
            for (&k, d) in front.iter().zip(crowding_distance(&pts)) {
                self.rank[k] = r;
                self.crowding[k] = d;
            }
        }
    }

    /// Binary tournament on (rank, crowding), ties broken at random.
    fn tournament(&mut self) -> usize {
        let pick = index::sample(&mut self.rng, self.population.len(), 2);
        let (a, b) = (pick.index(0), pick.index(1));
        let key = |k: usize| (self.rank[k], self.crowding[k]);
        let (ka, kb) = (key(a), key(b));
        if ka.0 != kb.0 {
            return if ka.0 < kb.0 { a } else { b };
        }
        if ka.1 != kb.1 {
            return if ka.1 > kb.1 { a } else { b };
        }
        if self.rng.random_bool(0.5) {
            a
        } else {
            b
        }
    }

    /// Breeds up to `config.children` children (fewer if `max_children` is
    /// smaller), then keeps the best `config.parents` of parents and
    /// children by rank and crowding distance.
    pub fn generation(&mut self, max_children: usize) -> Result<GenerationRecord> {
        if self.population.is_empty() {
            return Err(Error::Config("population not initialized".into()));
        }
        let n_children = self.config.children.min(max_children);
        let mut programs = Vec::with_capacity(n_children);
        for _ in 0..n_children {
            let a = self.tournament();
            let mut child = if self.rng.random_bool(self.config.crossover_prob) {
                let b = self.tournament();
                crossover(&self.population[a].program, &self.population[b].program, &mut self.rng)?
            } else {
                self.population[a].program.clone()
            };
            child = self.mutator.mutate(&child, &mut self.rng);
            programs.push(child);
        }
        let children = self.evaluate_all(programs);

        let mut pool = std::mem::take(&mut self.population);
        pool.extend(children);
        let points: Vec<Vec<f64>> = pool.iter().map(|i| i.fitness.clone()).collect();
        let mut keep = Vec::with_capacity(self.config.parents);
        for front in nondominated_sort(&points) {
            if keep.len() + front.len() <= self.config.parents {
                keep.extend(front);
            } else {
                let pts: Vec<Vec<f64>> = front.iter().map(|&k| points[k].clone()).collect();
                let dist = crowding_distance(&pts);
                let mut order: Vec<usize> = (0..front.len()).collect();
                order.sort_by(|&i, &j| dist[j].total_cmp(&dist[i]));
                let room = self.config.parents - keep.len();
                keep.extend(order.into_iter().take(room).map(|i| front[i]));
            }
            if keep.len() == self.config.parents {
                break;
            }
        }
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
        self.population = keep.into_iter().map(|k| slots[k].take().expect("unique")).collect();
        self.rerank();
        Ok(self.record())
    }

    /// Initializes if needed, then runs generations until `budget`
    /// evaluations have been spent.
    pub fn run<F>(&mut self, budget: u64, mut on_generation: F) -> Result<()>
    where
        F: FnMut(&GenerationRecord) -> Result<()>,
    {
        if budget < self.config.parents as u64 {
            return Err(Error::Config(format!(
                "budget {budget} is below the parent population size {}",
                self.config.parents
            )));
        }
        if self.population.is_empty() {
            let rec = self.initialize()?;
            on_generation(&rec)?;
        }
        while self.evaluations < budget {
            let rec = self.generation((budget - self.evaluations) as usize)?;
            on_generation(&rec)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::program::GenConfig;
    use crate::variation::MutationWeights;

    fn brute_force(points: &[Vec<f64>]) -> Vec<Vec<usize>> {
        let mut left: Vec<usize> = (0..points.len()).collect();
        let mut fronts = Vec::new();
        while !left.is_empty() {
            let front: Vec<usize> = left
                .iter()
                .copied()
                .filter(|&p| !left.iter().any(|&q| dominates(&points[q], &points[p])))
                .collect();
            left.retain(|p| !front.contains(p));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn small_fronts() {
        let pts = vec![vec![1.0, 2.0], vec![2.0, 1.0], vec![0.0, 0.0]];
        assert_eq!(nondominated_sort(&pts), vec![vec![0, 1], vec![2]]);
        assert_eq!(nondominated_sort(&[vec![3.0, 3.0]]), vec![vec![0]]);
    }

    #[test]
    fn matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            let n = rng.random_range(1..200);
            let pts: Vec<Vec<f64>> = (0..n)
                .map(|_| vec![rng.random_range(0..20) as f64, rng.random_range(0..20) as f64])
                .collect();
            assert_eq!(nondominated_sort(&pts), brute_force(&pts));
        }
    }

    #[test]
    fn crowding_hand_values() {
        let d = crowding_distance(&[vec![0.0, 2.0], vec![1.0, 1.0], vec![2.0, 0.0]]);
        assert_eq!(d[1], 2.0);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        assert!(crowding_distance(&[vec![0.0, 1.0], vec![1.0, 0.0]]).iter().all(|d| d.is_infinite()));
        let same = crowding_distance(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert_eq!(same.iter().filter(|d| **d == 0.0).count(), 2);
    }

    #[test]
    fn hypervolume_of_staircase() {
        let hv = hypervolume_2d(&[vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]], [0.0, 0.0]);
        assert_eq!(hv, 6.0);
    }

    /// Objectives (x, 1 - x) where x = clamp(s0 init, 0, 1).
    fn toy(p: &Program, _seed: u64) -> Result<Vec<f64>> {
        let x = p.init.scalars[0].clamp(0.0, 1.0);
        Ok(vec![x, 1.0 - x])
    }

    fn small_layout() -> MemoryLayout {
        MemoryLayout {
            n_scalar: 2,
            n_vector: 2,
            n_matrix: 1,
            n_index: 1,
            vec_dim: 2,
            mat_dim: 2,
        }
    }

    fn engine<'f>(f: &'f FitnessFn<'f>, seed: u64) -> Nsga2<'f> {
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
        let config = Nsga2Config {
            parents: 20,
            children: 60,
            ..Nsga2Config::default()
        };
        Nsga2::new(config, mutator, f, small_layout(), seed, false).unwrap()
    }

    #[test]
    fn size_invariant_and_hypervolume() {
        let mut e = engine(&toy, 1);
        e.initialize().unwrap();
        let hv = |e: &Nsga2| {
            let pts: Vec<Vec<f64>> = e.population.iter().map(|i| i.fitness.clone()).collect();
            hypervolume_2d(&pts, [0.0, 0.0])
        };
        let start = hv(&e);
        for _ in 0..50 {
            e.generation(usize::MAX).unwrap();
            assert_eq!(e.population.len(), 20);
        }
        assert!(hv(&e) >= start);
    }

    #[test]
    fn dominating_individual_survives() {
        fn f(p: &Program, _s: u64) -> Result<Vec<f64>> {
            Ok(if p.init.scalars[1] == 42.0 { vec![10.0, 10.0] } else { vec![p.init.scalars[0], 0.0] })
        }
        let mut e = engine(&f, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut programs: Vec<Program> = (0..20)
            .map(|_| random_program(small_layout(), &e.mutator.gen, &mut rng).unwrap())
            .collect();
        programs[7].init.scalars[1] = 42.0;
        e.initialize_with(programs);
        for _ in 0..10 {
            e.generation(usize::MAX).unwrap();
            assert!(e.population.iter().any(|i| i.fitness == vec![10.0, 10.0]));
        }
    }

    #[test]
    fn identical_fitness_keeps_size() {
        fn flat(_p: &Program, _s: u64) -> Result<Vec<f64>> {
            Ok(vec![1.0, 1.0])
        }
        let mut e = engine(&flat, 4);
        e.initialize().unwrap();
        e.generation(usize::MAX).unwrap();
        assert_eq!(e.population.len(), 20);
    }

    #[test]
    fn failures_score_zero() {
        fn boom(_p: &Program, _s: u64) -> Result<Vec<f64>> {
            Err(Error::Evaluation("boom".into()))
        }
        let mut e = engine(&boom, 5);
        e.initialize().unwrap();
        assert!(e.population.iter().all(|i| i.fitness == vec![0.0, 0.0]));
    }

    #[test]
    fn budget_is_exact_and_serial_runs_repeat() {
        let run = || {
            let mut e = engine(&toy, 9);
            let mut log = Vec::new();
            e.run(150, |r| {
                log.push(serde_json::to_string(r).unwrap());
                Ok(())
            })
            .unwrap();
            (e.evaluations(), log)
        };
        let (n, a) = run();
        assert_eq!(n, 150);
        assert_eq!(a, run().1);
    }
}
