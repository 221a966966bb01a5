//! Population-based search: regularized evolution and NSGA-II.

mod constraint;
pub mod nsga2;
pub mod regevo;

use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use constraint::{apply_fitness_constraint, ConstraintSpec};
pub use nsga2::{crowding_distance, dominates, hypervolume_2d, nondominated_sort, Nsga2, Nsga2Config};
pub use regevo::{RegEvo, RegEvoConfig};

use crate::environment::EnvConfig;
use crate::error::Result;
use crate::evaluation::evaluate_fitness;
use crate::program::Program;
use crate::text::serialize;

/// Maps a program and an evaluation seed to its fitness vector (maximized).
pub type FitnessFn<'a> = dyn Fn(&Program, u64) -> Result<Vec<f64>> + Sync + 'a;

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub program: Program,
    pub fitness: Vec<f64>,
    /// Birth order within the search.
    pub age: u64,
    pub eval_episodes: usize,
}

/// Hex SHA-256 of the program's canonical text.
pub fn program_hash(program: &Program) -> String {
    let digest = Sha256::digest(serialize(program).as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontEntry {
    pub objectives: Vec<f64>,
    pub program_hash: String,
}

/// One line of the generation log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationRecord {
    pub evaluations_so_far: u64,
    /// Running per-objective maximum over everything evaluated so far.
    pub best_fitness: Vec<f64>,
    pub pareto_front: Vec<FrontEntry>,
}

impl GenerationRecord {
    pub(crate) fn new(evaluations: u64, best: &[f64], population: &[&Individual]) -> Self {
        let points: Vec<Vec<f64>> = population.iter().map(|i| i.fitness.clone()).collect();
        let front = nondominated_sort(&points).into_iter().next().unwrap_or_default();
        GenerationRecord {
            evaluations_so_far: evaluations,
            best_fitness: best.to_vec(),
            pareto_front: front
                .into_iter()
                .map(|k| FrontEntry {
                    objectives: population[k].fitness.clone(),
                    program_hash: program_hash(&population[k].program),
                })
                .collect(),
        }
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        serde_json::to_writer(&mut w, self)?;
        writeln!(w)?;
        Ok(())
    }
}

pub(crate) fn update_best(best: &mut Vec<f64>, fitness: &[f64]) {
    if best.is_empty() {
        *best = fitness.to_vec();
    } else {
        for (b, f) in best.iter_mut().zip(fitness) {
            *b = b.max(*f);
        }
    }
}

/// Lexicographic comparison of fitness vectors.
pub(crate) fn lex_better(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x != y {
            return x > y;
        }
    }
    false
}

/// Single objective: mean episode reward.
pub fn reward_objective(env: EnvConfig, episodes: usize) -> impl Fn(&Program, u64) -> Result<Vec<f64>> + Sync {
    move |p: &Program, seed: u64| Ok(vec![evaluate_fitness(p, &env, episodes, seed)?.mean_reward])
}

/// Two objectives: `(mean reward, mean steps)` after the fitness constraint.
pub fn reward_steps_objective(
    env: EnvConfig,
    episodes: usize,
    constraint: ConstraintSpec,
) -> impl Fn(&Program, u64) -> Result<Vec<f64>> + Sync {
    move |p: &Program, seed: u64| {
        let r = evaluate_fitness(p, &env, episodes, seed)?;
        let (a, b) = apply_fitness_constraint(r.mean_reward, r.mean_steps, &constraint);
        Ok(vec![a, b])
    }
}
