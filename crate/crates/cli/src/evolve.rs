use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use adaptctl::search::{
    program_hash, reward_objective, reward_steps_objective, FitnessFn, GenerationRecord, Individual, Nsga2,
    RegEvo,
};
use adaptctl::seed;
use adaptctl::text::serialize;
use adaptctl::variation::Mutator;
use anyhow::Context;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SearchConfig};

pub const MANIFEST: &str = "manifest.json";
pub const GENERATIONS: &str = "generations.jsonl";
pub const BEST: &str = "best.prog";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub repeat: u32,
    /// Master seed handed to the engine for this repeat.
    pub seed: u64,
    pub evaluations: u64,
    pub best_fitness: Vec<f64>,
    pub champion_fitness: Vec<f64>,
    pub champion_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub serial: bool,
    pub workers: usize,
    pub config: ExperimentConfig,
    pub repeats: Vec<RepeatSummary>,
}

pub fn repeat_dir(out: &Path, k: u32) -> PathBuf {
    out.join(format!("repeat_{k}"))
}

pub fn repeat_seed(master: u64, k: u32) -> u64 {
    seed::derive(master, u64::from(k))
}

pub struct EvolveOptions {
    pub serial: bool,
    pub workers: usize,
    pub quiet: bool,
}

pub fn run(config: &ExperimentConfig, out: &Path, opts: &EvolveOptions) -> anyhow::Result<Manifest> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))?;
    for k in 0..config.repeats {
        let dir = repeat_dir(out, k);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    // fail before any search work if the directory is not writable
    let probe = out.join(MANIFEST);
    File::create(&probe).with_context(|| format!("writing {}", probe.display()))?;

    let episodes = config.episodes_per_eval.unwrap_or(1);
    let fitness: Box<FitnessFn<'static>> = match config.search {
        SearchConfig::Regevo(_) => Box::new(reward_objective(config.env.clone(), episodes)),
        SearchConfig::Nsga2(_) => {
            Box::new(reward_steps_objective(config.env.clone(), episodes, config.constraint))
        }
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(if opts.serial { 1 } else { opts.workers })
        .build()?;
    let mut repeats = Vec::new();
    for k in 0..config.repeats {
        let seed = repeat_seed(config.master_seed, k);
        let dir = repeat_dir(out, k);
        let mut log = BufWriter::new(File::create(dir.join(GENERATIONS))?);
        let mut on_generation = |rec: &GenerationRecord| -> adaptctl::Result<()> {
            if !opts.quiet {
                let best: Vec<String> = rec.best_fitness.iter().map(|f| format!("{f:.2}")).collect();
                eprintln!("repeat {k}: {} evaluations, best [{}]", rec.evaluations_so_far, best.join(", "));
            }
            rec.write_jsonl(&mut log)
        };
        let mutator = Mutator::new(config.mutation.clone(), config.program.clone(), config.max_program_len)?;
        let (evaluations, best, champion): (u64, Vec<f64>, Individual) = match &config.search {
            SearchConfig::Regevo(c) => {
                let mut e = RegEvo::new(c.clone(), mutator, fitness.as_ref(), config.layout, seed)?;
                if opts.serial {
                    e.run(config.budget, &mut on_generation)?;
                } else {
                    e.run_parallel(config.budget, opts.workers, &mut on_generation)?;
                }
                (e.evaluations(), e.best_fitness().to_vec(), e.champion().cloned().context("no champion")?)
            }
            SearchConfig::Nsga2(c) => {
                let mut e = Nsga2::new(c.clone(), mutator, fitness.as_ref(), config.layout, seed, !opts.serial)?;
                pool.install(|| e.run(config.budget, &mut on_generation))?;
                (e.evaluations(), e.best_fitness().to_vec(), e.champion().cloned().context("no champion")?)
            }
        };
        log.flush()?;
        fs::write(dir.join(BEST), serialize(&champion.program))?;
        repeats.push(RepeatSummary {
            repeat: k,
            seed,
            evaluations,
            best_fitness: best,
            champion_fitness: champion.fitness.clone(),
            champion_hash: program_hash(&champion.program),
        });
    }

    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        serial: opts.serial,
        workers: if opts.serial { 1 } else { opts.workers },
        config: config.clone(),
        repeats,
    };
    let mut f = BufWriter::new(File::create(out.join(MANIFEST))?);
    serde_json::to_writer_pretty(&mut f, &manifest)?;
    writeln!(f)?;
    f.flush()?;
    Ok(manifest)
}
