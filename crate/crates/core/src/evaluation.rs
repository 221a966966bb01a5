//! Episode harness: runs a program on the cartpole for several episodes.

use serde::Serialize;

use crate::environment::{Cartpole, ChangeSchedule, EnvConfig, TrajectoryRow, OBS_DIM};
use crate::error::{Error, Result};
use crate::interpreter::{start_episode, Runtime};
use crate::program::Program;
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpisodeResult {
    pub reward: f64,
    pub steps: u32,
    pub schedule: ChangeSchedule,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub mean_reward: f64,
    pub mean_steps: f64,
    pub per_episode: Vec<EpisodeResult>,
}

impl EvalResult {
    pub fn from_episodes(per_episode: Vec<EpisodeResult>) -> Self {
        let n = per_episode.len().max(1) as f64;
        EvalResult {
            mean_reward: per_episode.iter().map(|e| e.reward).sum::<f64>() / n,
            mean_steps: per_episode.iter().map(|e| f64::from(e.steps)).sum::<f64>() / n,
            per_episode,
        }
    }
}

/// Seed of episode `i` of an evaluation rooted at `master`. The program's
/// own stochastic ops use a second stream derived from the same value.
pub fn episode_seed(master: u64, i: u64) -> u64 {
    seed::derive(master, i)
}

fn runtime_seed(episode_seed: u64) -> u64 {
    seed::splitmix64(episode_seed ^ 0x5EED)
}

fn check(program: &Program) -> Result<()> {
    program.layout.check_task(OBS_DIM, 1)?;
    if let Some(v) = program.validate().first() {
        return Err(Error::InvalidProgram(v.to_string()));
    }
    Ok(())
}

/// Runs one episode. The runtime is restarted first, so it can be reused
/// across episodes. When `trajectory` is given, one row per step is pushed:
/// state and parameters before the step, the applied action and the reward.
pub fn run_episode(
    runtime: &mut Runtime<'_>,
    config: &EnvConfig,
    episode_seed: u64,
    trajectory: Option<&mut Vec<TrajectoryRow>>,
) -> EpisodeResult {
    episode_loop(runtime, config, episode_seed, trajectory, |_| {})
}

/// Like [`run_episode`], calling `inspect` after every `GetAction`.
pub fn run_episode_with<F: FnMut(&Runtime<'_>)>(
    runtime: &mut Runtime<'_>,
    config: &EnvConfig,
    episode_seed: u64,
    inspect: F,
) -> EpisodeResult {
    episode_loop(runtime, config, episode_seed, None, inspect)
}

fn episode_loop<F: FnMut(&Runtime<'_>)>(
    runtime: &mut Runtime<'_>,
    config: &EnvConfig,
    episode_seed: u64,
    mut trajectory: Option<&mut Vec<TrajectoryRow>>,
    mut inspect: F,
) -> EpisodeResult {
    runtime.restart(runtime_seed(episode_seed));
    let mut env = Cartpole::reset(config, episode_seed);
    let mut total = 0.0;
    while !env.is_done() {
        let obs = env.observe();
        let raw = runtime.get_action_scalar(&obs);
        inspect(runtime);
        let action = env.perturb(raw.clamp(-1.0, 1.0));
        let before = (env.state, env.params());
        let outcome = env.step(action).expect("loop stops at done");
        total += outcome.reward;
        if let Some(rows) = trajectory.as_deref_mut() {
            rows.push(TrajectoryRow {
                t: before.0.t,
                state: before.0,
                params: before.1,
                action: action.clamp(-1.0, 1.0),
                reward: outcome.reward,
            });
        }
    }
    EpisodeResult {
        reward: total,
        steps: env.state.t,
        schedule: env.schedule,
    }
}

/// Mean reward and steps of `program` over `episodes` episodes whose seeds
/// are derived from `master_seed` by counter.
pub fn evaluate_fitness(
    program: &Program,
    config: &EnvConfig,
    episodes: usize,
    master_seed: u64,
) -> Result<EvalResult> {
    if episodes == 0 {
        return Err(Error::Config("episodes must be at least 1".into()));
    }
    check(program)?;
    let mut rt = start_episode(program, 0);
    let per_episode = (0..episodes as u64)
        .map(|i| run_episode(&mut rt, config, episode_seed(master_seed, i), None))
        .collect();
    Ok(EvalResult::from_episodes(per_episode))
}

/// A single episode with its per-step trajectory.
pub fn rollout(
    program: &Program,
    config: &EnvConfig,
    episode_seed: u64,
) -> Result<(EpisodeResult, Vec<TrajectoryRow>)> {
    check(program)?;
    let mut rt = start_episode(program, 0);
    let mut rows = Vec::new();
    let res = run_episode(&mut rt, config, episode_seed, Some(&mut rows));
    Ok((res, rows))
}
