use std::path::{Path, PathBuf};

use adaptctl::environment::EnvConfig;
use adaptctl::search::{ConstraintSpec, Nsga2Config, RegEvoConfig};
use adaptctl::variation::MutationWeights;
use adaptctl::{GenConfig, MemoryLayout};
use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "snake_case")]
pub enum SearchConfig {
    Regevo(RegEvoConfig),
    Nsga2(Nsga2Config),
}

impl SearchConfig {
    fn episodes(&self) -> usize {
        match self {
            SearchConfig::Regevo(c) => c.episodes,
            SearchConfig::Nsga2(c) => c.episodes,
        }
    }

    fn set_episodes(&mut self, n: usize) {
        match self {
            SearchConfig::Regevo(c) => c.episodes = n,
            SearchConfig::Nsga2(c) => c.episodes = n,
        }
    }
}

fn one() -> u32 {
    1
}

/// One experiment, read from a TOML file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Maximum number of program evaluations per repeat.
    pub budget: u64,
    /// Overrides the engine's `episodes` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub episodes_per_eval: Option<usize>,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "one")]
    pub repeats: u32,
    /// Relative paths are resolved against the output root.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub search: SearchConfig,
    #[serde(default)]
    pub env: EnvConfig,
    #[serde(default)]
    pub layout: MemoryLayout,
    #[serde(default)]
    pub program: GenConfig,
    #[serde(default)]
    pub mutation: MutationWeights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_program_len: Option<usize>,
    /// Only used by NSGA-II.
    #[serde(default)]
    pub constraint: ConstraintSpec,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.resolve();
        cfg.check()?;
        Ok(cfg)
    }

    /// Folds `episodes_per_eval` into the engine config.
    pub fn resolve(&mut self) {
        match self.episodes_per_eval {
            Some(n) => self.search.set_episodes(n),
            None => self.episodes_per_eval = Some(self.search.episodes()),
        }
    }

    pub fn check(&self) -> anyhow::Result<()> {
        if self.budget < 1 {
            bail!("budget must be at least 1");
        }
        if self.repeats < 1 {
            bail!("repeats must be at least 1");
        }
        match &self.search {
            SearchConfig::Regevo(c) => c.check()?,
            SearchConfig::Nsga2(c) => c.check()?,
        }
        self.layout.check()?;
        self.layout.check_task(adaptctl::environment::OBS_DIM, 1)?;
        self.program.check()?;
        self.mutation.check()?;
        Ok(())
    }

    pub fn output_dir(&self, root: &Path, config_path: &Path) -> PathBuf {
        match &self.output_dir {
            Some(dir) => root.join(dir),
            None => root.join(config_path.file_stem().unwrap_or_default()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_engine_defaults() {
        let mut cfg: ExperimentConfig = toml::from_str(
            r#"
            budget = 500
            [search]
            algorithm = "regevo"
            "#,
        )
        .unwrap();
        cfg.resolve();
        cfg.check().unwrap();
        assert_eq!(cfg.episodes_per_eval, Some(10));
        assert_eq!(cfg.search, SearchConfig::Regevo(RegEvoConfig::default()));
        assert_eq!(cfg.repeats, 1);
    }

    #[test]
    fn episodes_override_engine() {
        let mut cfg: ExperimentConfig = toml::from_str(
            r#"
            budget = 500
            episodes_per_eval = 3
            [search]
            algorithm = "nsga2"
            parents = 10
            "#,
        )
        .unwrap();
        cfg.resolve();
        match cfg.search {
            SearchConfig::Nsga2(c) => assert_eq!((c.parents, c.episodes), (10, 3)),
            _ => panic!("wrong engine"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = [
            "budget = 1\nbugdet = 2\n[search]\nalgorithm = \"regevo\"",
            "budget = 1\n[search]\nalgorithm = \"regevo\"\npopulation = 5",
            "budget = 1\n[search]\nalgorithm = \"cmaes\"",
            "budget = 1\n[search]\nalgorithm = \"regevo\"\n[env]\nnoise = true",
        ];
        for text in bad {
            assert!(toml::from_str::<ExperimentConfig>(text).is_err(), "{text}");
        }
    }

    #[test]
    fn zero_budget_and_repeats_fail_check() {
        for text in [
            "budget = 0\n[search]\nalgorithm = \"regevo\"",
            "budget = 5\nrepeats = 0\n[search]\nalgorithm = \"regevo\"",
        ] {
            let mut cfg: ExperimentConfig = toml::from_str(text).unwrap();
            cfg.resolve();
            assert!(cfg.check().is_err());
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let mut cfg: ExperimentConfig =
            toml::from_str("budget = 100\n[search]\nalgorithm = \"nsga2\"\n[env]\nmode = \"continuous\"").unwrap();
        cfg.resolve();
        let text = toml::to_string(&cfg).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }
}
