//! `adaptctl`: run evolution experiments and inspect control programs.

mod config;
mod evolve;
mod verify;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptctl::analysis::{baseline_complexity, count_complexity, trace_registers, Arch};
use adaptctl::environment::{EnvConfig, ScheduleMode, Task};
use adaptctl::evaluation::evaluate_fitness;
use adaptctl::seed;
use adaptctl::text::deserialize;
use adaptctl::{Address, Program};
use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "adaptctl", version, about = "Evolve and analyse register-machine control programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the search described by a TOML experiment file.
    Evolve {
        config: PathBuf,
        /// Output directory; defaults to `<root>/<output_dir or config stem>`.
        #[arg(long, short)]
        output: Option<PathBuf>,
        /// Root for relative output directories.
        #[arg(long, env = "ADAPTCTL_OUTPUT_ROOT", default_value = "runs")]
        output_root: PathBuf,
        /// Single-threaded, bit-reproducible run.
        #[arg(long)]
        serial: bool,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, short)]
        quiet: bool,
    },
    /// Mean reward of a program over a task matrix, as CSV.
    Test {
        program: PathBuf,
        /// Comma-separated task names; an empty string gives an empty matrix.
        #[arg(long, default_value = "Stationary,Force,Damping,Track Angle,All")]
        tasks: String,
        #[arg(long, value_enum, default_value_t = Mode::Sudden)]
        mode: Mode,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        env: EnvFlags,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Parameter and FLOP counts as JSON.
    Analyze {
        program: PathBuf,
        #[arg(long, default_value_t = 4)]
        obs_dim: usize,
        #[arg(long, default_value_t = 1)]
        act_dim: usize,
        /// Also report MLP and LSTM baselines with this hidden width.
        #[arg(long)]
        baselines: Option<u64>,
    },
    /// Per-step register values over whole episodes.
    Trace {
        program: PathBuf,
        /// Comma-separated registers, e.g. `s0,s1,v2`.
        #[arg(long, default_value = "s0,s1,s2,s3")]
        watch: String,
        #[arg(long, default_value = "All")]
        task: String,
        #[arg(long, value_enum, default_value_t = Mode::Continuous)]
        mode: Mode,
        #[arg(long, default_value_t = 1)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[command(flatten)]
        env: EnvFlags,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Reload and cross-check every artifact of an `evolve` output directory.
    Verify { dir: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Sudden,
    Continuous,
}

impl From<Mode> for ScheduleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Sudden => ScheduleMode::Sudden,
            Mode::Continuous => ScheduleMode::Continuous,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Jsonl,
}

#[derive(clap::Args)]
struct EnvFlags {
    /// Hide position and angle from the policy.
    #[arg(long)]
    po: bool,
    /// Add drifting actuator noise.
    #[arg(long)]
    noise: bool,
    #[arg(long)]
    noise_sigma: Option<f64>,
}

impl EnvFlags {
    fn apply(&self, mut env: EnvConfig) -> EnvConfig {
        env.po = self.po;
        env.actuator_noise = self.noise;
        if let Some(s) = self.noise_sigma {
            env.noise_sigma = s;
        }
        env
    }
}

fn load_program(path: &Path) -> anyhow::Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    deserialize(&text).with_context(|| format!("parsing {}", path.display()))
}

fn sink(output: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match output {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn parse_tasks(list: &str) -> anyhow::Result<Vec<Task>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Task>().map_err(Into::into))
        .collect()
}

/// Population standard deviation.
fn stats(xs: &[f64]) -> (f64, f64, f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let min = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, var.sqrt(), min, max)
}

fn task_seed(master: u64, task: Task) -> u64 {
    let k = Task::ALL.iter().position(|t| *t == task).unwrap_or(0);
    seed::derive(master, k as u64)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Evolve { config, output, output_root, serial, workers, quiet } => {
            let cfg = ExperimentConfig::load(&config)?;
            let out = output.unwrap_or_else(|| cfg.output_dir(&output_root, &config));
            let workers = workers
                .or_else(|| std::thread::available_parallelism().ok().map(|n| n.get()))
                .unwrap_or(1)
                .max(1);
            let opts = evolve::EvolveOptions { serial, workers, quiet };
            let manifest = evolve::run(&cfg, &out, &opts)?;
            for r in &manifest.repeats {
                println!("repeat {}: best {:?} after {} evaluations", r.repeat, r.best_fitness, r.evaluations);
            }
            println!("wrote {}", out.display());
        }
        Command::Test { program, tasks, mode, episodes, seed, env, output } => {
            let program = load_program(&program)?;
            let tasks = parse_tasks(&tasks)?;
            let mut w = sink(output.as_deref())?;
            writeln!(w, "task,mean,std,min,max")?;
            for task in tasks {
                let cfg = env.apply(task.config(mode.into()));
                let r = evaluate_fitness(&program, &cfg, episodes, task_seed(seed, task))?;
                let rewards: Vec<f64> = r.per_episode.iter().map(|e| e.reward).collect();
                let (mean, std, min, max) = stats(&rewards);
                writeln!(w, "{},{mean},{std},{min},{max}", task.name())?;
            }
            w.flush()?;
        }
        Command::Analyze { program, obs_dim, act_dim, baselines } => {
            let path = program;
            let program = load_program(&path)?;
            let c = count_complexity(&program, obs_dim, act_dim);
            let mut report = serde_json::json!({
                "program": path.display().to_string(),
                "parameter_count": c.parameter_count,
                "flops_per_step": c.flops_per_step,
                "instructions": {
                    "get_action": program.get_action.len(),
                    "cadfs": program.cadfs.iter().map(Vec::len).collect::<Vec<_>>(),
                },
                "violations": program.validate().iter().map(ToString::to_string).collect::<Vec<_>>(),
            });
            if let Some(d) = baselines {
                let (i, o) = (obs_dim as u64, act_dim as u64);
                let mlp = baseline_complexity(Arch::Mlp, i, d, o)?;
                let lstm = baseline_complexity(Arch::Lstm, i, d, o)?;
                report["baselines"] = serde_json::json!({
                    "hidden": d,
                    "mlp": { "parameter_count": mlp.parameter_count, "flops_per_step": mlp.flops_per_step },
                    "lstm": { "parameter_count": lstm.parameter_count, "flops_per_step": lstm.flops_per_step },
                });
            }
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Trace { program, watch, task, mode, episodes, seed, format, env, output } => {
            let program = load_program(&program)?;
            let watch: Vec<Address> = watch
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<Address>().map_err(anyhow::Error::msg))
                .collect::<Result<_, _>>()?;
            let task: Task = task.parse()?;
            let cfg = env.apply(task.config(mode.into()));
            let trace = trace_registers(&program, &cfg, &watch, episodes, seed)?;
            let mut w = sink(output.as_deref())?;
            match format {
                Format::Csv => trace.write_csv(&mut w)?,
                Format::Jsonl => trace.write_jsonl(&mut w)?,
            }
            w.flush()?;
        }
        Command::Verify { dir } => {
            for line in verify::verify(&dir)? {
                println!("{line}");
            }
            println!("ok");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let err = serde_json::json!({
                "error": e.to_string(),
                "causes": e.chain().skip(1).map(ToString::to_string).collect::<Vec<_>>(),
            });
            eprintln!("{err}");
            ExitCode::FAILURE
        }
    }
}
